// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Returns nonzero if any criterion fails.
//
// Usage: acceptance [--configs DIR] [--only N[,M...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "xlbeam/experiment.hpp"
#include "xlbeam/gradcheck.hpp"
#include "xlbeam/protocol.hpp"
#include "xlbeam/training.hpp"

using namespace xlbeam;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double g_power_checks = 0;
double g_power_violations = 0;

void record_power(const ComplexMatrix& f_rf, const ComplexMatrix& f_bb,
                  double pt) {
  g_power_checks += 1;
  const double p = frobenius_norm_sq(matmul(f_rf, f_bb));
  if (std::abs(p - pt) > 1e-9 * pt) g_power_violations += 1;
}

ComplexMatrix random_channel(std::size_t m, std::size_t k, std::uint64_t s) {
  RngStream rng = RngStream::derive(s, "acc-chan");
  return ComplexMatrix::random_gaussian(m, k, 1.0, rng);
}

// Criterion 1 oracle: projected-gradient minimization over (F_BB, beta) with
// power projection; independent of the closed form it checks.
double minimize_sum_mse(const ComplexMatrix& h, const ComplexMatrix& f_rf,
                        double pt, double sigma2, std::size_t steps,
                        std::uint64_t seed) {
  const std::size_t n_rf = f_rf.cols(), k = h.cols();
  const ComplexMatrix a = matmul(hermitian(f_rf), h);
  const ComplexMatrix aah = matmul(a, hermitian(a));
  RngStream rng = RngStream::derive(seed, "acc-fbb");
  ComplexMatrix f = ComplexMatrix::random_gaussian(n_rf, k, 0.1, rng);
  double beta = 1.0;
  auto project = [&](ComplexMatrix& fb) {
    const double p = frobenius_norm_sq(matmul(f_rf, fb));
    if (p > pt) fb = scale(fb, std::sqrt(pt / p));
  };
  project(f);
  double obj = sum_mse(h, f_rf, f, beta, sigma2);
  double step = 0.5;
  for (std::size_t it = 0; it < steps; ++it) {
    const double ib = 1.0 / beta;
    const ComplexMatrix grad_f =
        scale(sub(scale(matmul(aah, f), ib * ib), scale(a, ib)), 2.0);
    const ComplexMatrix g_kk = matmul(hermitian(a), f);
    const double cross = trace(g_kk).real();
    const double quad = frobenius_norm_sq(g_kk);
    const double grad_b =
        -2.0 * sigma2 * static_cast<double>(k) * ib * ib * ib +
        2.0 * ib * ib * cross - 2.0 * ib * ib * ib * quad;
    bool ok = false;
    for (int bt = 0; bt < 60; ++bt) {
      ComplexMatrix f_new = sub(f, scale(grad_f, step));
      project(f_new);
      const double beta_new = std::max(1e-9, beta - step * grad_b);
      const double cand = sum_mse(h, f_rf, f_new, beta_new, sigma2);
      if (cand < obj) {
        f = std::move(f_new);
        beta = beta_new;
        obj = cand;
        step *= 1.5;
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) break;
  }
  return obj;
}

Outcome criterion1() {
  const double pt = 1.0, sigma2 = std::pow(10.0, -1.0);  // SNR 10 dB
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const ComplexMatrix h = random_channel(16, 3, 1000 + s);
    RngStream rng = RngStream::derive(1100 + s, "acc-cm");
    const AnalogPrecoder f = random_cm_precoder(16, 3, rng);
    const DigitalPrecoder d = kkt_digital(h, f, pt, sigma2);
    record_power(f.f_rf, d.f_bb, pt);
    const double closed = sum_mse(h, f.f_rf, d.f_bb, d.beta, sigma2);
    const double numeric = minimize_sum_mse(h, f.f_rf, pt, sigma2, 5000, s);
    worst = std::max(worst, closed / numeric);
  }
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  Outcome out;
  out.pass = worst <= 1.0 + 1e-6 && secs < 120.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "worst closed/numeric = %.12f (limit 1+1e-6), %.1f s", worst,
                secs);
  out.detail = buf;
  return out;
}

Outcome criterion2() {
  const double pt = 1.0, sigma2 = 0.1;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const std::size_t m = 8 + (s % 4) * 4;
    const std::size_t k = 2 + s % 3;
    const ComplexMatrix h = random_channel(m, k, 2000 + s);
    RngStream rng = RngStream::derive(3000 + s, "acc-cm2");
    const AnalogPrecoder f = random_cm_precoder(m, std::max(k, 2ul), rng);
    const DigitalPrecoder d = kkt_digital(h, f, pt, sigma2);
    record_power(f.f_rf, d.f_bb, pt);
    const double full = sum_mse(h, f.f_rf, d.f_bb, d.beta, sigma2);
    const double conc = concentrated_mse(h, f.f_rf, pt, sigma2);
    worst = std::max(worst, std::abs(full - conc) / conc);
  }
  Outcome out;
  out.pass = worst < 1e-9;
  char buf[120];
  std::snprintf(buf, sizeof(buf), "worst relative difference = %.3e (< 1e-9)",
                worst);
  out.detail = buf;
  return out;
}

Outcome criterion3() {
  Outcome out;
  out.pass = g_power_violations == 0 && g_power_checks > 0;
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "%.0f precoders checked across the suite, %.0f violations",
                g_power_checks, g_power_violations);
  out.detail = buf;
  return out;
}

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    worst = std::max(worst, run_network_gradcheck(seed).max_rel_error);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  Outcome out;
  out.pass = worst < 1e-5 && secs < 300.0;
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "max relative error over 20 seeds = %.3e (< 1e-5), %.1f s",
                worst, secs);
  out.detail = buf;
  return out;
}

Outcome criterion5() {
  const ArrayGeometry g = ArrayGeometry::ula(128, 100e9);
  const double rd = rayleigh_distance(g);
  bool pass = std::abs(rd - 24.19) < 0.01;

  double worst_norm = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    RngStream rng = RngStream::derive(s, "acc-resp");
    const double theta = rng.next_uniform(-1.0, 1.0);
    const double r = rng.next_uniform(5.0, 80.0);
    const ComplexMatrix b = array_response(g, theta, r);
    worst_norm = std::max(worst_norm, std::abs(frobenius_norm(b) - 1.0));
  }
  pass = pass && worst_norm < 1e-12;

  ScenarioConfig sc;
  sc.M = 128;
  sc.K = 1;
  sc.N_RF = 1;
  sc.L = 4;
  sc.r_max = 80.0;
  sc.seed = 5;
  RngStream rng = RngStream::derive(sc.seed, "acc-power");
  double acc = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto [h, paths] = generate_channel(sc, rng);
    acc += frobenius_norm_sq(h);
  }
  const double ratio = acc / n / static_cast<double>(sc.M);
  pass = pass && std::abs(ratio - 1.0) < 0.05;

  Outcome out;
  out.pass = pass;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "R_Rayleigh = %.4f m (24.19 +/- 0.01), |norm-1| = %.2e, "
                "E||h||^2/M = %.4f",
                rd, worst_norm, ratio);
  out.detail = buf;
  return out;
}

Outcome criterion6() {
  ScenarioConfig sc;
  sc.M = 24;
  sc.K = 2;
  sc.N_RF = 3;
  sc.L = 3;
  sc.seed = 6;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    NetworkConfig cfg;
    cfg.M = sc.M;
    cfg.K = sc.K;
    cfg.N_RF = sc.N_RF;
    cfg.N = 3;
    cfg.hidden = {20, 10};
    const NetworkParams params =
        init_network(cfg, NetworkMode::Direct, 600 + seed);
    RngStream ch = RngStream::derive(700 + seed, "acc-col");
    auto [h, paths] = generate_channel_matrix(sc, ch);
    ProtocolConfig pc;
    pc.repetitions = 2;
    pc.damping = 0.0;
    pc.ul_sigma2_override = 0.0;
    RngStream rng = RngStream::derive(800 + seed, "acc-col2");
    const ProtocolTrace direct = run_direct(h, params, pc, sc, rng);
    const HybridRun indirect = run_indirect(h, params, sc);
    record_power(direct.f_rf.f_rf, direct.digital.f_bb, sc.pt);
    record_power(indirect.f_rf.f_rf, indirect.digital.f_bb, sc.pt);
    worst = std::max(worst,
                     std::abs(direct.metrics.sum_rate -
                              indirect.metrics.sum_rate) /
                         (1.0 + indirect.metrics.sum_rate));
    worst = std::max(worst,
                     std::abs(direct.metrics.sum_mse -
                              indirect.metrics.sum_mse) /
                         (1.0 + indirect.metrics.sum_mse));
  }
  Outcome out;
  out.pass = worst < 1e-9;
  char buf[120];
  std::snprintf(buf, sizeof(buf), "worst metric gap = %.3e (< 1e-9)", worst);
  out.detail = buf;
  return out;
}

Outcome criterion7() {
  ScenarioConfig sc;
  sc.M = 24;
  sc.K = 2;
  sc.N_RF = 2;
  sc.L = 2;
  sc.seed = 7;
  NetworkConfig cfg;
  cfg.M = sc.M;
  cfg.K = sc.K;
  cfg.N_RF = sc.N_RF;
  cfg.N = 3;
  cfg.hidden = {16, 8};
  const NetworkParams params = init_network(cfg, NetworkMode::Direct, 70);
  RngStream ch = RngStream::derive(71, "acc-rep");
  auto [h, paths] = generate_channel_matrix(sc, ch);
  double mse1 = 0.0, mse4 = 0.0;
  for (int t = 0; t < 1000; ++t) {
    ProtocolConfig p1, p4;
    p1.repetitions = 1;
    p4.repetitions = 4;
    RngStream r1 = RngStream::derive(72, "acc-mc1", t);
    RngStream r4 = RngStream::derive(73, "acc-mc4", t);
    const ProtocolTrace t1 = run_direct(h, params, p1, sc, r1);
    const ProtocolTrace t4 = run_direct(h, params, p4, sc, r4);
    record_power(t1.f_rf.f_rf, t1.digital.f_bb, sc.pt);
    mse1 += frobenius_norm_sq(
        sub(t1.h_eq_hat.h_eq, matmul(hermitian(h), t1.f_rf.f_rf)));
    mse4 += frobenius_norm_sq(
        sub(t4.h_eq_hat.h_eq, matmul(hermitian(h), t4.f_rf.f_rf)));
  }
  const double ratio = mse1 / mse4;
  Outcome out;
  out.pass = ratio > 3.2 && ratio < 4.8;
  char buf[120];
  std::snprintf(buf, sizeof(buf), "I=1 vs I=4 error ratio = %.3f (in [3.2, 4.8])",
                ratio);
  out.detail = buf;
  return out;
}

struct DeskArtifacts {
  bool trained = false;
  NetworkParams params;
  DatasetTriple dataset;
  ExperimentSpec spec;
  std::string checkpoint_path;
};

Outcome criterion8(const std::string& configs_dir, DeskArtifacts& desk) {
  const auto t0 = std::chrono::steady_clock::now();
  desk.spec = load_experiment_spec(configs_dir + "/desk.json");
  desk.dataset = generate_dataset(desk.spec.scenario, desk.spec.dataset_size);
  TrainResult tr = fit(NetworkMode::Indirect, desk.dataset,
                       desk.spec.network_config(), desk.spec.training,
                       desk.spec.protocol.repetitions,
                       desk.spec.protocol.damping);
  Outcome out;
  if (tr.diverged) {
    out.pass = false;
    out.detail = "training diverged";
    return out;
  }
  desk.params = std::move(tr.params);
  desk.trained = true;
  desk.checkpoint_path = "/tmp/xlbeam_acceptance_desk.ckpt";
  save_checkpoint(desk.params, desk.checkpoint_path,
                  desk.spec.training.seed);

  const MethodStats trained = eval_trained(desk.params, desk.dataset.test,
                                           NetworkMode::Indirect, {}, 80);
  const MethodStats random_base = eval_random_cm(desk.dataset.test, 80);
  ReferenceOptimizerConfig ref;
  ref.n_iter = 500;
  const MethodStats pg = eval_pg_reference(desk.dataset.test, ref, 80);
  // Power activation across the trained model's test precoders.
  for (std::size_t i = 0; i < desk.dataset.test.H.size(); ++i) {
    const HybridRun run = run_indirect(desk.dataset.test.H[i], desk.params,
                                       desk.spec.scenario);
    record_power(run.f_rf.f_rf, run.digital.f_bb, desk.spec.scenario.pt);
  }
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  const double vs_random = trained.sum_rate_mean / random_base.sum_rate_mean;
  const double vs_pg = trained.sum_rate_mean / pg.sum_rate_mean;
  out.pass = secs <= 1800.0 && vs_random >= 1.15 && vs_pg >= 0.85;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "trained %.3f, random %.3f (x%.3f >= 1.15), pg500 %.3f "
                "(%.1f%% >= 85%%), %.0f s (<= 1800)",
                trained.sum_rate_mean, random_base.sum_rate_mean, vs_random,
                pg.sum_rate_mean, 100.0 * vs_pg, secs);
  out.detail = buf;
  return out;
}

Outcome criterion9(const DeskArtifacts& desk) {
  Outcome out;
  // (a) per-instance fully-digital vs hybrid sum-MSE ordering.
  int violations = 0;
  const double pt = 1.0, sigma2 = 0.1;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const ComplexMatrix h = random_channel(16, 2, 90000 + s);
    RngStream rng = RngStream::derive(91000 + s, "acc-ord");
    const AnalogPrecoder f = random_cm_precoder(16, 2, rng);
    const DigitalPrecoder d = kkt_digital(h, f, pt, sigma2);
    record_power(f.f_rf, d.f_bb, pt);
    const double hybrid = sum_mse(h, f.f_rf, d.f_bb, d.beta, sigma2);
    const FullyDigitalPrecoder fd = fully_digital_mmse(h, pt, sigma2);
    const double digital =
        sum_mse(h, ComplexMatrix::identity(16), fd.f, fd.beta, sigma2);
    if (digital > hybrid * (1.0 + 1e-9)) ++violations;
  }

  // (b) mean sum rate nondecreasing in SNR for every method, evaluated with
  // the desk-trained checkpoint supplied (no retraining per point).
  if (!desk.trained) {
    out.pass = false;
    out.detail = "desk model unavailable (criterion 8 did not run)";
    return out;
  }
  ExperimentSpec sweep = desk.spec;
  sweep.sweep.axis = SweepAxis::SnrDb;
  sweep.sweep.values = {0.0, 5.0, 10.0, 15.0};
  sweep.sweep.repetitions = 1;
  sweep.eval_samples = 300;
  sweep.reference.n_iter = 500;
  sweep.output_dir = "/tmp/xlbeam_acceptance_sweep";
  const ExperimentResult res = run_experiment(sweep, desk.checkpoint_path);
  std::map<std::string, std::vector<std::pair<double, double>>> by_method;
  for (const SweepRow& r : res.rows) {
    if (r.stats.failed) continue;
    by_method[r.stats.method].emplace_back(r.stats.sum_rate_mean,
                                           r.stats.sum_rate_se);
  }
  int inversions = 0;
  bool inversion_within_se = true;
  for (const auto& [method, vals] : by_method) {
    for (std::size_t i = 1; i < vals.size(); ++i) {
      if (vals[i].first < vals[i - 1].first) {
        ++inversions;
        if (vals[i].first < vals[i - 1].first - vals[i].second)
          inversion_within_se = false;
      }
    }
  }
  out.pass = violations == 0 && inversions <= 1 && inversion_within_se &&
             by_method.size() == 4;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "MSE ordering violations %d/200, SNR-trend inversions %d "
                "(<= 1, within 1 SE) across %zu methods",
                violations, inversions, by_method.size());
  out.detail = buf;
  return out;
}

Outcome criterion10(const DeskArtifacts& desk) {
  Outcome out;
  const ArrayGeometry g = ArrayGeometry::ula(32, 100e9);
  BeamAnalysisSpec spec;
  spec.theta_count = 41;
  spec.r_count = 36;
  const double theta0 = -1.0 + 2.0 * 28 / 40.0;
  const double r0 = 5.0 + 35.0 * 20 / 35.0;
  const ComplexMatrix v = array_response(g, theta0, r0);
  const BeamHeatmap hm = analyze_beams(g, v, spec);
  double best = -1.0;
  std::size_t bt = 0, br = 0;
  bool bounded = true;
  for (std::size_t ri = 0; ri < spec.r_count; ++ri)
    for (std::size_t ti = 0; ti < spec.theta_count; ++ti) {
      const double val = hm.values(ri, ti).real();
      if (val > 1.0 + 1e-12) bounded = false;
      if (val > best) {
        best = val;
        bt = ti;
        br = ri;
      }
    }
  const bool self_peak = std::abs(hm.thetas[bt] - theta0) < 1e-12 &&
                         std::abs(hm.rs[br] - r0) < 1e-12 &&
                         std::abs(best - 1.0) < 1e-12;

  // PCA sanity on the trained desk model (random-init fallback keeps the
  // criterion evaluable if criterion 8 was skipped).
  NetworkParams params = desk.trained
                             ? desk.params
                             : init_network(
                                   [] {
                                     NetworkConfig c;
                                     c.M = 32;
                                     c.K = 2;
                                     c.N_RF = 2;
                                     c.N = 4;
                                     c.hidden = {32, 16};
                                     return c;
                                   }(),
                                   NetworkMode::Indirect, 100);
  const PcaResult pca = feature_pca(params, g, 5.0, 40.0, 200);
  double total = 0.0;
  bool nonneg = true;
  for (double e : pca.explained) {
    total += e;
    if (e < -1e-15) nonneg = false;
  }
  const bool ev_ok = std::abs(total - 1.0) < 1e-9 && nonneg;

  // Trained-model continuity: PC1 projections ordered by r must trace a
  // smooth trajectory (no phase jump above pi/2 across the 200-point sweep).
  bool smooth = true;
  double worst_jump = 0.0;
  if (desk.trained) {
    for (std::size_t i = 1; i < pca.pc1.size(); ++i) {
      const double jump =
          std::abs(std::arg(pca.pc1[i] / pca.pc1[i - 1]));
      worst_jump = std::max(worst_jump, jump);
      if (jump > kPi / 2.0) smooth = false;
    }
  }

  out.pass = bounded && self_peak && ev_ok && smooth;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "self-peak %s, heatmap <= 1 %s, EV sum %.12f, PC1 max "
                "|dphase| = %.3f rad (< pi/2)",
                self_peak ? "yes" : "NO", bounded ? "yes" : "NO", total,
                worst_jump);
  out.detail = buf;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::string configs_dir = "configs";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--configs") == 0 && i + 1 < argc) {
      configs_dir = argv[++i];
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::string list = argv[++i];
      std::size_t pos = 0;
      while (pos < list.size()) {
        only.insert(std::atoi(list.c_str() + pos));
        const std::size_t comma = list.find(',', pos);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
  }
  auto enabled = [&](int n) { return only.empty() || only.count(n); };

  std::vector<std::pair<int, Outcome>> results;
  DeskArtifacts desk;

  if (enabled(1)) results.emplace_back(1, criterion1());
  if (enabled(2)) results.emplace_back(2, criterion2());
  if (enabled(4)) results.emplace_back(4, criterion4());
  if (enabled(5)) results.emplace_back(5, criterion5());
  if (enabled(6)) results.emplace_back(6, criterion6());
  if (enabled(7)) results.emplace_back(7, criterion7());
  if (enabled(8)) results.emplace_back(8, criterion8(configs_dir, desk));
  if (enabled(9)) results.emplace_back(9, criterion9(desk));
  if (enabled(10)) results.emplace_back(10, criterion10(desk));
  // Criterion 3 audits every precoder produced above, so it reports last
  // but prints in order.
  if (enabled(3)) results.emplace_back(3, criterion3());

  std::sort(results.begin(), results.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  static const char* kNames[] = {
      "",
      "KKT optimality of the closed-form digital precoder",
      "concentration identity (full vs concentrated MSE)",
      "power-constraint activation for every produced precoder",
      "gradient correctness of the full loss (finite differences)",
      "channel-model anchors (Rayleigh distance, norms, power)",
      "noiseless protocol collapse (direct == indirect)",
      "repetition averaging of the effective channel",
      "desk-scale training vs baselines within the time budget",
      "ordering properties (MSE dominance, SNR trend)",
      "interpretability sanity (heatmap, PCA)",
  };

  bool all_pass = true;
  for (const auto& [num, outcome] : results) {
    std::printf("criterion %2d [%s]: %s — %s\n", num,
                outcome.pass ? "PASS" : "FAIL", kNames[num],
                outcome.detail.c_str());
    all_pass = all_pass && outcome.pass;
  }
  if (!all_pass) std::printf("acceptance: FAIL\n");
  else std::printf("acceptance: PASS (%zu criteria)\n", results.size());
  return all_pass ? 0 : 1;
}
