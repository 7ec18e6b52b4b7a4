#include "xlbeam/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "xlbeam/linalg.hpp"

namespace xlbeam {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok)
      throw ContractError("config: unknown key '" + key + "' in section '" +
                          section + "'");
  }
}

SweepAxis parse_axis(const std::string& s) {
  if (s == "snr_db") return SweepAxis::SnrDb;
  if (s == "pilot_i") return SweepAxis::PilotI;
  if (s == "users") return SweepAxis::Users;
  if (s == "paths") return SweepAxis::Paths;
  if (s == "r_max") return SweepAxis::RMax;
  if (s == "upa_shape") return SweepAxis::UpaShape;
  if (s == "sensing_n") return SweepAxis::SensingN;
  if (s == "none") return SweepAxis::None;
  throw ContractError("config: unknown sweep axis '" + s + "'");
}

}  // namespace

NetworkConfig ExperimentSpec::network_config() const {
  NetworkConfig cfg;
  cfg.M = scenario.M;
  cfg.K = scenario.K;
  cfg.N_RF = scenario.N_RF;
  cfg.N = sensing_slots;
  cfg.hidden = hidden;
  cfg.eps_cm = eps_cm;
  cfg.bn_eps = bn_eps;
  cfg.bn_momentum = bn_momentum;
  return cfg;
}

ScenarioConfig ExperimentSpec::scenario_at(std::size_t point) const {
  ScenarioConfig sc = scenario;
  switch (sweep.axis) {
    case SweepAxis::SnrDb:
      sc.snr_db = sweep.values.at(point);
      break;
    case SweepAxis::Users:
      sc.K = static_cast<std::size_t>(sweep.values.at(point));
      if (sc.N_RF < sc.K) sc.N_RF = sc.K;
      break;
    case SweepAxis::Paths:
      sc.L = static_cast<std::size_t>(sweep.values.at(point));
      break;
    case SweepAxis::RMax:
      sc.r_max = sweep.values.at(point);
      break;
    case SweepAxis::UpaShape: {
      const auto [my, mz] = sweep.upa.at(point);
      sc.geometry = ArrayKind::UPA;
      sc.upa_my = my;
      sc.upa_mz = mz;
      sc.M = my * mz;
      break;
    }
    default:
      break;
  }
  return sc;
}

std::size_t ExperimentSpec::sensing_at(std::size_t point) const {
  if (sweep.axis == SweepAxis::SensingN)
    return static_cast<std::size_t>(sweep.values.at(point));
  return sensing_slots;
}

std::size_t ExperimentSpec::repetitions_at(std::size_t point) const {
  if (sweep.axis == SweepAxis::PilotI)
    return static_cast<std::size_t>(sweep.values.at(point));
  return protocol.repetitions;
}

std::string ExperimentSpec::axis_name() const {
  switch (sweep.axis) {
    case SweepAxis::SnrDb: return "snr_db";
    case SweepAxis::PilotI: return "pilot_i";
    case SweepAxis::Users: return "users";
    case SweepAxis::Paths: return "paths";
    case SweepAxis::RMax: return "r_max";
    case SweepAxis::UpaShape: return "upa_shape";
    case SweepAxis::SensingN: return "sensing_n";
    case SweepAxis::None: return "point";
  }
  return "point";
}

std::string ExperimentSpec::point_label(std::size_t point) const {
  if (sweep.axis == SweepAxis::None) return "0";
  if (sweep.axis == SweepAxis::UpaShape) {
    const auto [my, mz] = sweep.upa.at(point);
    return std::to_string(my) + "x" + std::to_string(mz);
  }
  std::ostringstream os;
  os << sweep.values.at(point);
  return os.str();
}

ExperimentSpec parse_experiment_spec(const std::string& json_text) {
  json j = json::parse(json_text);
  check_keys(j, "root",
             {"scenario", "network", "training", "protocol", "mode",
              "dataset_size", "eval_samples", "reference", "sweep",
              "output_dir"});
  ExperimentSpec spec;
  if (j.contains("scenario")) {
    const json& s = j["scenario"];
    check_keys(s, "scenario",
               {"M", "K", "N_RF", "L", "carrier_hz", "r_min", "r_max",
                "snr_db", "pt", "geometry", "upa_my", "upa_mz", "seed"});
    ScenarioConfig& sc = spec.scenario;
    if (s.contains("M")) sc.M = s["M"].get<std::size_t>();
    if (s.contains("K")) sc.K = s["K"].get<std::size_t>();
    if (s.contains("N_RF")) sc.N_RF = s["N_RF"].get<std::size_t>();
    if (s.contains("L")) sc.L = s["L"].get<std::size_t>();
    if (s.contains("carrier_hz")) sc.carrier_hz = s["carrier_hz"].get<double>();
    if (s.contains("r_min")) sc.r_min = s["r_min"].get<double>();
    if (s.contains("r_max")) sc.r_max = s["r_max"].get<double>();
    if (s.contains("snr_db")) sc.snr_db = s["snr_db"].get<double>();
    if (s.contains("pt")) sc.pt = s["pt"].get<double>();
    if (s.contains("geometry")) {
      const std::string g = s["geometry"].get<std::string>();
      if (g != "ula" && g != "upa")
        throw ContractError("config: geometry must be 'ula' or 'upa'");
      sc.geometry = g == "upa" ? ArrayKind::UPA : ArrayKind::ULA;
    }
    if (s.contains("upa_my")) sc.upa_my = s["upa_my"].get<std::size_t>();
    if (s.contains("upa_mz")) sc.upa_mz = s["upa_mz"].get<std::size_t>();
    if (s.contains("seed")) sc.seed = s["seed"].get<std::uint64_t>();
  }
  if (j.contains("network")) {
    const json& n = j["network"];
    check_keys(n, "network",
               {"N", "hidden", "eps_cm", "bn_eps", "bn_momentum"});
    if (n.contains("N")) spec.sensing_slots = n["N"].get<std::size_t>();
    if (n.contains("hidden"))
      spec.hidden = n["hidden"].get<std::vector<std::size_t>>();
    if (n.contains("eps_cm")) spec.eps_cm = n["eps_cm"].get<double>();
    if (n.contains("bn_eps")) spec.bn_eps = n["bn_eps"].get<double>();
    if (n.contains("bn_momentum"))
      spec.bn_momentum = n["bn_momentum"].get<double>();
  }
  if (j.contains("training")) {
    const json& t = j["training"];
    check_keys(t, "training",
               {"learning_rate", "batch_size", "max_epochs",
                "scheduler_factor", "scheduler_patience", "scheduler_threshold",
                "early_stop_patience", "early_stop_threshold", "grad_clip",
                "seed"});
    TrainConfig& tc = spec.training;
    if (t.contains("learning_rate"))
      tc.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("batch_size"))
      tc.batch_size = t["batch_size"].get<std::size_t>();
    if (t.contains("max_epochs"))
      tc.max_epochs = t["max_epochs"].get<std::size_t>();
    if (t.contains("scheduler_factor"))
      tc.scheduler_factor = t["scheduler_factor"].get<double>();
    if (t.contains("scheduler_patience"))
      tc.scheduler_patience = t["scheduler_patience"].get<std::size_t>();
    if (t.contains("scheduler_threshold"))
      tc.scheduler_threshold = t["scheduler_threshold"].get<double>();
    if (t.contains("early_stop_patience"))
      tc.early_stop_patience = t["early_stop_patience"].get<std::size_t>();
    if (t.contains("early_stop_threshold"))
      tc.early_stop_threshold = t["early_stop_threshold"].get<double>();
    if (t.contains("grad_clip")) tc.grad_clip = t["grad_clip"].get<double>();
    if (t.contains("seed")) tc.seed = t["seed"].get<std::uint64_t>();
  }
  if (j.contains("protocol")) {
    const json& p = j["protocol"];
    check_keys(p, "protocol", {"I", "damping"});
    if (p.contains("I"))
      spec.protocol.repetitions = p["I"].get<std::size_t>();
    if (p.contains("damping"))
      spec.protocol.damping = p["damping"].get<double>();
  }
  if (j.contains("mode")) {
    const std::string m = j["mode"].get<std::string>();
    if (m != "indirect" && m != "direct")
      throw ContractError("config: mode must be 'indirect' or 'direct'");
    spec.mode = m == "direct" ? NetworkMode::Direct : NetworkMode::Indirect;
  }
  if (j.contains("dataset_size"))
    spec.dataset_size = j["dataset_size"].get<std::size_t>();
  if (j.contains("eval_samples"))
    spec.eval_samples = j["eval_samples"].get<std::size_t>();
  if (j.contains("reference")) {
    const json& r = j["reference"];
    check_keys(r, "reference", {"n_iter", "initial_step", "tolerance"});
    if (r.contains("n_iter"))
      spec.reference.n_iter = r["n_iter"].get<std::size_t>();
    if (r.contains("initial_step"))
      spec.reference.initial_step = r["initial_step"].get<double>();
    if (r.contains("tolerance"))
      spec.reference.tolerance = r["tolerance"].get<double>();
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    check_keys(s, "sweep", {"axis", "values", "repetitions"});
    spec.sweep.axis = parse_axis(s.value("axis", "none"));
    if (s.contains("values")) {
      if (spec.sweep.axis == SweepAxis::UpaShape) {
        for (const auto& v : s["values"]) {
          const std::string sv = v.get<std::string>();
          const auto x = sv.find('x');
          if (x == std::string::npos)
            throw ContractError("config: upa_shape values look like '8x8'");
          spec.sweep.upa.emplace_back(std::stoull(sv.substr(0, x)),
                                      std::stoull(sv.substr(x + 1)));
        }
      } else {
        spec.sweep.values = s["values"].get<std::vector<double>>();
      }
    }
    if (s.contains("repetitions"))
      spec.sweep.repetitions = s["repetitions"].get<std::size_t>();
    if (spec.sweep.repetitions < 1)
      throw ContractError("config: sweep repetitions must be >= 1");
  }
  if (j.contains("output_dir"))
    spec.output_dir = j["output_dir"].get<std::string>();
  spec.scenario.validate();
  return spec;
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NumericError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_spec(ss.str());
}

namespace {

struct Accumulator {
  std::vector<double> rates, mses;
  double wall_us = 0.0;

  MethodStats finish(const std::string& method, std::size_t users) const {
    MethodStats s;
    s.method = method;
    s.n_samples = rates.size();
    const double n = static_cast<double>(rates.size());
    double mean = 0.0;
    for (double r : rates) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rates) var += (r - mean) * (r - mean);
    const double se = rates.size() > 1
                          ? std::sqrt(var / (n - 1.0)) / std::sqrt(n)
                          : 0.0;
    s.sum_rate_mean = mean;
    s.sum_rate_se = se;
    s.rate_per_user_mean = mean / static_cast<double>(users);
    s.rate_per_user_se = se / static_cast<double>(users);
    double mse_mean = 0.0;
    for (double m : mses) mse_mean += m;
    mse_mean /= n;
    s.sum_mse_mean = mse_mean;
    s.sum_mse_db = 10.0 * std::log10(mse_mean);
    s.wall_us_per_inference = wall_us / n;
    return s;
  }
};

std::size_t eval_count(const ChannelBatch& batch, std::size_t limit) {
  return limit == 0 ? batch.H.size() : std::min(limit, batch.H.size());
}

}  // namespace

MethodStats eval_trained(const NetworkParams& params, const ChannelBatch& batch,
                         NetworkMode mode, const ProtocolConfig& protocol,
                         std::uint64_t eval_seed, std::size_t limit) {
  const std::size_t n = eval_count(batch, limit);
  Accumulator acc;
  acc.rates.resize(n);
  acc.mses.resize(n);
  std::vector<double> walls(n);
  parallel_for(n, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    LinkMetrics m;
    if (mode == NetworkMode::Indirect) {
      m = run_indirect(batch.H[i], params, batch.scenario).metrics;
    } else {
      RngStream rng = RngStream::derive(eval_seed, "protocol", i);
      m = run_direct(batch.H[i], params, protocol, batch.scenario, rng)
              .metrics;
    }
    walls[i] = std::chrono::duration<double, std::micro>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
    acc.rates[i] = m.sum_rate;
    acc.mses[i] = m.sum_mse;
  });
  acc.wall_us = std::accumulate(walls.begin(), walls.end(), 0.0);
  return acc.finish(mode == NetworkMode::Indirect ? "dl_indirect" : "dl_direct",
                    batch.scenario.K);
}

MethodStats eval_random_cm(const ChannelBatch& batch, std::uint64_t eval_seed,
                           std::size_t limit) {
  const std::size_t n = eval_count(batch, limit);
  Accumulator acc;
  acc.rates.resize(n);
  acc.mses.resize(n);
  std::vector<double> walls(n);
  parallel_for(n, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream rng = RngStream::derive(eval_seed, "random-cm", i);
    const HybridRun run = random_cm_baseline(batch.H[i], batch.scenario, rng);
    walls[i] = std::chrono::duration<double, std::micro>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
    acc.rates[i] = run.metrics.sum_rate;
    acc.mses[i] = run.metrics.sum_mse;
  });
  acc.wall_us = std::accumulate(walls.begin(), walls.end(), 0.0);
  return acc.finish("random_cm", batch.scenario.K);
}

MethodStats eval_pg_reference(const ChannelBatch& batch,
                              const ReferenceOptimizerConfig& cfg,
                              std::uint64_t eval_seed, std::size_t limit) {
  const std::size_t n = eval_count(batch, limit);
  const ScenarioConfig& sc = batch.scenario;
  const double sigma2 = sc.noise_variance();
  Accumulator acc;
  acc.rates.resize(n);
  acc.mses.resize(n);
  std::vector<double> walls(n);
  parallel_for(n, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream rng = RngStream::derive(eval_seed, "pg-ref", i);
    const ReferenceResult ref = projected_gradient_reference(
        batch.H[i], cfg, sc.pt, sigma2, sc.N_RF, rng);
    const DigitalPrecoder d =
        kkt_digital(batch.H[i], ref.precoder, sc.pt, sigma2);
    const LinkMetrics m = link_metrics(batch.H[i], ref.precoder.f_rf, d.f_bb,
                                       d.beta, sigma2);
    walls[i] = std::chrono::duration<double, std::micro>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
    acc.rates[i] = m.sum_rate;
    acc.mses[i] = m.sum_mse;
  });
  acc.wall_us = std::accumulate(walls.begin(), walls.end(), 0.0);
  return acc.finish("pg_reference", sc.K);
}

MethodStats eval_fully_digital(const ChannelBatch& batch, std::size_t limit) {
  const std::size_t n = eval_count(batch, limit);
  const ScenarioConfig& sc = batch.scenario;
  const double sigma2 = sc.noise_variance();
  Accumulator acc;
  acc.rates.resize(n);
  acc.mses.resize(n);
  std::vector<double> walls(n);
  parallel_for(n, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const FullyDigitalPrecoder fd =
        fully_digital_mmse(batch.H[i], sc.pt, sigma2);
    const ComplexMatrix eye = ComplexMatrix::identity(sc.M);
    const LinkMetrics m =
        link_metrics(batch.H[i], eye, fd.f, fd.beta, sigma2);
    walls[i] = std::chrono::duration<double, std::micro>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
    acc.rates[i] = m.sum_rate;
    acc.mses[i] = m.sum_mse;
  });
  acc.wall_us = std::accumulate(walls.begin(), walls.end(), 0.0);
  return acc.finish("fully_digital", sc.K);
}

namespace {

std::string csv_header() {
  return "axis,value,repetition,method,n_samples,sum_rate_mean,sum_rate_se,"
         "rate_per_user_mean,rate_per_user_se,sum_mse_mean,sum_mse_db,"
         "wall_us_per_inference,master_seed,dataset_seed,train_seed,eval_seed,"
         "status\n";
}

std::string csv_row(const SweepRow& r) {
  char buf[512];
  std::snprintf(
      buf, sizeof(buf),
      "%s,%s,%zu,%s,%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.3f,%llu,%llu,"
      "%llu,%llu,%s\n",
      r.axis.c_str(), r.value.c_str(), r.repetition, r.stats.method.c_str(),
      r.stats.n_samples, r.stats.sum_rate_mean, r.stats.sum_rate_se,
      r.stats.rate_per_user_mean, r.stats.rate_per_user_se,
      r.stats.sum_mse_mean, r.stats.sum_mse_db,
      r.stats.wall_us_per_inference,
      static_cast<unsigned long long>(r.master_seed),
      static_cast<unsigned long long>(r.dataset_seed),
      static_cast<unsigned long long>(r.train_seed),
      static_cast<unsigned long long>(r.eval_seed),
      r.stats.failed ? "failed" : "ok");
  return buf;
}

}  // namespace

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NumericError("cannot open " + path);
  out << "# schema=1\n" << csv_header();
  for (const SweepRow& r : rows) out << csv_row(r);
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::string& checkpoint) {
  ExperimentResult result;
  std::filesystem::create_directories(spec.output_dir);
  const std::size_t points = spec.sweep.point_count();
  for (std::size_t pt = 0; pt < points; ++pt) {
    const ScenarioConfig sc = spec.scenario_at(pt);
    NetworkConfig net_cfg = spec.network_config();
    net_cfg.M = sc.M;
    net_cfg.K = sc.K;
    net_cfg.N_RF = sc.N_RF;
    net_cfg.N = spec.sensing_at(pt);
    ProtocolConfig protocol = spec.protocol;
    protocol.repetitions = spec.repetitions_at(pt);

    std::vector<SweepRow> point_rows;
    ScenarioConfig sc_point = sc;
    sc_point.seed = RngStream::derive(sc.seed, "point", pt).next_u64();
    bool trained_ok = true;
    std::string train_error;
    NetworkParams params;
    DatasetTriple ds;
    try {
      ds = generate_dataset(sc_point, spec.dataset_size);
      if (!checkpoint.empty()) {
        params = load_checkpoint(checkpoint);
        if (params.cfg.M != net_cfg.M || params.cfg.K != net_cfg.K ||
            params.cfg.N_RF != net_cfg.N_RF)
          throw ContractError("checkpoint dimensions do not match the sweep "
                              "point");
      } else {
        TrainConfig tc = spec.training;
        tc.seed = RngStream::derive(spec.training.seed, "train", pt).next_u64();
        TrainResult tr = fit(spec.mode, ds, net_cfg, tc,
                             protocol.repetitions, protocol.damping);
        if (tr.diverged) throw NumericError("training diverged");
        params = std::move(tr.params);
      }
    } catch (const std::exception& e) {
      trained_ok = false;
      train_error = e.what();
    }

    for (std::size_t rep = 0; rep < spec.sweep.repetitions; ++rep) {
      const std::uint64_t eval_seed =
          RngStream::derive(sc_point.seed, "eval", pt, rep).next_u64();
      SweepRow base;
      base.axis = spec.axis_name();
      base.value = spec.point_label(pt);
      base.repetition = rep;
      base.master_seed = spec.scenario.seed;
      base.dataset_seed = sc_point.seed;
      base.train_seed = spec.training.seed;
      base.eval_seed = eval_seed;

      auto push = [&](MethodStats stats) {
        SweepRow row = base;
        row.stats = std::move(stats);
        point_rows.push_back(std::move(row));
      };

      if (trained_ok) {
        push(eval_trained(params, ds.test, spec.mode, protocol, eval_seed,
                          spec.eval_samples));
      } else {
        MethodStats failed;
        failed.method =
            spec.mode == NetworkMode::Indirect ? "dl_indirect" : "dl_direct";
        failed.failed = true;
        failed.error = train_error;
        push(failed);
      }
      if (trained_ok) {
        push(eval_random_cm(ds.test, eval_seed, spec.eval_samples));
        push(eval_pg_reference(ds.test, spec.reference, eval_seed,
                               spec.eval_samples));
        push(eval_fully_digital(ds.test, spec.eval_samples));
      } else {
        for (const char* name : {"random_cm", "pg_reference", "fully_digital"}) {
          MethodStats failed;
          failed.method = name;
          failed.failed = true;
          failed.error = "dataset unavailable: " + train_error;
          push(failed);
        }
      }
    }

    const std::string point_file = spec.output_dir + "/point_" +
                                   spec.axis_name() + "_" +
                                   spec.point_label(pt) + ".csv";
    write_sweep_csv(point_rows, point_file);
    result.point_files.push_back(point_file);
    for (SweepRow& r : point_rows) result.rows.push_back(std::move(r));
  }
  write_sweep_csv(result.rows, spec.output_dir + "/sweep.csv");
  return result;
}

BeamHeatmap analyze_beams(const ArrayGeometry& geometry,
                          const ComplexMatrix& target,
                          const BeamAnalysisSpec& spec) {
  if (target.cols() != 1 || target.rows() != geometry.elements())
    throw ContractError("analyze_beams: target must be M x 1");
  if (spec.theta_count < 2 || spec.r_count < 2)
    throw ContractError("analyze_beams: grid counts must be >= 2");
  if (!(spec.r_lo > 0.0 && spec.r_hi > spec.r_lo))
    throw ContractError("analyze_beams: bad r range");
  BeamHeatmap hm;
  hm.thetas.resize(spec.theta_count);
  hm.rs.resize(spec.r_count);
  for (std::size_t i = 0; i < spec.theta_count; ++i)
    hm.thetas[i] = -1.0 + 2.0 * static_cast<double>(i) /
                              static_cast<double>(spec.theta_count - 1);
  for (std::size_t i = 0; i < spec.r_count; ++i)
    hm.rs[i] = spec.r_lo + (spec.r_hi - spec.r_lo) * static_cast<double>(i) /
                               static_cast<double>(spec.r_count - 1);
  const double vnorm = frobenius_norm(target);
  if (vnorm == 0.0) throw ContractError("analyze_beams: zero target");
  hm.values = ComplexMatrix(spec.r_count, spec.theta_count);
  hm.marginal.assign(spec.r_count, 0.0);
  for (std::size_t ri = 0; ri < spec.r_count; ++ri) {
    double acc = 0.0;
    for (std::size_t ti = 0; ti < spec.theta_count; ++ti) {
      const ComplexMatrix b =
          array_response(geometry, hm.thetas[ti], hm.rs[ri]);
      const double corr = std::abs(inner(b, target)) / vnorm;
      hm.values(ri, ti) = corr;
      acc += corr;
    }
    hm.marginal[ri] = acc / static_cast<double>(spec.theta_count);
  }
  double peak = 0.0;
  for (double v : hm.marginal) peak = std::max(peak, v);
  if (peak > 0.0)
    for (double& v : hm.marginal) v /= peak;
  return hm;
}

void write_heatmap_csv(const BeamHeatmap& hm, const std::string& heatmap_path,
                       const std::string& marginal_path) {
  {
    std::ofstream out(heatmap_path);
    if (!out) throw NumericError("cannot open " + heatmap_path);
    out << "# schema=1\ntheta,r,correlation\n";
    char buf[128];
    for (std::size_t ri = 0; ri < hm.rs.size(); ++ri)
      for (std::size_t ti = 0; ti < hm.thetas.size(); ++ti) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.12g\n", hm.thetas[ti],
                      hm.rs[ri], hm.values(ri, ti).real());
        out << buf;
      }
  }
  {
    std::ofstream out(marginal_path);
    if (!out) throw NumericError("cannot open " + marginal_path);
    out << "# schema=1\nr,normalized_marginal_gain\n";
    char buf[64];
    for (std::size_t ri = 0; ri < hm.rs.size(); ++ri) {
      std::snprintf(buf, sizeof(buf), "%.10g,%.12g\n", hm.rs[ri],
                    hm.marginal[ri]);
      out << buf;
    }
  }
}

PcaResult complex_pca(const ComplexMatrix& features,
                      const std::vector<double>& r_values) {
  const std::size_t n = features.rows(), d = features.cols();
  if (n < 2) throw ContractError("complex_pca: need at least 2 samples");
  // Center.
  ComplexMatrix centered = features;
  for (std::size_t j = 0; j < d; ++j) {
    cdouble mu{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) mu += centered(i, j);
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) centered(i, j) -= mu;
  }
  // Sample covariance (d x d Hermitian PSD).
  ComplexMatrix cov = scale(matmul(hermitian(centered), centered),
                            1.0 / static_cast<double>(n));
  cov = scale(add(cov, hermitian(cov)), 0.5);
  const EigResult eig = hermitian_eig(cov);
  PcaResult out;
  out.r = r_values;
  double total = 0.0;
  std::vector<double> lam(d);
  for (std::size_t i = 0; i < d; ++i) {
    lam[i] = std::max(0.0, eig.eigenvalues[d - 1 - i]);  // descending
    total += lam[i];
  }
  out.explained.resize(d);
  for (std::size_t i = 0; i < d; ++i)
    out.explained[i] = total > 0.0 ? lam[i] / total : 0.0;
  // Projections on the top two components.
  out.pc1.resize(n);
  out.pc2_mag.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    cdouble p1{0.0, 0.0}, p2{0.0, 0.0};
    for (std::size_t j = 0; j < d; ++j) {
      p1 += std::conj(eig.eigenvectors(j, d - 1)) * centered(i, j);
      if (d >= 2) p2 += std::conj(eig.eigenvectors(j, d - 2)) * centered(i, j);
    }
    out.pc1[i] = p1;
    out.pc2_mag[i] = std::abs(p2);
  }
  return out;
}

PcaResult feature_pca(const NetworkParams& params,
                      const ArrayGeometry& geometry, double r_lo, double r_hi,
                      std::size_t count) {
  if (count < 2) throw ContractError("feature_pca: need at least 2 probes");
  if (!(r_lo > 0.0 && r_hi > r_lo))
    throw ContractError("feature_pca: bad distance range");
  if (geometry.elements() != params.cfg.M)
    throw ContractError("feature_pca: geometry does not match the network");
  const ComplexMatrix phi = params.sensing.stacked();
  const std::size_t dp = params.feature_dim();
  ComplexMatrix features(count, dp);
  std::vector<double> rs(count);
  const double root_m = std::sqrt(static_cast<double>(params.cfg.M));
  for (std::size_t i = 0; i < count; ++i) {
    rs[i] = r_lo + (r_hi - r_lo) * static_cast<double>(i) /
                       static_cast<double>(count - 1);
    // Single-path probe at theta = 0 with unit gain; the propagation phase
    // is normalized away so only the wavefront-curvature structure remains.
    const ComplexMatrix h = scale(array_response(geometry, 0.0, rs[i]), root_m);
    const ComplexMatrix y = matmul(phi, h);
    const ComplexMatrix f = mlp_features_infer(params, y);  // D_P x 1
    for (std::size_t j = 0; j < dp; ++j) features(i, j) = f(j, 0);
  }
  return complex_pca(features, rs);
}

void write_pca_csv(const PcaResult& pca, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NumericError("cannot open " + path);
  out << "# schema=1\n# explained_variance_ratio=";
  for (std::size_t i = 0; i < pca.explained.size(); ++i)
    out << (i ? "," : "") << pca.explained[i];
  out << "\nindex,r,pc1_re,pc1_im,pc1_mag,pc1_phase,pc2_mag\n";
  char buf[256];
  for (std::size_t i = 0; i < pca.r.size(); ++i) {
    const cdouble p = pca.pc1[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  i, pca.r[i], p.real(), p.imag(), std::abs(p), std::arg(p),
                  pca.pc2_mag[i]);
    out << buf;
  }
}

}  // namespace xlbeam
