#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "xlbeam/experiment.hpp"
#include "xlbeam/gradcheck.hpp"
#include "xlbeam/training.hpp"

namespace {

constexpr const char* kVersion = "xlbeam 0.1.0";

using namespace xlbeam;

int cmd_train(const std::string& config_path, const std::string& mode_str,
              const std::string& out_checkpoint, const std::string& log_path) {
  ExperimentSpec spec = load_experiment_spec(config_path);
  if (!mode_str.empty())
    spec.mode = mode_str == "direct" ? NetworkMode::Direct
                                     : NetworkMode::Indirect;
  DatasetTriple ds = generate_dataset(spec.scenario, spec.dataset_size);
  TrainResult result = fit(spec.mode, ds, spec.network_config(), spec.training,
                           spec.protocol.repetitions, spec.protocol.damping);
  if (!log_path.empty()) write_train_log_csv(result, log_path);
  if (result.diverged) {
    std::fprintf(stderr, "stage=train error=diverged\n");
    return 3;
  }
  save_checkpoint(result.params, out_checkpoint, spec.training.seed);
  std::printf("trained mode=%s best_epoch=%zu best_val_sum_rate=%.6f\n",
              spec.mode == NetworkMode::Direct ? "direct" : "indirect",
              result.best_epoch, result.best_val_sum_rate);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& out_csv) {
  ExperimentSpec spec = load_experiment_spec(config_path);
  spec.sweep = SweepSpec{};  // single point
  ExperimentResult res = run_experiment(spec, checkpoint);
  write_sweep_csv(res.rows, out_csv);
  for (const SweepRow& row : res.rows)
    std::printf("%-14s sum_rate=%.4f +/- %.4f  sum_mse_db=%.3f\n",
                row.stats.method.c_str(), row.stats.sum_rate_mean,
                row.stats.sum_rate_se, row.stats.sum_mse_db);
  return 0;
}

int cmd_sweep(const std::string& spec_path, const std::string& checkpoint) {
  ExperimentSpec spec = load_experiment_spec(spec_path);
  ExperimentResult res = run_experiment(spec, checkpoint);
  std::printf("sweep complete: %zu rows, outputs in %s\n", res.rows.size(),
              spec.output_dir.c_str());
  return 0;
}

int cmd_analyze_beams(const std::string& config_path,
                      const std::string& checkpoint, int kernel_slot,
                      int kernel_row, int frf_column,
                      std::size_t theta_count, std::size_t r_count,
                      double r_lo, double r_hi, const std::string& out_heatmap,
                      const std::string& out_marginal) {
  ExperimentSpec spec = load_experiment_spec(config_path);
  NetworkParams params = load_checkpoint(checkpoint);
  const ArrayGeometry geometry = spec.scenario.array();
  ComplexMatrix target;
  if (kernel_slot >= 0) {
    const ComplexMatrix& phi =
        params.sensing.phi.at(static_cast<std::size_t>(kernel_slot));
    target = ComplexMatrix(phi.cols(), 1);
    for (std::size_t j = 0; j < phi.cols(); ++j)
      target(j, 0) = phi(static_cast<std::size_t>(kernel_row), j);
  } else {
    // Column of the precoder produced for one sampled channel.
    RngStream rng = RngStream::derive(spec.scenario.seed, "beam-probe");
    auto [h, paths] = generate_channel_matrix(spec.scenario, rng);
    const AnalogPrecoder f = forward_infer(params, h, NetworkMode::Indirect);
    target = ComplexMatrix(f.f_rf.rows(), 1);
    for (std::size_t i = 0; i < f.f_rf.rows(); ++i)
      target(i, 0) = f.f_rf(i, static_cast<std::size_t>(frf_column));
  }
  BeamAnalysisSpec bspec;
  bspec.theta_count = theta_count;
  bspec.r_count = r_count;
  bspec.r_lo = r_lo;
  bspec.r_hi = r_hi;
  const BeamHeatmap hm = analyze_beams(geometry, target, bspec);
  write_heatmap_csv(hm, out_heatmap, out_marginal);
  std::printf("heatmap %zux%zu written to %s / %s\n", hm.rs.size(),
              hm.thetas.size(), out_heatmap.c_str(), out_marginal.c_str());
  return 0;
}

int cmd_feature_pca(const std::string& config_path,
                    const std::string& checkpoint, std::size_t count,
                    double r_lo, double r_hi, const std::string& out_csv) {
  ExperimentSpec spec = load_experiment_spec(config_path);
  NetworkParams params = load_checkpoint(checkpoint);
  const PcaResult pca =
      feature_pca(params, spec.scenario.array(), r_lo, r_hi, count);
  write_pca_csv(pca, out_csv);
  std::printf("pca written to %s (pc1 ratio %.4f)\n", out_csv.c_str(),
              pca.explained.empty() ? 0.0 : pca.explained[0]);
  return 0;
}

int cmd_gradcheck() {
  bool all_pass = true;
  for (const GradCheckReport& rep : run_primitive_gradchecks()) {
    std::printf("%-22s max_rel_err=%.3e tol=%.0e %s\n", rep.name.c_str(),
                rep.max_rel_error, rep.tolerance,
                rep.pass ? "PASS" : "FAIL");
    all_pass = all_pass && rep.pass;
  }
  const GradCheckReport net = run_network_gradcheck(1);
  std::printf("%-22s max_rel_err=%.3e tol=%.0e %s\n", net.name.c_str(),
              net.max_rel_error, net.tolerance, net.pass ? "PASS" : "FAIL");
  all_pass = all_pass && net.pass;
  return all_pass ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near/far-field multiuser hybrid beamforming simulator"};
  app.require_subcommand(1);

  std::string config, checkpoint, out, log_path, mode, marginal;
  int kernel_slot = -1, kernel_row = 0, frf_column = 0;
  std::size_t theta_count = 121, r_count = 71, pca_count = 200;
  double r_lo = 5.0, r_hi = 40.0;

  auto* train = app.add_subcommand("train", "Train a model from a config");
  train->add_option("--config", config, "experiment JSON")->required();
  train->add_option("--mode", mode, "indirect|direct (overrides config)");
  train->add_option("--out", out, "output checkpoint path")->required();
  train->add_option("--log", log_path, "training log CSV");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--config", config, "experiment JSON")->required();
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--out-csv", out, "result CSV")->required();

  auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep");
  sweep->add_option("--spec", config, "experiment JSON")->required();
  sweep->add_option("--checkpoint", checkpoint,
                    "evaluate this checkpoint instead of training per point");

  auto* beams = app.add_subcommand("analyze-beams",
                                   "Codebook-correlation heatmap export");
  beams->add_option("--config", config, "experiment JSON")->required();
  beams->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  beams->add_option("--kernel-slot", kernel_slot,
                    "sensing slot n (use with --kernel-row); -1 targets a "
                    "precoder column");
  beams->add_option("--kernel-row", kernel_row, "sensing kernel row i");
  beams->add_option("--frf-column", frf_column, "trained F_RF column");
  beams->add_option("--theta-count", theta_count, "angle grid size");
  beams->add_option("--r-count", r_count, "range grid size");
  beams->add_option("--r-lo", r_lo, "range grid start (m)");
  beams->add_option("--r-hi", r_hi, "range grid end (m)");
  beams->add_option("--out-heatmap", out, "heatmap CSV")->required();
  beams->add_option("--out-marginal", marginal, "range-marginal CSV")
      ->required();

  auto* pca = app.add_subcommand("feature-pca",
                                 "Complex PCA of shared-MLP features");
  pca->add_option("--config", config, "experiment JSON")->required();
  pca->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  pca->add_option("--count", pca_count, "probe count");
  pca->add_option("--r-lo", r_lo, "probe range start (m)");
  pca->add_option("--r-hi", r_hi, "probe range end (m)");
  pca->add_option("--out-csv", out, "output CSV")->required();

  app.add_subcommand("gradcheck", "Run the finite-difference suites");
  app.add_subcommand("version", "Print the version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config, mode, out, log_path);
    if (eval->parsed()) return cmd_eval(config, checkpoint, out);
    if (sweep->parsed()) return cmd_sweep(config, checkpoint);
    if (beams->parsed())
      return cmd_analyze_beams(config, checkpoint, kernel_slot, kernel_row,
                               frf_column, theta_count, r_count, r_lo, r_hi,
                               out, marginal);
    if (pca->parsed())
      return cmd_feature_pca(config, checkpoint, pca_count, r_lo, r_hi, out);
    if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
    if (app.get_subcommand("version")->parsed()) {
      std::printf("%s\n", kVersion);
      return 0;
    }
  } catch (const ContractError& e) {
    std::fprintf(stderr, "stage=%s error=contract: %s\n",
                 app.get_subcommands().front()->get_name().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stage=%s error=%s\n",
                 app.get_subcommands().front()->get_name().c_str(), e.what());
    return 1;
  }
  return 0;
}
