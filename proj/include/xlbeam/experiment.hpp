#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlbeam/channel.hpp"
#include "xlbeam/network.hpp"
#include "xlbeam/precoding.hpp"
#include "xlbeam/protocol.hpp"
#include "xlbeam/training.hpp"

namespace xlbeam {

enum class SweepAxis {
  None,       // single point
  SnrDb,
  PilotI,     // repetition blocks (pilot budget N + I, N fixed)
  Users,
  Paths,
  RMax,
  UpaShape,
  SensingN,
};

struct SweepSpec {
  SweepAxis axis = SweepAxis::None;
  std::vector<double> values;                            // numeric axes
  std::vector<std::pair<std::size_t, std::size_t>> upa;  // UpaShape axis
  std::size_t repetitions = 1;

  std::size_t point_count() const {
    if (axis == SweepAxis::None) return 1;
    return axis == SweepAxis::UpaShape ? upa.size() : values.size();
  }
};

/// One experiment: scenario, network dims, training schedule, protocol and a
/// single sweep axis. Mirrors the JSON config format field by field; unknown
/// JSON keys are rejected.
struct ExperimentSpec {
  ScenarioConfig scenario;
  std::size_t sensing_slots = 4;            // N
  std::vector<std::size_t> hidden{128, 64, 32};
  double eps_cm = 1e-12;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  TrainConfig training;
  ProtocolConfig protocol;
  NetworkMode mode = NetworkMode::Indirect;
  std::size_t dataset_size = 4000;
  std::size_t eval_samples = 0;  // 0 = whole test split
  ReferenceOptimizerConfig reference;
  SweepSpec sweep;
  std::string output_dir = "results";

  NetworkConfig network_config() const;
  ScenarioConfig scenario_at(std::size_t point) const;
  std::size_t sensing_at(std::size_t point) const;
  std::size_t repetitions_at(std::size_t point) const;  // protocol I
  std::string axis_name() const;
  std::string point_label(std::size_t point) const;
};

ExperimentSpec parse_experiment_spec(const std::string& json_text);
ExperimentSpec load_experiment_spec(const std::string& path);

struct MethodStats {
  std::string method;
  std::size_t n_samples = 0;
  double sum_rate_mean = 0.0, sum_rate_se = 0.0;
  double rate_per_user_mean = 0.0, rate_per_user_se = 0.0;
  double sum_mse_mean = 0.0, sum_mse_db = 0.0;
  double wall_us_per_inference = 0.0;
  bool failed = false;
  std::string error;
};

struct SweepRow {
  std::string axis;
  std::string value;
  std::size_t repetition = 0;
  MethodStats stats;
  std::uint64_t master_seed = 0, dataset_seed = 0, train_seed = 0,
                eval_seed = 0;
};

struct ExperimentResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> point_files;
};

/// Per-sample evaluators over a channel batch (all pure; parallel across
/// samples).
MethodStats eval_trained(const NetworkParams& params, const ChannelBatch& batch,
                         NetworkMode mode, const ProtocolConfig& protocol,
                         std::uint64_t eval_seed, std::size_t limit = 0);
MethodStats eval_random_cm(const ChannelBatch& batch, std::uint64_t eval_seed,
                           std::size_t limit = 0);
MethodStats eval_pg_reference(const ChannelBatch& batch,
                              const ReferenceOptimizerConfig& cfg,
                              std::uint64_t eval_seed, std::size_t limit = 0);
MethodStats eval_fully_digital(const ChannelBatch& batch,
                               std::size_t limit = 0);

/// Runs the sweep: per point, trains a model (or reuses `checkpoint` when
/// nonempty) and evaluates the four methods on the test split, one CSV per
/// point plus a combined sweep.csv in spec.output_dir. Training divergence
/// marks the point failed and the sweep continues.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::string& checkpoint = "");

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::string& path);

// ---- Interpretability exports -------------------------------------------

struct BeamAnalysisSpec {
  std::size_t theta_count = 121;
  std::size_t r_count = 71;
  double r_lo = 5.0;
  double r_hi = 40.0;
};

struct BeamHeatmap {
  std::vector<double> thetas;
  std::vector<double> rs;
  ComplexMatrix values;          // r_count x theta_count, real-valued in [0,1]
  std::vector<double> marginal;  // per r, mean over theta, peak-normalized
};

/// Codebook correlation: heatmap(theta, r) = |b(theta, r)^H v| / ||v||_2.
BeamHeatmap analyze_beams(const ArrayGeometry& geometry,
                          const ComplexMatrix& target,
                          const BeamAnalysisSpec& spec);

void write_heatmap_csv(const BeamHeatmap& hm, const std::string& heatmap_path,
                       const std::string& marginal_path);

struct PcaResult {
  std::vector<double> r;           // probe distances
  std::vector<cdouble> pc1;        // complex PC1 projection per probe
  std::vector<double> pc2_mag;     // |PC2 projection|
  std::vector<double> explained;   // descending ratios, sum 1
};

/// Probes the shared MLP with single-path unit-gain channels at theta = 0
/// over a distance sweep, then runs complex PCA (Hermitian eigendecomposition
/// of the feature covariance).
PcaResult feature_pca(const NetworkParams& params,
                      const ArrayGeometry& geometry, double r_lo, double r_hi,
                      std::size_t count);

/// PCA of an externally supplied feature matrix (rows = samples). Used by the
/// distance probe above and directly testable.
PcaResult complex_pca(const ComplexMatrix& features,
                      const std::vector<double>& r_values);

void write_pca_csv(const PcaResult& pca, const std::string& path);

}  // namespace xlbeam
