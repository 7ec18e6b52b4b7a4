#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xlbeam/channel.hpp"
#include "xlbeam/network.hpp"

namespace xlbeam {

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 400;
  // ReduceLROnPlateau on the validation sum rate; patience counted in
  // validation evaluations (one per epoch). Thresholds are absolute.
  double scheduler_factor = 0.5;
  std::size_t scheduler_patience = 200;
  double scheduler_threshold = 1e-4;
  std::size_t early_stop_patience = 300;
  double early_stop_threshold = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 10.0;  // global norm cap
  std::uint64_t seed = 1;

  void validate() const;
};

struct AdamState {
  // Moments stored componentwise: real part tracks Re(grad), imaginary part
  // tracks Im(grad); Adam acts on each real component independently.
  std::vector<ComplexMatrix> m, v;
  std::size_t step = 0;
};

struct TrainLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0.0;
  double val_sum_rate = 0.0;
  bool has_validation = false;
  double lr = 0.0;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  NetworkParams params;       // best-validation checkpoint
  std::vector<TrainLogRow> log;
  double best_val_sum_rate = 0.0;
  std::size_t best_epoch = 0;
  std::vector<std::pair<std::size_t, double>> lr_changes;  // (epoch, new lr)
  bool diverged = false;
};

/// Batch training loss: mean over the batch of the concentrated variant-MMSE
/// objective, built on the autodiff graph. Returns the loss node; per-sample
/// solve failures are rethrown with the offending sample index.
ad::Var batch_loss_graph(const ad::Var& f_columns,
                         const std::vector<const ComplexMatrix*>& batch,
                         std::size_t m, std::size_t n_rf, double pt,
                         double sigma2);

/// Convenience: numeric value of the batch loss for fixed parameters, built
/// through the same graph path (noise off unless sigma2_noise > 0).
double batch_loss_value(const NetworkParams& params,
                        const std::vector<const ComplexMatrix*>& batch,
                        double pt, double sigma2);

/// One bias-corrected Adam step over all parameters. Gradients arrive in the
/// dL/dRe + j dL/dIm convention and are consumed componentwise; a NaN
/// gradient aborts with the parameter name.
void adam_step(std::vector<ComplexMatrix*>& params,
               const std::vector<ComplexMatrix>& grads,
               const std::vector<std::string>& names, AdamState& state,
               const TrainConfig& cfg, double lr);

/// Mean sum rate over a batch through the full inference path (network
/// forward + closed-form digital precoder). For direct mode the measurements
/// are simulated with protocol noise from `eval_seed`.
double validation_sum_rate(const NetworkParams& params,
                           const ChannelBatch& split, NetworkMode mode,
                           std::size_t protocol_reps, double damping,
                           std::uint64_t eval_seed);

/// Full training loop per the hyperparameter table: shuffled minibatches,
/// fresh sensing noise per step, per-epoch validation on the mean sum rate,
/// plateau LR halving, early stopping, best-checkpoint return.
TrainResult fit(NetworkMode mode, const DatasetTriple& dataset,
                const NetworkConfig& net_cfg, const TrainConfig& cfg,
                std::size_t protocol_reps = 1, double damping = 0.0);

void write_train_log_csv(const TrainResult& result, const std::string& path);

}  // namespace xlbeam
