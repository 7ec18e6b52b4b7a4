#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xlbeam/autodiff.hpp"
#include "xlbeam/channel.hpp"
#include "xlbeam/complex_matrix.hpp"
#include "xlbeam/precoding.hpp"

namespace xlbeam {

enum class NetworkMode { Indirect, Direct };

/// Per-slot sensing matrices Phi^(n), K x M each, bias-free and not subject
/// to the constant-modulus constraint.
struct SensingBank {
  std::vector<ComplexMatrix> phi;  // N matrices, K x M

  std::size_t slots() const { return phi.size(); }
  /// Vertical stack (N K x M) matching the measurement layout.
  ComplexMatrix stacked() const;
};

struct MlpBlock {
  ComplexMatrix weight;   // D_p x D_{p-1}
  ComplexMatrix bias;     // D_p x 1
  ComplexMatrix gamma;    // 2x2, real semantics (imag kept zero)
  ComplexMatrix shift;    // 1x1 complex
  // Running statistics per feature for inference-mode BN.
  std::vector<cdouble> run_mean;               // D_p
  std::vector<std::array<double, 3>> run_cov;  // D_p triples (Vrr, Vii, Vri)
};

struct OutputHead {
  ComplexMatrix weight;  // (M N_RF) x (K D_P)
  ComplexMatrix bias;    // (M N_RF) x 1
  double eps_cm = 1e-12;
};

struct NetworkConfig {
  std::size_t M = 32, K = 2, N_RF = 2;
  std::size_t N = 4;                        // sensing slots
  std::vector<std::size_t> hidden{128, 64, 32};
  double eps_cm = 1e-12;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

struct NetworkParams {
  NetworkConfig cfg;
  NetworkMode mode = NetworkMode::Indirect;
  SensingBank sensing;
  std::vector<MlpBlock> blocks;
  OutputHead head;

  std::size_t feature_dim() const { return cfg.hidden.back(); }
  std::size_t input_dim() const { return cfg.N * cfg.K; }
  /// Complex parameter count of the shared MLP (weights and biases only);
  /// independent of the user count by construction.
  std::size_t mlp_parameter_count() const;
  /// All trainable parameter matrices in checkpoint order, with names.
  std::vector<std::pair<std::string, ComplexMatrix*>> parameter_refs();
};

/// Variance-preserving random initialization: sensing CN(0, 1/M), weights
/// CN(0, 1/fan_in), biases zero, gamma = I/sqrt(2), shift zero.
NetworkParams init_network(const NetworkConfig& cfg, NetworkMode mode,
                           std::uint64_t seed);

/// tanh(Re x) + j tanh(Im x), elementwise.
ComplexMatrix ctanh_eval(const ComplexMatrix& x);

/// Module-level batch norm (plain math). Training mode whitens with batch
/// statistics and updates the running stats in `block` by EMA; inference mode
/// uses the stored running statistics. Batch = columns of x.
ComplexMatrix complex_bn_forward(const ComplexMatrix& x, MlpBlock& block,
                                 bool training, double bn_eps,
                                 double bn_momentum);

/// UL sensing layer: per-slot projection Phi^(n) (H + V_n) stacked over the
/// N slots, one column per user. Noise is drawn fresh when sigma2 > 0.
ComplexMatrix sensing_forward(const ComplexMatrix& h, const SensingBank& bank,
                              double noise_sigma2, RngStream& rng);

/// Plain (inference) forward pass; BN uses running statistics, sensing noise
/// is off. Indirect mode takes H (M x K); direct mode takes measurements
/// Y_UL (N K x K). Output satisfies the constant-modulus invariant.
AnalogPrecoder forward_infer(const NetworkParams& params,
                             const ComplexMatrix& input, NetworkMode mode);

/// Per-user shared-MLP features for one input (inference path): returns the
/// D_P-dimensional feature column of each user.
ComplexMatrix mlp_features_infer(const NetworkParams& params,
                                 const ComplexMatrix& y_user);

/// Differentiable training-mode forward over a batch of channels. Leaves are
/// bound from `params` (one Var per parameter matrix, in parameter_refs
/// order); returns the batch of CM-normalized precoder matrices as one node
/// F (M N_RF x S, one column per sample) plus the bound leaves. Noise for the
/// sensing layer is drawn from `rng` when noise_sigma2 > 0. Batch statistics
/// seen by BN are captured into `stats_out` (per block) for EMA updates.
struct TrainForward {
  std::vector<ad::Var> leaves;  // parameter order
  ad::Var f_columns;            // (M N_RF) x S
  std::vector<ad::WhitenStats> bn_stats;
};
TrainForward forward_train(const NetworkParams& params,
                           const std::vector<const ComplexMatrix*>& batch,
                           double noise_sigma2, RngStream& rng);

/// Checkpoint IO (text manifest + little-endian payload, parameters in
/// manifest order).
void save_checkpoint(const NetworkParams& params, const std::string& path,
                     std::uint64_t seed);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace xlbeam
