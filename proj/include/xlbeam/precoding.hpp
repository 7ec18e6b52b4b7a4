#pragma once

#include <vector>

#include "xlbeam/complex_matrix.hpp"
#include "xlbeam/rng.hpp"

namespace xlbeam {

/// Analog precoder F_RF (M x N_RF); every entry has modulus 1/sqrt(M).
struct AnalogPrecoder {
  ComplexMatrix f_rf;

  /// Verifies the constant-modulus invariant (|entry| = 1/sqrt(M) within tol).
  void check_cm(double tol = 1e-9) const;
};

/// Digital precoder F_BB = beta * F_BB_unnormalized with the power scaling
/// chosen so that ||F_RF F_BB||_F^2 = P_t.
struct DigitalPrecoder {
  ComplexMatrix f_bb;
  double beta = 0.0;
  ComplexMatrix f_bb_unnormalized;
};

struct EffectiveChannel {
  ComplexMatrix h_eq;  // K x N_RF
  std::size_t repetitions = 1;
};

struct ReferenceOptimizerConfig {
  std::size_t n_iter = 500;
  double initial_step = 1.0;
  double backtrack_factor = 0.5;
  std::size_t max_backtracks = 40;
  double tolerance = 1e-12;  // on objective decrease
};

struct ReferenceResult {
  AnalogPrecoder precoder;
  std::vector<double> objective_trace;  // accepted iterates, nonincreasing
};

struct LinkMetrics {
  std::vector<double> sinr;  // per user
  double sum_rate = 0.0;     // bps/Hz
  double sum_mse = 0.0;
  double sum_mse_db = 0.0;
};

/// Closed-form digital precoder for fixed F_RF:
/// F~ = (F^H H H^H F + (K sigma^2 / P_t) F^H F)^{-1} F^H H via Hermitian
/// solve, beta = sqrt(P_t / ||F F~||_F^2), F_BB = beta F~.
DigitalPrecoder kkt_digital(const ComplexMatrix& h, const AnalogPrecoder& f_rf,
                            double pt, double sigma2);

/// Total sum-MSE of the scaled receive model, evaluated term by term.
double sum_mse(const ComplexMatrix& h, const ComplexMatrix& f_rf,
               const ComplexMatrix& f_bb, double beta, double sigma2);

/// Concentrated objective depending only on the analog precoder:
/// tr((I_K + (P_t/(K sigma^2)) H^H F (F^H F)^{-1} F^H H)^{-1}),
/// computed with two Hermitian solves and no orthogonality approximation.
double concentrated_mse(const ComplexMatrix& h, const ComplexMatrix& f_rf,
                        double pt, double sigma2);

/// Wirtinger gradient (dL/dRe + j dL/dIm convention) of concentrated_mse
/// with respect to F_RF; closed form, independent of the autodiff engine.
ComplexMatrix concentrated_mse_gradient(const ComplexMatrix& h,
                                        const ComplexMatrix& f_rf, double pt,
                                        double sigma2);

std::pair<std::vector<double>, double> sinr_and_sum_rate(
    const ComplexMatrix& h, const ComplexMatrix& f_rf,
    const ComplexMatrix& f_bb, double sigma2);

LinkMetrics link_metrics(const ComplexMatrix& h, const ComplexMatrix& f_rf,
                         const ComplexMatrix& f_bb, double beta,
                         double sigma2);

/// H_eq estimate: average the I baseband observation blocks, then Hermitian
/// transpose.
EffectiveChannel estimate_effective_channel(
    const std::vector<ComplexMatrix>& observations);

/// Digital precoder from an estimated effective channel:
/// F~ = (H_eq^H H_eq + (K sigma^2/P_t) F^H F + eps I)^{-1} H_eq^H.
/// With the exact H_eq and eps = 0 this equals kkt_digital.
DigitalPrecoder digital_from_effective(const EffectiveChannel& h_eq,
                                       const AnalogPrecoder& f_rf, double pt,
                                       double sigma2, double damping);

/// Unconstrained variant-MMSE baseline F = beta (H H^H + (K sigma^2/P_t) I)^{-1} H,
/// power-normalized to P_t. Lower sum-MSE than any hybrid pair per instance.
struct FullyDigitalPrecoder {
  ComplexMatrix f;  // M x K
  double beta = 0.0;
};
FullyDigitalPrecoder fully_digital_mmse(const ComplexMatrix& h, double pt,
                                        double sigma2);

/// Projected-gradient reference over the constant-modulus manifold:
/// Wirtinger step on the concentrated objective, backtracking halving,
/// per-entry phase projection back to modulus 1/sqrt(M).
ReferenceResult projected_gradient_reference(const ComplexMatrix& h,
                                             const ReferenceOptimizerConfig& cfg,
                                             double pt, double sigma2,
                                             std::size_t n_rf, RngStream& rng);

/// Uniform random phases at modulus 1/sqrt(M).
AnalogPrecoder random_cm_precoder(std::size_t m, std::size_t n_rf,
                                  RngStream& rng);

/// Entry-wise projection to modulus 1/sqrt(M); exact zeros map to +1/sqrt(M).
ComplexMatrix project_cm(const ComplexMatrix& x);

/// Shared jitter policy: adds 1e-12 tr(G)/dim to the diagonal of a Gram
/// matrix before factoring. Guards exact rank deficiency only.
ComplexMatrix gram_jitter(const ComplexMatrix& gram);

}  // namespace xlbeam
