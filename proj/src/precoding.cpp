#include "xlbeam/precoding.hpp"

#include <cmath>

#include "xlbeam/linalg.hpp"

namespace xlbeam {

void AnalogPrecoder::check_cm(double tol) const {
  const double target = 1.0 / std::sqrt(static_cast<double>(f_rf.rows()));
  for (std::size_t i = 0; i < f_rf.size(); ++i)
    if (std::abs(std::abs(f_rf.data()[i]) - target) > tol * target)
      throw ContractError("analog precoder violates the constant-modulus "
                          "constraint");
}

ComplexMatrix gram_jitter(const ComplexMatrix& gram) {
  const double delta =
      1e-12 * trace(gram).real() / static_cast<double>(gram.rows());
  ComplexMatrix out = gram;
  for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += delta;
  return out;
}

DigitalPrecoder kkt_digital(const ComplexMatrix& h, const AnalogPrecoder& f_rf,
                            double pt, double sigma2) {
  const ComplexMatrix& f = f_rf.f_rf;
  const std::size_t k = h.cols();
  const double lambda = static_cast<double>(k) * sigma2 / pt;
  const ComplexMatrix fh = hermitian(f);
  const ComplexMatrix a = matmul(fh, h);                      // N_RF x K
  const ComplexMatrix gram_f = matmul(fh, f);                 // N_RF x N_RF
  ComplexMatrix lhs = add(matmul(a, hermitian(a)), scale(gram_f, lambda));
  lhs = gram_jitter(scale(add(lhs, hermitian(lhs)), 0.5));
  const ComplexMatrix f_tilde = cholesky_solve(lhs, a).x;     // N_RF x K
  const double power = frobenius_norm_sq(matmul(f, f_tilde));
  if (!(power > 0.0))
    throw NumericError("kkt_digital: zero effective channel, beta undefined");
  DigitalPrecoder out;
  out.beta = std::sqrt(pt / power);
  out.f_bb_unnormalized = f_tilde;
  out.f_bb = scale(f_tilde, out.beta);
  return out;
}

double sum_mse(const ComplexMatrix& h, const ComplexMatrix& f_rf,
               const ComplexMatrix& f_bb, double beta, double sigma2) {
  if (!(beta > 0.0)) throw ContractError("sum_mse: beta must be positive");
  const std::size_t k = h.cols();
  const ComplexMatrix g = matmul(matmul(hermitian(h), f_rf), f_bb);  // K x K
  const double cross = trace(g).real();
  const double quad = frobenius_norm_sq(g);
  const double ib = 1.0 / beta;
  return static_cast<double>(k) - 2.0 * ib * cross + ib * ib * quad +
         ib * ib * sigma2 * static_cast<double>(k);
}

namespace {

// Shared core: T = (I + c A^H G^{-1} A)^{-1} pieces for the concentrated
// objective and its gradient. A = F^H H, G = F^H F (jittered).
struct ConcentratedParts {
  ComplexMatrix a;        // N_RF x K
  ComplexMatrix g_inv_a;  // G^{-1} A
  ComplexMatrix t;        // (I + c A^H G^{-1} A)^{-1}
  double c;
};

ConcentratedParts concentrated_parts(const ComplexMatrix& h,
                                     const ComplexMatrix& f, double pt,
                                     double sigma2) {
  const std::size_t k = h.cols();
  ConcentratedParts parts;
  parts.c = pt / (static_cast<double>(k) * sigma2);
  const ComplexMatrix fh = hermitian(f);
  parts.a = matmul(fh, h);
  ComplexMatrix gram = matmul(fh, f);
  gram = gram_jitter(scale(add(gram, hermitian(gram)), 0.5));
  parts.g_inv_a = cholesky_solve(gram, parts.a).x;
  ComplexMatrix inner = add(
      ComplexMatrix::identity(k),
      scale(matmul(hermitian(parts.a), parts.g_inv_a), parts.c));
  inner = scale(add(inner, hermitian(inner)), 0.5);
  parts.t = cholesky_solve(inner, ComplexMatrix::identity(k)).x;
  return parts;
}

}  // namespace

double concentrated_mse(const ComplexMatrix& h, const ComplexMatrix& f_rf,
                        double pt, double sigma2) {
  return trace(concentrated_parts(h, f_rf, pt, sigma2).t).real();
}

ComplexMatrix concentrated_mse_gradient(const ComplexMatrix& h,
                                        const ComplexMatrix& f_rf, double pt,
                                        double sigma2) {
  // With A = F^H H, G = F^H F, T = (I + c A^H G^{-1} A)^{-1}, S = T^2:
  //   grad = 2c (F G^{-1} A S A^H G^{-1} - H S A^H G^{-1})
  // in the dL/dRe + j dL/dIm convention.
  const ConcentratedParts p = concentrated_parts(h, f_rf, pt, sigma2);
  const ComplexMatrix s = matmul(p.t, p.t);
  const ComplexMatrix s_ah_ginv = matmul(s, hermitian(p.g_inv_a));  // K x N_RF
  const ComplexMatrix w2 = matmul(matmul(f_rf, p.g_inv_a), s_ah_ginv);
  const ComplexMatrix w1 = matmul(h, s_ah_ginv);
  return scale(sub(w2, w1), 2.0 * p.c);
}

std::pair<std::vector<double>, double> sinr_and_sum_rate(
    const ComplexMatrix& h, const ComplexMatrix& f_rf,
    const ComplexMatrix& f_bb, double sigma2) {
  if (!(sigma2 > 0.0))
    throw ContractError("sinr: sigma2 must be positive");
  const std::size_t k = h.cols();
  const ComplexMatrix g = matmul(matmul(hermitian(h), f_rf), f_bb);  // K x K
  std::vector<double> sinr(k);
  double rate = 0.0;
  for (std::size_t u = 0; u < k; ++u) {
    const double signal = std::norm(g(u, u));
    double interference = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      if (i != u) interference += std::norm(g(u, i));
    sinr[u] = signal / (interference + sigma2);
    rate += std::log2(1.0 + sinr[u]);
  }
  return {std::move(sinr), rate};
}

LinkMetrics link_metrics(const ComplexMatrix& h, const ComplexMatrix& f_rf,
                         const ComplexMatrix& f_bb, double beta,
                         double sigma2) {
  LinkMetrics m;
  auto [sinr, rate] = sinr_and_sum_rate(h, f_rf, f_bb, sigma2);
  m.sinr = std::move(sinr);
  m.sum_rate = rate;
  m.sum_mse = sum_mse(h, f_rf, f_bb, beta, sigma2);
  m.sum_mse_db = 10.0 * std::log10(m.sum_mse);
  return m;
}

EffectiveChannel estimate_effective_channel(
    const std::vector<ComplexMatrix>& observations) {
  if (observations.empty())
    throw ContractError("estimate_effective_channel: empty observation list");
  ComplexMatrix mean = observations[0];
  for (std::size_t i = 1; i < observations.size(); ++i)
    mean = add(mean, observations[i]);
  mean = scale(mean, 1.0 / static_cast<double>(observations.size()));
  return {hermitian(mean), observations.size()};
}

DigitalPrecoder digital_from_effective(const EffectiveChannel& h_eq,
                                       const AnalogPrecoder& f_rf, double pt,
                                       double sigma2, double damping) {
  if (damping < 0.0)
    throw ContractError("digital_from_effective: damping must be >= 0");
  const ComplexMatrix& heq = h_eq.h_eq;  // K x N_RF
  const ComplexMatrix& f = f_rf.f_rf;
  const std::size_t k = heq.rows();
  const double lambda = static_cast<double>(k) * sigma2 / pt;
  ComplexMatrix lhs = add(matmul(hermitian(heq), heq),
                          scale(matmul(hermitian(f), f), lambda));
  for (std::size_t i = 0; i < lhs.rows(); ++i) lhs(i, i) += damping;
  lhs = gram_jitter(scale(add(lhs, hermitian(lhs)), 0.5));
  ComplexMatrix f_tilde;
  try {
    f_tilde = cholesky_solve(lhs, hermitian(heq)).x;
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) +
                       " (try a larger damping factor)");
  }
  const double power = frobenius_norm_sq(matmul(f, f_tilde));
  if (!(power > 0.0))
    throw NumericError("digital_from_effective: zero effective channel");
  DigitalPrecoder out;
  out.beta = std::sqrt(pt / power);
  out.f_bb_unnormalized = f_tilde;
  out.f_bb = scale(f_tilde, out.beta);
  return out;
}

FullyDigitalPrecoder fully_digital_mmse(const ComplexMatrix& h, double pt,
                                        double sigma2) {
  if (frobenius_norm(h) == 0.0)
    throw NumericError("fully_digital_mmse: zero channel");
  const std::size_t k = h.cols();
  const double lambda = static_cast<double>(k) * sigma2 / pt;
  // (H H^H + lambda I_M)^{-1} H = H (H^H H + lambda I_K)^{-1} (push-through).
  ComplexMatrix small = matmul(hermitian(h), h);
  for (std::size_t i = 0; i < k; ++i) small(i, i) += lambda;
  small = scale(add(small, hermitian(small)), 0.5);
  const ComplexMatrix f_tilde =
      matmul(h, cholesky_solve(small, ComplexMatrix::identity(k)).x);
  const double power = frobenius_norm_sq(f_tilde);
  FullyDigitalPrecoder out;
  out.beta = std::sqrt(pt / power);
  out.f = scale(f_tilde, out.beta);
  return out;
}

ComplexMatrix project_cm(const ComplexMatrix& x) {
  const double target = 1.0 / std::sqrt(static_cast<double>(x.rows()));
  ComplexMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = std::abs(x.data()[i]);
    out.data()[i] = m == 0.0 ? cdouble{target, 0.0}
                             : x.data()[i] * (target / m);
  }
  return out;
}

AnalogPrecoder random_cm_precoder(std::size_t m, std::size_t n_rf,
                                  RngStream& rng) {
  const double target = 1.0 / std::sqrt(static_cast<double>(m));
  ComplexMatrix f(m, n_rf);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double phase = rng.next_uniform(0.0, 2.0 * kPi);
    f.data()[i] = cdouble{target * std::cos(phase), target * std::sin(phase)};
  }
  return {std::move(f)};
}

ReferenceResult projected_gradient_reference(const ComplexMatrix& h,
                                             const ReferenceOptimizerConfig& cfg,
                                             double pt, double sigma2,
                                             std::size_t n_rf, RngStream& rng) {
  ComplexMatrix f = random_cm_precoder(h.rows(), n_rf, rng).f_rf;
  double obj = concentrated_mse(h, f, pt, sigma2);
  ReferenceResult res;
  res.objective_trace.push_back(obj);
  double step = cfg.initial_step;
  for (std::size_t it = 0; it < cfg.n_iter; ++it) {
    const ComplexMatrix grad = concentrated_mse_gradient(h, f, pt, sigma2);
    bool accepted = false;
    for (std::size_t bt = 0; bt <= cfg.max_backtracks; ++bt) {
      const ComplexMatrix cand = project_cm(sub(f, scale(grad, step)));
      const double cand_obj = concentrated_mse(h, cand, pt, sigma2);
      if (cand_obj < obj) {
        const double decrease = obj - cand_obj;
        f = cand;
        obj = cand_obj;
        res.objective_trace.push_back(obj);
        accepted = true;
        step *= 2.0;  // mild re-expansion after success
        if (decrease < cfg.tolerance) it = cfg.n_iter;  // converged
        break;
      }
      step *= cfg.backtrack_factor;
    }
    if (!accepted) break;  // no decrease found within the backtrack cap
  }
  res.precoder = AnalogPrecoder{std::move(f)};
  return res;
}

}  // namespace xlbeam
