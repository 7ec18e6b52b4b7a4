#include "xlbeam/linalg.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace xlbeam {
namespace {

double hermitian_deviation(const ComplexMatrix& a) {
  double dev = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i; j < a.cols(); ++j)
      dev += std::norm(a(i, j) - std::conj(a(j, i)));
  return std::sqrt(2.0 * dev);
}

void require_hermitian(const ComplexMatrix& a, double tol, const char* who) {
  if (a.rows() != a.cols())
    throw ContractError(std::string(who) + ": matrix not square");
  const double scale = std::max(1.0, frobenius_norm(a));
  if (hermitian_deviation(a) > tol * scale)
    throw ContractError(std::string(who) +
                        ": contract violation, input not Hermitian");
}

}  // namespace

CholeskyFactor::CholeskyFactor(const ComplexMatrix& a, double herm_tol)
    : n_(a.rows()), l_(a.rows(), a.cols()) {
  require_hermitian(a, herm_tol, "cholesky");
  for (std::size_t j = 0; j < n_; ++j) {
    double diag = a(j, j).real();
    for (std::size_t k = 0; k < j; ++k) diag -= std::norm(l_(j, k));
    if (!(diag > 0.0))
      throw NumericError("cholesky: not positive definite at pivot " +
                         std::to_string(j));
    const double ljj = std::sqrt(diag);
    l_(j, j) = ljj;
    for (std::size_t i = j + 1; i < n_; ++i) {
      cdouble s = a(i, j);
      for (std::size_t k = 0; k < j; ++k)
        s -= l_(i, k) * std::conj(l_(j, k));
      l_(i, j) = s / ljj;
    }
  }
}

ComplexMatrix CholeskyFactor::solve(const ComplexMatrix& b) const {
  if (b.rows() != n_) throw ContractError("cholesky solve: shape mismatch");
  const std::size_t m = b.cols();
  // Forward: L y = b.
  ComplexMatrix y(n_, m);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t c = 0; c < m; ++c) {
      cdouble s = b(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * y(k, c);
      y(i, c) = s / l_(i, i);
    }
  }
  // Backward: L^H x = y.
  ComplexMatrix x(n_, m);
  for (std::size_t ii = n_; ii-- > 0;) {
    for (std::size_t c = 0; c < m; ++c) {
      cdouble s = y(ii, c);
      for (std::size_t k = ii + 1; k < n_; ++k)
        s -= std::conj(l_(k, ii)) * x(k, c);
      x(ii, c) = s / l_(ii, ii);
    }
  }
  return x;
}

HermitianSolveResult cholesky_solve(const ComplexMatrix& a,
                                    const ComplexMatrix& b,
                                    double residual_tol) {
  auto factor = std::make_shared<CholeskyFactor>(a);
  ComplexMatrix x = factor->solve(b);
  const double bnorm = frobenius_norm(b);
  double residual = 0.0;
  if (bnorm > 0.0) residual = frobenius_norm(matmul(a, x) - b) / bnorm;
  if (residual > residual_tol)
    throw NumericError("cholesky_solve: residual " + std::to_string(residual) +
                       " above tolerance");
  return {std::move(x), std::move(factor), residual};
}

EigResult hermitian_eig(const ComplexMatrix& a, double herm_tol) {
  require_hermitian(a, herm_tol, "hermitian_eig");
  const std::size_t n = a.rows();
  ComplexMatrix w = a;
  ComplexMatrix v = ComplexMatrix::identity(n);
  const double anorm = frobenius_norm(a);
  const double stop = 1e-12 * std::max(1.0, anorm);

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += std::norm(w(i, j));
    return std::sqrt(2.0 * s);
  };

  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    if (off_norm() <= stop) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const cdouble z = w(p, q);
        const double az = std::abs(z);
        if (az == 0.0) continue;
        const double app = w(p, p).real();
        const double aqq = w(q, q).real();
        const double theta = (aqq - app) / (2.0 * az);
        // Small-magnitude root of t^2 - 2 theta t - 1 = 0.
        const double t =
            (theta >= 0.0 ? -1.0 : 1.0) /
            (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sigma = t * c;
        const cdouble phase = z / az;          // e^{j phi}
        const cdouble s = sigma / phase;       // sigma * e^{-j phi}
        // Column rotation: col_p' = c col_p + s col_q,
        //                  col_q' = -conj(s) col_p + c col_q.
        for (std::size_t i = 0; i < n; ++i) {
          const cdouble wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp + s * wq;
          w(i, q) = -std::conj(s) * wp + c * wq;
          const cdouble vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp + s * vq;
          v(i, q) = -std::conj(s) * vp + c * vq;
        }
        // Row rotation with J^H.
        for (std::size_t jj = 0; jj < n; ++jj) {
          const cdouble wp = w(p, jj), wq = w(q, jj);
          w(p, jj) = c * wp + std::conj(s) * wq;
          w(q, jj) = -s * wp + c * wq;
        }
        w(p, q) = 0.0;
        w(q, p) = 0.0;
      }
    }
  }
  if (sweep == kMaxSweeps && off_norm() > stop)
    throw NumericError("hermitian_eig: no convergence after 100 sweeps, "
                       "off-diagonal norm " +
                       std::to_string(off_norm()));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = w(i, i).real();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return diag[x] < diag[y]; });

  EigResult res;
  res.eigenvalues.resize(n);
  res.eigenvectors = ComplexMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    res.eigenvalues[k] = diag[order[k]];
    for (std::size_t i = 0; i < n; ++i)
      res.eigenvectors(i, k) = v(i, order[k]);
  }
  return res;
}

Mat2 Mat2::mul(const Mat2& o) const {
  return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11,
          m10 * o.m00 + m11 * o.m10, m10 * o.m01 + m11 * o.m11};
}

std::array<double, 2> Mat2::apply(double x, double y) const {
  return {m00 * x + m01 * y, m10 * x + m11 * y};
}

Mat2 inv_sqrt_spd_2x2(const Mat2& v) {
  const double det = v.m00 * v.m11 - v.m01 * v.m10;
  const double tr = v.m00 + v.m11;
  if (!(det > 0.0) || !(tr > 0.0))
    throw NumericError("inv_sqrt_spd_2x2: matrix not positive definite");
  const double sd = std::sqrt(det);
  const double s = std::sqrt(tr + 2.0 * sd);
  // V^{-1/2} = ((s^2 - sd) I - V) / (sd * s)
  const double k = 1.0 / (sd * s);
  return {(s * s - sd - v.m00) * k, -v.m01 * k, -v.m10 * k,
          (s * s - sd - v.m11) * k};
}

void eig_sym_2x2(const Mat2& v, Mat2& q, double& w1, double& w2) {
  const double a = v.m00, b = 0.5 * (v.m01 + v.m10), d = v.m11;
  const double ang = 0.5 * std::atan2(2.0 * b, a - d);
  const double c = std::cos(ang), s = std::sin(ang);
  q = {c, -s, s, c};
  w1 = a * c * c + 2.0 * b * c * s + d * s * s;
  w2 = a * s * s - 2.0 * b * c * s + d * c * c;
}

Mat2 sylvester_spd_2x2(const Mat2& w, const Mat2& c) {
  Mat2 q{};
  double w1 = 0.0, w2 = 0.0;
  eig_sym_2x2(w, q, w1, w2);
  // C~ = Q^T C Q, X~_ij = C~_ij / (w_i + w_j), X = Q X~ Q^T.
  const Mat2 ct = q.transposed().mul(c).mul(q);
  const Mat2 xt = {ct.m00 / (2.0 * w1), ct.m01 / (w1 + w2),
                   ct.m10 / (w1 + w2), ct.m11 / (2.0 * w2)};
  return q.mul(xt).mul(q.transposed());
}

}  // namespace xlbeam
