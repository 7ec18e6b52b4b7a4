#include "xlbeam/complex_matrix.hpp"

#include <algorithm>
#include <cmath>

namespace xlbeam {
namespace {

void require_same_shape(const ComplexMatrix& a, const ComplexMatrix& b,
                        const char* op) {
  if (!a.same_shape(b))
    throw ContractError(std::string(op) + ": shape mismatch");
}

}  // namespace

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
  return scaled_identity(n, cdouble{1.0, 0.0});
}

ComplexMatrix ComplexMatrix::scaled_identity(std::size_t n, cdouble v) {
  ComplexMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = v;
  return m;
}

ComplexMatrix ComplexMatrix::from_rows(
    std::initializer_list<std::initializer_list<cdouble>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  ComplexMatrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractError("from_rows: ragged rows");
    std::size_t j = 0;
    for (cdouble v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

ComplexMatrix ComplexMatrix::random_gaussian(std::size_t rows,
                                             std::size_t cols, double sigma2,
                                             RngStream& rng) {
  ComplexMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i)
    m.data()[i] = rng.next_cgaussian(sigma2);
  return m;
}

bool ComplexMatrix::all_finite() const {
  for (const cdouble& v : data_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b, "add");
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

ComplexMatrix sub(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b, "sub");
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

ComplexMatrix scale(const ComplexMatrix& a, cdouble c) {
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = c * a.data()[i];
  return out;
}

ComplexMatrix add_scalar(const ComplexMatrix& a, cdouble c) {
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + c;
  return out;
}

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows()) throw ContractError("matmul: inner dim mismatch");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  ComplexMatrix out(m, n);
  // Inner kernel works on the interleaved (re, im) doubles directly; the
  // complex axpy vectorizes where std::complex arithmetic does not.
  auto row_job = [&](std::size_t i) {
    double* __restrict dst = reinterpret_cast<double*>(out.data() + i * n);
    const cdouble* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double ar = arow[p].real(), ai = arow[p].imag();
      if (ar == 0.0 && ai == 0.0) continue;
      const double* __restrict brow =
          reinterpret_cast<const double*>(b.data() + p * n);
      for (std::size_t j = 0; j < n; ++j) {
        const double br = brow[2 * j], bi = brow[2 * j + 1];
        dst[2 * j] += ar * br - ai * bi;
        dst[2 * j + 1] += ar * bi + ai * br;
      }
    }
  };
  // Row-parallel: each output row is written by exactly one worker, so the
  // result is bit-identical regardless of thread count.
  if (m * n * k >= (std::size_t{1} << 16) && m > 1) {
    parallel_for(m, row_job);
  } else {
    for (std::size_t i = 0; i < m; ++i) row_job(i);
  }
  return out;
}

ComplexMatrix hadamard(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b, "hadamard");
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

ComplexMatrix hadamard_div(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b, "hadamard_div");
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] / b.data()[i];
  return out;
}

ComplexMatrix conjugate(const ComplexMatrix& a) {
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = std::conj(a.data()[i]);
  return out;
}

ComplexMatrix transpose(const ComplexMatrix& a) {
  ComplexMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

ComplexMatrix hermitian(const ComplexMatrix& a) {
  ComplexMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = std::conj(a(i, j));
  return out;
}

ComplexMatrix modulus(const ComplexMatrix& a) {
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = cdouble{std::abs(a.data()[i]), 0.0};
  return out;
}

ComplexMatrix real_part(const ComplexMatrix& a) {
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = cdouble{a.data()[i].real(), 0.0};
  return out;
}

ComplexMatrix imag_part(const ComplexMatrix& a) {
  ComplexMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = cdouble{a.data()[i].imag(), 0.0};
  return out;
}

cdouble trace(const ComplexMatrix& a) {
  if (a.rows() != a.cols()) throw ContractError("trace: non-square");
  cdouble t{0.0, 0.0};
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

double frobenius_norm_sq(const ComplexMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a.data()[i]);
  return s;
}

double frobenius_norm(const ComplexMatrix& a) {
  return std::sqrt(frobenius_norm_sq(a));
}

double max_abs(const ComplexMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s = std::max(s, std::abs(a.data()[i]));
  return s;
}

cdouble inner(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b, "inner");
  cdouble s{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::conj(a.data()[i]) * b.data()[i];
  return s;
}

bool equal_bits(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

double relative_error(const ComplexMatrix& a, const ComplexMatrix& b,
                      double floor) {
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    num += std::norm(a.data()[i] - b.data()[i]);
  return std::sqrt(num) / std::max(frobenius_norm(b), floor);
}

}  // namespace xlbeam
