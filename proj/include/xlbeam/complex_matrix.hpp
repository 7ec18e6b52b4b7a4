#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "xlbeam/common.hpp"
#include "xlbeam/rng.hpp"

namespace xlbeam {

/// Dense row-major complex matrix, double precision throughout. The universal
/// value type for channels, precoders and network activations. Immutable by
/// convention once handed to the autodiff graph.
class ComplexMatrix {
 public:
  ComplexMatrix() : rows_(0), cols_(0) {}
  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {}

  static ComplexMatrix zeros(std::size_t rows, std::size_t cols) {
    return ComplexMatrix(rows, cols);
  }
  static ComplexMatrix identity(std::size_t n);
  static ComplexMatrix scaled_identity(std::size_t n, cdouble v);
  /// Row-major nested initializer, e.g. {{1, 2}, {3, 4}}.
  static ComplexMatrix from_rows(
      std::initializer_list<std::initializer_list<cdouble>> rows);
  /// Entries i.i.d. CN(0, sigma2).
  static ComplexMatrix random_gaussian(std::size_t rows, std::size_t cols,
                                       double sigma2, RngStream& rng);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  cdouble& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  cdouble operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  cdouble* data() { return data_.data(); }
  const cdouble* data() const { return data_.data(); }

  bool same_shape(const ComplexMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool all_finite() const;

 private:
  std::size_t rows_, cols_;
  std::vector<cdouble> data_;
};

// Shape-checked arithmetic. All functions allocate their result.
ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix sub(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix scale(const ComplexMatrix& a, cdouble c);
ComplexMatrix add_scalar(const ComplexMatrix& a, cdouble c);
ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix hadamard(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix hadamard_div(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix conjugate(const ComplexMatrix& a);
ComplexMatrix transpose(const ComplexMatrix& a);
ComplexMatrix hermitian(const ComplexMatrix& a);
/// Elementwise |a| as a real-valued matrix.
ComplexMatrix modulus(const ComplexMatrix& a);
ComplexMatrix real_part(const ComplexMatrix& a);
ComplexMatrix imag_part(const ComplexMatrix& a);

cdouble trace(const ComplexMatrix& a);
double frobenius_norm(const ComplexMatrix& a);
double frobenius_norm_sq(const ComplexMatrix& a);
double max_abs(const ComplexMatrix& a);
/// Frobenius inner product tr(a^H b).
cdouble inner(const ComplexMatrix& a, const ComplexMatrix& b);
bool equal_bits(const ComplexMatrix& a, const ComplexMatrix& b);
/// ||a - b||_F / max(||b||_F, floor)
double relative_error(const ComplexMatrix& a, const ComplexMatrix& b,
                      double floor = 1e-300);

inline ComplexMatrix operator+(const ComplexMatrix& a, const ComplexMatrix& b) {
  return add(a, b);
}
inline ComplexMatrix operator-(const ComplexMatrix& a, const ComplexMatrix& b) {
  return sub(a, b);
}
inline ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
  return matmul(a, b);
}
inline ComplexMatrix operator*(cdouble c, const ComplexMatrix& a) {
  return scale(a, c);
}

}  // namespace xlbeam
