#pragma once

#include <array>
#include <memory>
#include <vector>

#include "xlbeam/complex_matrix.hpp"

namespace xlbeam {

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
/// Solves reuse the factor; no explicit inverse is ever formed.
class CholeskyFactor {
 public:
  /// Factors A = L L^H. Throws ContractError if A is not Hermitian within
  /// `herm_tol` (relative) and NumericError with the failing pivot index if a
  /// pivot is not positive.
  explicit CholeskyFactor(const ComplexMatrix& a, double herm_tol = 1e-10);

  std::size_t dim() const { return n_; }
  /// Solves A X = B via forward/backward substitution.
  ComplexMatrix solve(const ComplexMatrix& b) const;

 private:
  std::size_t n_;
  ComplexMatrix l_;
};

struct HermitianSolveResult {
  ComplexMatrix x;                            // A x = b
  std::shared_ptr<CholeskyFactor> factor;     // retained for reuse
  double residual;                            // ||A x - b||_F / ||b||_F
};

/// Cholesky-based Hermitian solve with a residual guarantee (default 1e-10).
HermitianSolveResult cholesky_solve(const ComplexMatrix& a,
                                    const ComplexMatrix& b,
                                    double residual_tol = 1e-10);

struct EigResult {
  std::vector<double> eigenvalues;  // ascending
  ComplexMatrix eigenvectors;       // unitary, columns match eigenvalues
};

/// Cyclic Jacobi eigendecomposition for Hermitian matrices. Stops when the
/// off-diagonal norm drops below 1e-12 (relative to ||A||_F), capped at 100
/// sweeps; past the cap throws NumericError reporting the off-diagonal norm.
EigResult hermitian_eig(const ComplexMatrix& a, double herm_tol = 1e-10);

/// Symmetric real 2x2 utilities used by the complex batch-norm whitening.
struct Mat2 {
  // [ [a, b], [b, d] ] when symmetric; general storage row-major.
  double m00, m01, m10, m11;

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  Mat2 mul(const Mat2& o) const;
  std::array<double, 2> apply(double x, double y) const;
  Mat2 transposed() const { return {m00, m10, m01, m11}; }
};

/// Closed-form inverse square root of a symmetric positive definite 2x2
/// matrix via the trace/determinant formula.
Mat2 inv_sqrt_spd_2x2(const Mat2& v);

/// Eigendecomposition of a symmetric 2x2: returns (q, w1, w2) with
/// V = Q diag(w1, w2) Q^T and Q a rotation.
void eig_sym_2x2(const Mat2& v, Mat2& q, double& w1, double& w2);

/// Solves X W + W X = C for symmetric X given SPD W and symmetric C.
Mat2 sylvester_spd_2x2(const Mat2& w, const Mat2& c);

}  // namespace xlbeam
