#pragma once

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "xlbeam/complex_matrix.hpp"
#include "xlbeam/linalg.hpp"

namespace xlbeam::ad {

// Gradient convention
// -------------------
// For a real scalar loss L and a complex matrix variable W, the gradient
// stored on the node is
//
//     grad(W) = dL/dRe(W) + j * dL/dIm(W)   (elementwise)
//
// i.e. twice the Wirtinger cogradient dL/dW*. With this packing the real and
// imaginary parts of grad match central finite differences on the individual
// real components, and the optimizer treats (Re, Im) as two real parameters.
// Equivalently, for any perturbation dW,  dL = Re<grad, dW>  under the
// Frobenius inner product <A, B> = tr(A^H B); every adjoint rule below is
// derived from that identity.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  ComplexMatrix value;
  ComplexMatrix grad;   // allocated lazily during backward
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  // Propagates this node's grad into its parents. Null on leaves; a non-leaf
  // without one triggers the "no adjoint rule" error.
  std::function<void(Node&)> backward_fn;

  void accumulate(const ComplexMatrix& g);
  void ensure_grad();
};

/// Value-semantics handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  /// Leaf that participates in differentiation.
  static Var parameter(ComplexMatrix value);
  /// Leaf treated as a constant (no gradient).
  static Var constant(ComplexMatrix value);

  const ComplexMatrix& value() const { return node_->value; }
  const ComplexMatrix& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  NodePtr node() const { return node_; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

 private:
  NodePtr node_;
};

// -- Primitive set -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, cdouble c);
Var add_scalar(const Var& a, cdouble c);
Var conj(const Var& a);
Var transpose(const Var& a);
Var hermitian(const Var& a);
Var matmul(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var hadamard_div(const Var& a, const Var& b);
/// Elementwise |a|; real-valued output. Gradient at an exact zero entry is 0.
Var modulus(const Var& a);
Var real(const Var& a);
Var imag(const Var& a);
/// r + j*i from two real-valued matrices.
Var complex_join(const Var& r, const Var& i);
/// tanh applied to the real part; imaginary part dropped (inputs real-valued).
Var tanh_real(const Var& a);
/// tanh(Re) + j tanh(Im), fused.
Var ctanh(const Var& a);
Var trace(const Var& a);
/// X = A^{-1} B for Hermitian positive definite A (Cholesky, factor reused in
/// the backward pass). Adjoints: grad_B = A^{-1} grad_X, grad_A = -grad_B X^H.
Var cholesky_solve(const Var& a, const Var& b);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice(const Var& a, std::size_t r0, std::size_t c0, std::size_t rows,
          std::size_t cols);
/// Column-major unvec: n*m x 1 vector -> rows x cols matrix.
Var reshape_colmajor(const Var& v, std::size_t rows, std::size_t cols);
/// D x (S*K) with columns ordered (sample-major, user-minor) -> (K*D) x S
/// where user k's block occupies rows [k*D, (k+1)*D).
Var stack_user_columns(const Var& a, std::size_t users);
/// Mean of 1x1 nodes (batch mean).
Var mean(const std::vector<Var>& scalars);
/// X (D x B) + b (D x 1) broadcast over columns.
Var add_col_broadcast(const Var& x, const Var& b);

/// Per-feature (row) complex batch normalization whitening over the columns:
/// center by the batch mean and apply C^{-1/2} of the 2x2 real covariance
/// (+eps on the diagonal). Emits the batch statistics for running-stat
/// updates: mean per feature and covariance triples (Vrr, Vii, Vri) prior to
/// the eps shift.
struct WhitenStats {
  std::vector<cdouble> mean;               // per feature
  std::vector<std::array<double, 3>> cov;  // per feature, without eps
};
Var batch_whiten(const Var& x, double eps, WhitenStats* stats = nullptr);

/// y = gamma [Re x; Im x] + shift, elementwise over x. gamma is a 2x2
/// parameter whose imaginary storage is unused (kept exactly zero by the
/// gradient); shift is a 1x1 complex parameter.
Var reim_affine(const Var& x, const Var& gamma, const Var& shift);

/// Extension hook: node with externally supplied value/backward. Used to
/// exercise the "no adjoint rule" error path and for test doubles.
Var custom(const char* name, ComplexMatrix value, std::vector<Var> parents,
           std::function<void(Node&)> backward_fn);

/// Reverse sweep from a real scalar loss (imaginary part below 1e-12).
/// After it returns, every reachable parameter holds its gradient.
void backward(const Var& loss);

}  // namespace xlbeam::ad
