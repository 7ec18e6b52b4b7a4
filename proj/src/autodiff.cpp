#include "xlbeam/autodiff.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace xlbeam::ad {
namespace {

NodePtr make_node(const char* op, ComplexMatrix value,
                  std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

bool wants(const NodePtr& p) { return p->requires_grad; }

}  // namespace

void Node::ensure_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols())
    grad = ComplexMatrix(value.rows(), value.cols());
}

void Node::accumulate(const ComplexMatrix& g) {
  ensure_grad();
  for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] += g.data()[i];
}

Var Var::parameter(ComplexMatrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var Var::constant(ComplexMatrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

const ComplexMatrix& Var::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

Var add(const Var& a, const Var& b) {
  auto fn = [](Node& n) {
    if (wants(n.parents[0])) n.parents[0]->accumulate(n.grad);
    if (wants(n.parents[1])) n.parents[1]->accumulate(n.grad);
  };
  return Var(make_node("add", xlbeam::add(a.value(), b.value()),
                       {a.node(), b.node()}, fn));
}

Var sub(const Var& a, const Var& b) {
  auto fn = [](Node& n) {
    if (wants(n.parents[0])) n.parents[0]->accumulate(n.grad);
    if (wants(n.parents[1])) n.parents[1]->accumulate(scale(n.grad, -1.0));
  };
  return Var(make_node("sub", xlbeam::sub(a.value(), b.value()),
                       {a.node(), b.node()}, fn));
}

Var scale(const Var& a, cdouble c) {
  auto fn = [c](Node& n) {
    if (wants(n.parents[0]))
      n.parents[0]->accumulate(xlbeam::scale(n.grad, std::conj(c)));
  };
  return Var(make_node("scale", xlbeam::scale(a.value(), c), {a.node()}, fn));
}

Var add_scalar(const Var& a, cdouble c) {
  auto fn = [](Node& n) {
    if (wants(n.parents[0])) n.parents[0]->accumulate(n.grad);
  };
  return Var(
      make_node("add_scalar", xlbeam::add_scalar(a.value(), c), {a.node()}, fn));
}

Var conj(const Var& a) {
  auto fn = [](Node& n) {
    if (wants(n.parents[0])) n.parents[0]->accumulate(conjugate(n.grad));
  };
  return Var(make_node("conj", conjugate(a.value()), {a.node()}, fn));
}

Var transpose(const Var& a) {
  auto fn = [](Node& n) {
    if (wants(n.parents[0]))
      n.parents[0]->accumulate(xlbeam::transpose(n.grad));
  };
  return Var(make_node("transpose", xlbeam::transpose(a.value()), {a.node()}, fn));
}

Var hermitian(const Var& a) {
  auto fn = [](Node& n) {
    if (wants(n.parents[0]))
      n.parents[0]->accumulate(xlbeam::hermitian(n.grad));
  };
  return Var(make_node("hermitian", xlbeam::hermitian(a.value()), {a.node()}, fn));
}

Var matmul(const Var& a, const Var& b) {
  auto fn = [](Node& n) {
    const ComplexMatrix& av = n.parents[0]->value;
    const ComplexMatrix& bv = n.parents[1]->value;
    if (wants(n.parents[0]))
      n.parents[0]->accumulate(xlbeam::matmul(n.grad, xlbeam::hermitian(bv)));
    if (wants(n.parents[1]))
      n.parents[1]->accumulate(xlbeam::matmul(xlbeam::hermitian(av), n.grad));
  };
  return Var(make_node("matmul", xlbeam::matmul(a.value(), b.value()),
                       {a.node(), b.node()}, fn));
}

Var hadamard(const Var& a, const Var& b) {
  auto fn = [](Node& n) {
    const ComplexMatrix& av = n.parents[0]->value;
    const ComplexMatrix& bv = n.parents[1]->value;
    if (wants(n.parents[0]))
      n.parents[0]->accumulate(xlbeam::hadamard(n.grad, conjugate(bv)));
    if (wants(n.parents[1]))
      n.parents[1]->accumulate(xlbeam::hadamard(n.grad, conjugate(av)));
  };
  return Var(make_node("hadamard", xlbeam::hadamard(a.value(), b.value()),
                       {a.node(), b.node()}, fn));
}

Var hadamard_div(const Var& a, const Var& b) {
  auto fn = [](Node& n) {
    const ComplexMatrix& av = n.parents[0]->value;
    const ComplexMatrix& bv = n.parents[1]->value;
    if (wants(n.parents[0])) {
      ComplexMatrix g(n.grad.rows(), n.grad.cols());
      for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] = n.grad.data()[i] / std::conj(bv.data()[i]);
      n.parents[0]->accumulate(g);
    }
    if (wants(n.parents[1])) {
      // d(a/b) = -(a/b^2) db
      ComplexMatrix g(n.grad.rows(), n.grad.cols());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const cdouble bi = bv.data()[i];
        g.data()[i] =
            n.grad.data()[i] * std::conj(-av.data()[i] / (bi * bi));
      }
      n.parents[1]->accumulate(g);
    }
  };
  return Var(make_node("hadamard_div",
                       xlbeam::hadamard_div(a.value(), b.value()),
                       {a.node(), b.node()}, fn));
}

Var modulus(const Var& a) {
  auto fn = [](Node& n) {
    if (!wants(n.parents[0])) return;
    const ComplexMatrix& av = n.parents[0]->value;
    ComplexMatrix g(av.rows(), av.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double m = std::abs(av.data()[i]);
      g.data()[i] = m == 0.0 ? cdouble{0.0, 0.0}
                             : n.grad.data()[i].real() * av.data()[i] / m;
    }
    n.parents[0]->accumulate(g);
  };
  return Var(make_node("modulus", xlbeam::modulus(a.value()), {a.node()}, fn));
}

Var real(const Var& a) {
  auto fn = [](Node& n) {
    if (wants(n.parents[0])) n.parents[0]->accumulate(real_part(n.grad));
  };
  return Var(make_node("real", real_part(a.value()), {a.node()}, fn));
}

Var imag(const Var& a) {
  auto fn = [](Node& n) {
    if (!wants(n.parents[0])) return;
    ComplexMatrix g(n.grad.rows(), n.grad.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
      g.data()[i] = cdouble{0.0, n.grad.data()[i].real()};
    n.parents[0]->accumulate(g);
  };
  return Var(make_node("imag", imag_part(a.value()), {a.node()}, fn));
}

Var complex_join(const Var& r, const Var& i) {
  ComplexMatrix v(r.rows(), r.cols());
  for (std::size_t k = 0; k < v.size(); ++k)
    v.data()[k] = cdouble{r.value().data()[k].real(),
                          i.value().data()[k].real()};
  auto fn = [](Node& n) {
    if (wants(n.parents[0])) n.parents[0]->accumulate(real_part(n.grad));
    if (wants(n.parents[1])) n.parents[1]->accumulate(imag_part(n.grad));
  };
  return Var(make_node("complex_join", std::move(v), {r.node(), i.node()}, fn));
}

Var tanh_real(const Var& a) {
  ComplexMatrix v(a.rows(), a.cols());
  for (std::size_t k = 0; k < v.size(); ++k)
    v.data()[k] = cdouble{std::tanh(a.value().data()[k].real()), 0.0};
  auto fn = [](Node& n) {
    if (!wants(n.parents[0])) return;
    ComplexMatrix g(n.grad.rows(), n.grad.cols());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double y = n.value.data()[k].real();
      g.data()[k] = cdouble{n.grad.data()[k].real() * (1.0 - y * y), 0.0};
    }
    n.parents[0]->accumulate(g);
  };
  return Var(make_node("tanh_real", std::move(v), {a.node()}, fn));
}

Var ctanh(const Var& a) {
  ComplexMatrix v(a.rows(), a.cols());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const cdouble x = a.value().data()[k];
    v.data()[k] = cdouble{std::tanh(x.real()), std::tanh(x.imag())};
  }
  auto fn = [](Node& n) {
    if (!wants(n.parents[0])) return;
    ComplexMatrix g(n.grad.rows(), n.grad.cols());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const cdouble y = n.value.data()[k];
      g.data()[k] =
          cdouble{n.grad.data()[k].real() * (1.0 - y.real() * y.real()),
                  n.grad.data()[k].imag() * (1.0 - y.imag() * y.imag())};
    }
    n.parents[0]->accumulate(g);
  };
  return Var(make_node("ctanh", std::move(v), {a.node()}, fn));
}

Var trace(const Var& a) {
  ComplexMatrix v(1, 1);
  v(0, 0) = xlbeam::trace(a.value());
  auto fn = [](Node& n) {
    if (!wants(n.parents[0])) return;
    const std::size_t m = n.parents[0]->value.rows();
    n.parents[0]->accumulate(
        ComplexMatrix::scaled_identity(m, n.grad(0, 0)));
  };
  return Var(make_node("trace", std::move(v), {a.node()}, fn));
}

Var cholesky_solve(const Var& a, const Var& b) {
  auto factor = std::make_shared<CholeskyFactor>(a.value());
  ComplexMatrix x = factor->solve(b.value());
  auto fn = [factor](Node& n) {
    // grad_B = A^{-1} grad_X (A Hermitian), grad_A = -grad_B X^H.
    const ComplexMatrix gb = factor->solve(n.grad);
    if (wants(n.parents[1])) n.parents[1]->accumulate(gb);
    if (wants(n.parents[0]))
      n.parents[0]->accumulate(
          xlbeam::scale(xlbeam::matmul(gb, xlbeam::hermitian(n.value)), -1.0));
  };
  return Var(make_node("cholesky_solve", std::move(x), {a.node(), b.node()}, fn));
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ContractError("concat_rows: column mismatch");
    rows += p.rows();
  }
  ComplexMatrix v(rows, cols);
  std::size_t r0 = 0;
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) v(r0 + i, j) = p.value()(i, j);
    r0 += p.rows();
    nodes.push_back(p.node());
  }
  auto fn = [](Node& n) {
    std::size_t r = 0;
    for (auto& parent : n.parents) {
      const std::size_t pr = parent->value.rows();
      if (wants(parent)) {
        ComplexMatrix g(pr, parent->value.cols());
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < g.cols(); ++j)
            g(i, j) = n.grad(r + i, j);
        parent->accumulate(g);
      }
      r += pr;
    }
  };
  return Var(make_node("concat_rows", std::move(v), std::move(nodes), fn));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ContractError("concat_cols: row mismatch");
    cols += p.cols();
  }
  ComplexMatrix v(rows, cols);
  std::size_t c0 = 0;
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) v(i, c0 + j) = p.value()(i, j);
    c0 += p.cols();
    nodes.push_back(p.node());
  }
  auto fn = [](Node& n) {
    std::size_t c = 0;
    for (auto& parent : n.parents) {
      const std::size_t pc = parent->value.cols();
      if (wants(parent)) {
        ComplexMatrix g(parent->value.rows(), pc);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < pc; ++j) g(i, j) = n.grad(i, c + j);
        parent->accumulate(g);
      }
      c += pc;
    }
  };
  return Var(make_node("concat_cols", std::move(v), std::move(nodes), fn));
}

Var slice(const Var& a, std::size_t r0, std::size_t c0, std::size_t rows,
          std::size_t cols) {
  if (r0 + rows > a.rows() || c0 + cols > a.cols())
    throw ContractError("slice: out of range");
  ComplexMatrix v(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) v(i, j) = a.value()(r0 + i, c0 + j);
  auto fn = [r0, c0](Node& n) {
    if (!wants(n.parents[0])) return;
    ComplexMatrix g(n.parents[0]->value.rows(), n.parents[0]->value.cols());
    for (std::size_t i = 0; i < n.value.rows(); ++i)
      for (std::size_t j = 0; j < n.value.cols(); ++j)
        g(r0 + i, c0 + j) = n.grad(i, j);
    n.parents[0]->accumulate(g);
  };
  return Var(make_node("slice", std::move(v), {a.node()}, fn));
}

Var reshape_colmajor(const Var& vec, std::size_t rows, std::size_t cols) {
  if (vec.cols() != 1 || vec.rows() != rows * cols)
    throw ContractError("reshape_colmajor: expected (rows*cols) x 1 input");
  ComplexMatrix v(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i)
      v(i, j) = vec.value()(j * rows + i, 0);
  auto fn = [rows, cols](Node& n) {
    if (!wants(n.parents[0])) return;
    ComplexMatrix g(rows * cols, 1);
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t i = 0; i < rows; ++i)
        g(j * rows + i, 0) = n.grad(i, j);
    n.parents[0]->accumulate(g);
  };
  return Var(make_node("reshape_colmajor", std::move(v), {vec.node()}, fn));
}

Var stack_user_columns(const Var& a, std::size_t users) {
  const std::size_t d = a.rows();
  if (users == 0 || a.cols() % users != 0)
    throw ContractError("stack_user_columns: column count not divisible");
  const std::size_t samples = a.cols() / users;
  ComplexMatrix v(users * d, samples);
  for (std::size_t s = 0; s < samples; ++s)
    for (std::size_t k = 0; k < users; ++k)
      for (std::size_t i = 0; i < d; ++i)
        v(k * d + i, s) = a.value()(i, s * users + k);
  auto fn = [d, users, samples](Node& n) {
    if (!wants(n.parents[0])) return;
    ComplexMatrix g(d, samples * users);
    for (std::size_t s = 0; s < samples; ++s)
      for (std::size_t k = 0; k < users; ++k)
        for (std::size_t i = 0; i < d; ++i)
          g(i, s * users + k) = n.grad(k * d + i, s);
    n.parents[0]->accumulate(g);
  };
  return Var(make_node("stack_user_columns", std::move(v), {a.node()}, fn));
}

Var mean(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw ContractError("mean: empty batch");
  ComplexMatrix v(1, 1);
  std::vector<NodePtr> nodes;
  nodes.reserve(scalars.size());
  for (const auto& s : scalars) {
    if (!s.value().is_scalar()) throw ContractError("mean: non-scalar entry");
    v(0, 0) += s.value()(0, 0);
    nodes.push_back(s.node());
  }
  v(0, 0) /= static_cast<double>(scalars.size());
  auto fn = [](Node& n) {
    const cdouble g = n.grad(0, 0) / static_cast<double>(n.parents.size());
    ComplexMatrix gm(1, 1);
    gm(0, 0) = g;
    for (auto& p : n.parents)
      if (wants(p)) p->accumulate(gm);
  };
  return Var(make_node("mean", std::move(v), std::move(nodes), fn));
}

Var add_col_broadcast(const Var& x, const Var& b) {
  if (b.cols() != 1 || b.rows() != x.rows())
    throw ContractError("add_col_broadcast: bias must be rows x 1");
  ComplexMatrix v = x.value();
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += b.value()(i, 0);
  auto fn = [](Node& n) {
    if (wants(n.parents[0])) n.parents[0]->accumulate(n.grad);
    if (wants(n.parents[1])) {
      ComplexMatrix g(n.parents[1]->value.rows(), 1);
      for (std::size_t i = 0; i < n.grad.rows(); ++i) {
        cdouble s{0.0, 0.0};
        for (std::size_t j = 0; j < n.grad.cols(); ++j) s += n.grad(i, j);
        g(i, 0) = s;
      }
      n.parents[1]->accumulate(g);
    }
  };
  return Var(make_node("add_col_broadcast", std::move(v),
                       {x.node(), b.node()}, fn));
}

Var batch_whiten(const Var& x, double eps, WhitenStats* stats) {
  const std::size_t d = x.rows(), batch = x.cols();
  if (batch < 2) throw ContractError("batch_whiten: batch size must be >= 2");
  const ComplexMatrix& xv = x.value();
  ComplexMatrix v(d, batch);
  auto mu = std::make_shared<std::vector<cdouble>>(d);
  auto wmats = std::make_shared<std::vector<Mat2>>(d);
  std::vector<std::array<double, 3>> raw_cov(d);
  for (std::size_t f = 0; f < d; ++f) {
    cdouble m{0.0, 0.0};
    for (std::size_t j = 0; j < batch; ++j) m += xv(f, j);
    m /= static_cast<double>(batch);
    (*mu)[f] = m;
    double vrr = 0.0, vii = 0.0, vri = 0.0;
    for (std::size_t j = 0; j < batch; ++j) {
      const cdouble c = xv(f, j) - m;
      vrr += c.real() * c.real();
      vii += c.imag() * c.imag();
      vri += c.real() * c.imag();
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    vrr *= inv_b;
    vii *= inv_b;
    vri *= inv_b;
    raw_cov[f] = {vrr, vii, vri};
    const Mat2 w = inv_sqrt_spd_2x2({vrr + eps, vri, vri, vii + eps});
    (*wmats)[f] = w;
    for (std::size_t j = 0; j < batch; ++j) {
      const cdouble c = xv(f, j) - m;
      const auto o = w.apply(c.real(), c.imag());
      v(f, j) = cdouble{o[0], o[1]};
    }
  }
  if (stats) {
    stats->mean = *mu;
    stats->cov = std::move(raw_cov);
  }
  auto fn = [mu, wmats](Node& n) {
    if (!wants(n.parents[0])) return;
    const ComplexMatrix& xin = n.parents[0]->value;
    const std::size_t dd = xin.rows(), bb = xin.cols();
    ComplexMatrix g(dd, bb);
    for (std::size_t f = 0; f < dd; ++f) {
      const Mat2& w = (*wmats)[f];
      const cdouble m = (*mu)[f];
      // M_W = sum_b g_b c_b^T, then chain through W = V^{-1/2} and the
      // batch covariance / mean.
      Mat2 mw{0.0, 0.0, 0.0, 0.0};
      for (std::size_t j = 0; j < bb; ++j) {
        const cdouble gj = n.grad(f, j);
        const cdouble cj = xin(f, j) - m;
        mw.m00 += gj.real() * cj.real();
        mw.m01 += gj.real() * cj.imag();
        mw.m10 += gj.imag() * cj.real();
        mw.m11 += gj.imag() * cj.imag();
      }
      const Mat2 mws = {mw.m00, 0.5 * (mw.m01 + mw.m10),
                        0.5 * (mw.m01 + mw.m10), mw.m11};
      // Solve S W + W S = sym(M_W); then M_V = -W^2 S W^2 = -W (W S W) W.
      const Mat2 st = sylvester_spd_2x2(w, mws);
      const Mat2 w2 = w.mul(w);
      const Mat2 mv = w2.mul(st).mul(w2);
      const double s = -2.0 / static_cast<double>(bb);
      double hx_sum = 0.0, hy_sum = 0.0;
      std::vector<std::array<double, 2>> h(bb);
      for (std::size_t j = 0; j < bb; ++j) {
        const cdouble gj = n.grad(f, j);
        const cdouble cj = xin(f, j) - m;
        const auto wg = w.apply(gj.real(), gj.imag());
        const auto mc = mv.apply(cj.real(), cj.imag());
        h[j] = {wg[0] + s * mc[0], wg[1] + s * mc[1]};
        hx_sum += h[j][0];
        hy_sum += h[j][1];
      }
      const double hx_mean = hx_sum / static_cast<double>(bb);
      const double hy_mean = hy_sum / static_cast<double>(bb);
      for (std::size_t j = 0; j < bb; ++j)
        g(f, j) = cdouble{h[j][0] - hx_mean, h[j][1] - hy_mean};
    }
    n.parents[0]->accumulate(g);
  };
  return Var(make_node("batch_whiten", std::move(v), {x.node()}, fn));
}

Var reim_affine(const Var& x, const Var& gamma, const Var& shift) {
  if (gamma.rows() != 2 || gamma.cols() != 2 || !shift.value().is_scalar())
    throw ContractError("reim_affine: gamma must be 2x2, shift 1x1");
  const double g00 = gamma.value()(0, 0).real();
  const double g01 = gamma.value()(0, 1).real();
  const double g10 = gamma.value()(1, 0).real();
  const double g11 = gamma.value()(1, 1).real();
  const cdouble sh = shift.value()(0, 0);
  ComplexMatrix v(x.rows(), x.cols());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const cdouble c = x.value().data()[i];
    v.data()[i] = cdouble{g00 * c.real() + g01 * c.imag(),
                          g10 * c.real() + g11 * c.imag()} +
                  sh;
  }
  auto fn = [g00, g01, g10, g11](Node& n) {
    const ComplexMatrix& xin = n.parents[0]->value;
    if (wants(n.parents[0])) {
      ComplexMatrix g(xin.rows(), xin.cols());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const cdouble gj = n.grad.data()[i];
        g.data()[i] = cdouble{g00 * gj.real() + g10 * gj.imag(),
                              g01 * gj.real() + g11 * gj.imag()};
      }
      n.parents[0]->accumulate(g);
    }
    if (wants(n.parents[1])) {
      double d00 = 0.0, d01 = 0.0, d10 = 0.0, d11 = 0.0;
      for (std::size_t i = 0; i < xin.size(); ++i) {
        const cdouble gj = n.grad.data()[i];
        const cdouble c = xin.data()[i];
        d00 += gj.real() * c.real();
        d01 += gj.real() * c.imag();
        d10 += gj.imag() * c.real();
        d11 += gj.imag() * c.imag();
      }
      ComplexMatrix g(2, 2);
      g(0, 0) = d00;
      g(0, 1) = d01;
      g(1, 0) = d10;
      g(1, 1) = d11;
      n.parents[1]->accumulate(g);
    }
    if (wants(n.parents[2])) {
      cdouble s{0.0, 0.0};
      for (std::size_t i = 0; i < n.grad.size(); ++i) s += n.grad.data()[i];
      ComplexMatrix g(1, 1);
      g(0, 0) = s;
      n.parents[2]->accumulate(g);
    }
  };
  return Var(make_node("reim_affine", std::move(v),
                       {x.node(), gamma.node(), shift.node()}, fn));
}

Var custom(const char* name, ComplexMatrix value, std::vector<Var> parents,
           std::function<void(Node&)> backward_fn) {
  std::vector<NodePtr> nodes;
  nodes.reserve(parents.size());
  for (auto& p : parents) nodes.push_back(p.node());
  auto n = std::make_shared<Node>();
  n->op = name;
  n->value = std::move(value);
  n->parents = std::move(nodes);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  n->backward_fn = std::move(backward_fn);
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (!loss.value().is_scalar())
    throw ContractError("backward: loss must be a 1x1 scalar");
  if (std::abs(loss.value()(0, 0).imag()) > 1e-12)
    throw ContractError("backward: loss has nonzero imaginary part");
  if (!loss.requires_grad()) return;

  // Iterative DFS topological order over the requires_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    bool descended = false;
    while (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->ensure_grad();
  Node* root = loss.node().get();
  root->grad(0, 0) = cdouble{1.0, 0.0};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->parents.empty()) continue;  // leaf
    if (!n->backward_fn)
      throw NumericError(std::string("backward: no adjoint rule for primitive '") +
                         n->op + "'");
    n->backward_fn(*n);
  }
}

}  // namespace xlbeam::ad
