#include "xlbeam/gradcheck.hpp"

#include <cmath>

#include "xlbeam/autodiff.hpp"
#include "xlbeam/training.hpp"

namespace xlbeam {

double fd_max_rel_error(
    std::vector<ComplexMatrix>& params,
    const std::function<double(const std::vector<ComplexMatrix>&)>& eval_loss,
    const std::vector<ComplexMatrix>& grads, double step) {
  double gmax = 0.0;
  for (const auto& g : grads) gmax = std::max(gmax, max_abs(g));
  const double floor = 1e-3 * gmax + 1e-6;
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      for (int part = 0; part < 2; ++part) {
        cdouble& entry = params[p].data()[i];
        const cdouble saved = entry;
        const cdouble delta =
            part == 0 ? cdouble{step, 0.0} : cdouble{0.0, step};
        entry = saved + delta;
        const double fplus = eval_loss(params);
        entry = saved - delta;
        const double fminus = eval_loss(params);
        entry = saved;
        const double fd = (fplus - fminus) / (2.0 * step);
        const double ad = part == 0 ? grads[p].data()[i].real()
                                    : grads[p].data()[i].imag();
        worst = std::max(worst, std::abs(ad - fd) /
                                    std::max(std::abs(ad) + std::abs(fd),
                                             floor));
      }
    }
  }
  return worst;
}

namespace {

ComplexMatrix rand_m(std::size_t r, std::size_t c, std::uint64_t s) {
  RngStream rng = RngStream::derive(s, "gradcheck");
  return ComplexMatrix::random_gaussian(r, c, 1.0, rng);
}

// Fixed quadratic probe reducing any output matrix to a real scalar.
ad::Var probe(const ad::Var& y, std::uint64_t seed) {
  ComplexMatrix p = rand_m(y.rows(), y.cols(), seed);
  ad::Var mixed = ad::hadamard(y, ad::conj(y));
  ad::Var weighted = ad::hadamard(mixed, ad::Var::constant(real_part(p)));
  ad::Var lin = ad::real(ad::hadamard(y, ad::Var::constant(p)));
  ad::Var total = ad::add(weighted, lin);
  ComplexMatrix ones_l(1, y.rows()), ones_r(y.cols(), 1);
  for (std::size_t i = 0; i < y.rows(); ++i) ones_l(0, i) = 1.0;
  for (std::size_t i = 0; i < y.cols(); ++i) ones_r(i, 0) = 1.0;
  return ad::real(ad::matmul(ad::matmul(ad::Var::constant(ones_l), total),
                             ad::Var::constant(ones_r)));
}

GradCheckReport check_one(
    const std::string& name,
    const std::function<ad::Var(const std::vector<ad::Var>&)>& build,
    std::vector<ComplexMatrix> init, std::uint64_t probe_seed) {
  auto eval = [&](const std::vector<ComplexMatrix>& values) {
    std::vector<ad::Var> vars;
    for (const auto& v : values) vars.push_back(ad::Var::parameter(v));
    ad::Var y = build(vars);
    ad::Var loss = y.value().is_scalar() && y.value()(0, 0).imag() == 0.0
                       ? y
                       : probe(y, probe_seed);
    return loss.value()(0, 0).real();
  };
  std::vector<ad::Var> vars;
  for (const auto& v : init) vars.push_back(ad::Var::parameter(v));
  ad::Var y = build(vars);
  ad::Var loss = y.value().is_scalar() && y.value()(0, 0).imag() == 0.0
                     ? y
                     : probe(y, probe_seed);
  ad::backward(loss);
  std::vector<ComplexMatrix> grads;
  for (const auto& v : vars) grads.push_back(v.grad());
  GradCheckReport rep;
  rep.name = name;
  rep.tolerance = 1e-6;
  rep.max_rel_error = fd_max_rel_error(init, eval, grads);
  rep.pass = rep.max_rel_error < rep.tolerance;
  return rep;
}

}  // namespace

std::vector<GradCheckReport> run_primitive_gradchecks() {
  std::vector<GradCheckReport> out;
  auto m = [](std::uint64_t s, std::size_t r = 3, std::size_t c = 3) {
    return rand_m(r, c, s);
  };
  out.push_back(check_one("add",
      [](const std::vector<ad::Var>& v) { return ad::add(v[0], v[1]); },
      {m(1), m(2)}, 50));
  out.push_back(check_one("sub",
      [](const std::vector<ad::Var>& v) { return ad::sub(v[0], v[1]); },
      {m(3), m(4)}, 51));
  out.push_back(check_one("scale",
      [](const std::vector<ad::Var>& v) {
        return ad::scale(v[0], cdouble{0.6, -1.1});
      },
      {m(5)}, 52));
  out.push_back(check_one("add_scalar",
      [](const std::vector<ad::Var>& v) {
        return ad::add_scalar(v[0], cdouble{0.3, 0.2});
      },
      {m(6)}, 53));
  out.push_back(check_one("conjugate",
      [](const std::vector<ad::Var>& v) { return ad::conj(v[0]); }, {m(7)},
      54));
  out.push_back(check_one("transpose",
      [](const std::vector<ad::Var>& v) { return ad::transpose(v[0]); },
      {m(8, 2, 4)}, 55));
  out.push_back(check_one("hermitian_transpose",
      [](const std::vector<ad::Var>& v) { return ad::hermitian(v[0]); },
      {m(9, 2, 4)}, 56));
  out.push_back(check_one("matmul",
      [](const std::vector<ad::Var>& v) { return ad::matmul(v[0], v[1]); },
      {m(10, 3, 2), m(11, 2, 4)}, 57));
  out.push_back(check_one("hadamard",
      [](const std::vector<ad::Var>& v) { return ad::hadamard(v[0], v[1]); },
      {m(12), m(13)}, 58));
  out.push_back(check_one("hadamard_div",
      [](const std::vector<ad::Var>& v) {
        return ad::hadamard_div(v[0], v[1]);
      },
      {m(14), add_scalar(m(15), cdouble{3.0, 0.5})}, 59));
  out.push_back(check_one("modulus",
      [](const std::vector<ad::Var>& v) { return ad::modulus(v[0]); },
      {m(16)}, 60));
  out.push_back(check_one("real_imag_join",
      [](const std::vector<ad::Var>& v) {
        return ad::complex_join(ad::real(v[0]), ad::imag(v[0]));
      },
      {m(17)}, 61));
  out.push_back(check_one("tanh_real",
      [](const std::vector<ad::Var>& v) {
        return ad::tanh_real(ad::real(v[0]));
      },
      {m(18)}, 62));
  out.push_back(check_one("ctanh",
      [](const std::vector<ad::Var>& v) { return ad::ctanh(v[0]); }, {m(19)},
      63));
  out.push_back(check_one("trace",
      [](const std::vector<ad::Var>& v) { return ad::real(ad::trace(v[0])); },
      {m(20)}, 64));
  out.push_back(check_one("hermitian_solve",
      [](const std::vector<ad::Var>& v) {
        ad::Var gram = ad::matmul(ad::hermitian(v[0]), v[0]);
        ad::Var a = ad::add(gram, ad::Var::constant(
            ComplexMatrix::scaled_identity(3, cdouble{2.0, 0.0})));
        return ad::cholesky_solve(a, v[1]);
      },
      {m(21), m(22, 3, 2)}, 65));
  out.push_back(check_one("concat_slice",
      [](const std::vector<ad::Var>& v) {
        ad::Var cr = ad::concat_rows({v[0], v[1]});
        return ad::slice(ad::concat_cols({cr, cr}), 1, 2, 4, 3);
      },
      {m(23), m(24)}, 66));
  out.push_back(check_one("reshape_colmajor",
      [](const std::vector<ad::Var>& v) {
        return ad::reshape_colmajor(v[0], 3, 2);
      },
      {m(25, 6, 1)}, 67));
  out.push_back(check_one("stack_user_columns",
      [](const std::vector<ad::Var>& v) {
        return ad::stack_user_columns(v[0], 2);
      },
      {m(26, 3, 6)}, 68));
  out.push_back(check_one("mean_over_batch",
      [](const std::vector<ad::Var>& v) {
        std::vector<ad::Var> scalars;
        for (const auto& x : v)
          scalars.push_back(
              ad::real(ad::trace(ad::matmul(ad::hermitian(x), x))));
        return ad::mean(scalars);
      },
      {m(27, 2, 2), m(28, 2, 2), m(29, 2, 2)}, 69));
  out.push_back(check_one("add_col_broadcast",
      [](const std::vector<ad::Var>& v) {
        return ad::add_col_broadcast(v[0], v[1]);
      },
      {m(30, 3, 4), m(31, 3, 1)}, 70));
  out.push_back(check_one("batch_whiten",
      [](const std::vector<ad::Var>& v) {
        return ad::batch_whiten(v[0], 1e-5);
      },
      {m(32, 2, 6)}, 71));
  {
    ComplexMatrix gamma(2, 2);
    gamma(0, 0) = 0.8;
    gamma(0, 1) = 0.1;
    gamma(1, 0) = -0.2;
    gamma(1, 1) = 1.2;
    ComplexMatrix shift(1, 1);
    shift(0, 0) = cdouble{0.4, -0.1};
    out.push_back(check_one("reim_affine",
        [](const std::vector<ad::Var>& v) {
          return ad::reim_affine(v[0], v[1], v[2]);
        },
        {m(33, 2, 5), gamma, shift}, 72));
  }
  return out;
}

GradCheckReport run_network_gradcheck(std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.M = 8;
  cfg.K = 2;
  cfg.N_RF = 2;
  cfg.N = 2;
  cfg.hidden = {16, 8};
  const double pt = 1.0, sigma2 = 0.1;
  const std::size_t batch_n = 3;

  NetworkParams params = init_network(cfg, NetworkMode::Indirect, seed);
  RngStream ch_rng = RngStream::derive(seed, "gradcheck-channel");
  std::vector<ComplexMatrix> channels;
  for (std::size_t s = 0; s < batch_n; ++s)
    channels.push_back(
        ComplexMatrix::random_gaussian(cfg.M, cfg.K, 1.0, ch_rng));
  std::vector<const ComplexMatrix*> batch;
  for (const auto& h : channels) batch.push_back(&h);

  auto refs = params.parameter_refs();
  std::vector<ComplexMatrix> values;
  for (auto& [name, mat] : refs) values.push_back(*mat);

  auto eval = [&](const std::vector<ComplexMatrix>& vals) {
    NetworkParams p = params;
    auto r = p.parameter_refs();
    for (std::size_t i = 0; i < r.size(); ++i) *r[i].second = vals[i];
    RngStream rng = RngStream::derive(seed, "unused");
    TrainForward fwd = forward_train(p, batch, 0.0, rng);
    ad::Var loss =
        batch_loss_graph(fwd.f_columns, batch, cfg.M, cfg.N_RF, pt, sigma2);
    return loss.value()(0, 0).real();
  };

  RngStream rng = RngStream::derive(seed, "unused");
  TrainForward fwd = forward_train(params, batch, 0.0, rng);
  ad::Var loss =
      batch_loss_graph(fwd.f_columns, batch, cfg.M, cfg.N_RF, pt, sigma2);
  ad::backward(loss);
  std::vector<ComplexMatrix> grads;
  for (const ad::Var& leaf : fwd.leaves) grads.push_back(leaf.grad());

  GradCheckReport rep;
  rep.name = "network_loss_seed_" + std::to_string(seed);
  rep.tolerance = 1e-5;
  rep.max_rel_error = fd_max_rel_error(values, eval, grads, 1e-6);
  rep.pass = rep.max_rel_error < rep.tolerance;
  return rep;
}

}  // namespace xlbeam
