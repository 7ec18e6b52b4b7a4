#include "xlbeam/network.hpp"

#include <cmath>

#include "xlbeam/linalg.hpp"
#include "xlbeam/serialize.hpp"

namespace xlbeam {

ComplexMatrix SensingBank::stacked() const {
  if (phi.empty()) throw ContractError("sensing bank is empty");
  const std::size_t k = phi[0].rows(), m = phi[0].cols();
  ComplexMatrix out(phi.size() * k, m);
  for (std::size_t n = 0; n < phi.size(); ++n)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < m; ++j) out(n * k + i, j) = phi[n](i, j);
  return out;
}

std::size_t NetworkParams::mlp_parameter_count() const {
  std::size_t count = 0;
  for (const MlpBlock& b : blocks) count += b.weight.size() + b.bias.size();
  return count;
}

std::vector<std::pair<std::string, ComplexMatrix*>>
NetworkParams::parameter_refs() {
  std::vector<std::pair<std::string, ComplexMatrix*>> refs;
  for (std::size_t n = 0; n < sensing.phi.size(); ++n)
    refs.emplace_back("sensing." + std::to_string(n), &sensing.phi[n]);
  for (std::size_t p = 0; p < blocks.size(); ++p) {
    const std::string base = "mlp." + std::to_string(p);
    refs.emplace_back(base + ".weight", &blocks[p].weight);
    refs.emplace_back(base + ".bias", &blocks[p].bias);
    refs.emplace_back(base + ".gamma", &blocks[p].gamma);
    refs.emplace_back(base + ".shift", &blocks[p].shift);
  }
  refs.emplace_back("head.weight", &head.weight);
  refs.emplace_back("head.bias", &head.bias);
  return refs;
}

NetworkParams init_network(const NetworkConfig& cfg, NetworkMode mode,
                           std::uint64_t seed) {
  if (cfg.hidden.empty())
    throw ContractError("init_network: at least one hidden layer required");
  NetworkParams p;
  p.cfg = cfg;
  p.mode = mode;
  RngStream rng = RngStream::derive(seed, "init");
  p.sensing.phi.reserve(cfg.N);
  for (std::size_t n = 0; n < cfg.N; ++n)
    p.sensing.phi.push_back(ComplexMatrix::random_gaussian(
        cfg.K, cfg.M, 1.0 / static_cast<double>(cfg.M), rng));
  std::size_t prev = cfg.N * cfg.K;
  for (std::size_t d : cfg.hidden) {
    MlpBlock b;
    b.weight = ComplexMatrix::random_gaussian(
        d, prev, 1.0 / static_cast<double>(prev), rng);
    b.bias = ComplexMatrix(d, 1);
    b.gamma = ComplexMatrix(2, 2);
    b.gamma(0, 0) = 1.0 / std::sqrt(2.0);
    b.gamma(1, 1) = 1.0 / std::sqrt(2.0);
    b.shift = ComplexMatrix(1, 1);
    b.run_mean.assign(d, cdouble{0.0, 0.0});
    b.run_cov.assign(d, {0.5, 0.5, 0.0});
    p.blocks.push_back(std::move(b));
    prev = d;
  }
  const std::size_t head_in = cfg.K * cfg.hidden.back();
  const std::size_t head_out = cfg.M * cfg.N_RF;
  p.head.weight = ComplexMatrix::random_gaussian(
      head_out, head_in, 1.0 / static_cast<double>(head_in), rng);
  p.head.bias = ComplexMatrix(head_out, 1);
  p.head.eps_cm = cfg.eps_cm;
  return p;
}

ComplexMatrix ctanh_eval(const ComplexMatrix& x) {
  ComplexMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = cdouble{std::tanh(x.data()[i].real()),
                            std::tanh(x.data()[i].imag())};
  return out;
}

namespace {

struct BnStats {
  std::vector<cdouble> mean;
  std::vector<std::array<double, 3>> cov;
};

BnStats batch_stats(const ComplexMatrix& x) {
  BnStats s;
  const std::size_t d = x.rows(), b = x.cols();
  s.mean.resize(d);
  s.cov.resize(d);
  for (std::size_t f = 0; f < d; ++f) {
    cdouble m{0.0, 0.0};
    for (std::size_t j = 0; j < b; ++j) m += x(f, j);
    m /= static_cast<double>(b);
    s.mean[f] = m;
    double vrr = 0.0, vii = 0.0, vri = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      const cdouble c = x(f, j) - m;
      vrr += c.real() * c.real();
      vii += c.imag() * c.imag();
      vri += c.real() * c.imag();
    }
    const double ib = 1.0 / static_cast<double>(b);
    s.cov[f] = {vrr * ib, vii * ib, vri * ib};
  }
  return s;
}

ComplexMatrix bn_apply(const ComplexMatrix& x,
                       const std::vector<cdouble>& mean,
                       const std::vector<std::array<double, 3>>& cov,
                       const ComplexMatrix& gamma, const ComplexMatrix& shift,
                       double bn_eps) {
  const std::size_t d = x.rows(), b = x.cols();
  const double g00 = gamma(0, 0).real(), g01 = gamma(0, 1).real();
  const double g10 = gamma(1, 0).real(), g11 = gamma(1, 1).real();
  const cdouble sh = shift(0, 0);
  ComplexMatrix out(d, b);
  for (std::size_t f = 0; f < d; ++f) {
    const Mat2 w = inv_sqrt_spd_2x2({cov[f][0] + bn_eps, cov[f][2],
                                     cov[f][2], cov[f][1] + bn_eps});
    for (std::size_t j = 0; j < b; ++j) {
      const cdouble c = x(f, j) - mean[f];
      const auto wh = w.apply(c.real(), c.imag());
      out(f, j) = cdouble{g00 * wh[0] + g01 * wh[1],
                          g10 * wh[0] + g11 * wh[1]} +
                  sh;
    }
  }
  return out;
}

}  // namespace

ComplexMatrix complex_bn_forward(const ComplexMatrix& x, MlpBlock& block,
                                 bool training, double bn_eps,
                                 double bn_momentum) {
  if (training) {
    if (x.cols() < 2)
      throw ContractError("complex_bn_forward: training batch must be >= 2");
    const BnStats s = batch_stats(x);
    for (std::size_t f = 0; f < x.rows(); ++f) {
      block.run_mean[f] = (1.0 - bn_momentum) * block.run_mean[f] +
                          bn_momentum * s.mean[f];
      for (int t = 0; t < 3; ++t)
        block.run_cov[f][t] = (1.0 - bn_momentum) * block.run_cov[f][t] +
                              bn_momentum * s.cov[f][t];
    }
    return bn_apply(x, s.mean, s.cov, block.gamma, block.shift, bn_eps);
  }
  return bn_apply(x, block.run_mean, block.run_cov, block.gamma, block.shift,
                  bn_eps);
}

ComplexMatrix sensing_forward(const ComplexMatrix& h, const SensingBank& bank,
                              double noise_sigma2, RngStream& rng) {
  if (bank.phi.empty()) throw ContractError("sensing_forward: empty bank");
  if (h.rows() != bank.phi[0].cols())
    throw ContractError("sensing_forward: channel/bank shape mismatch");
  if (noise_sigma2 == 0.0) return matmul(bank.stacked(), h);
  const std::size_t k = bank.phi[0].rows();
  ComplexMatrix out(bank.slots() * k, h.cols());
  for (std::size_t n = 0; n < bank.slots(); ++n) {
    const ComplexMatrix noisy = add_awgn(h, noise_sigma2, rng);
    const ComplexMatrix slot = matmul(bank.phi[n], noisy);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < slot.cols(); ++j)
        out(n * k + i, j) = slot(i, j);
  }
  return out;
}

ComplexMatrix mlp_features_infer(const NetworkParams& params,
                                 const ComplexMatrix& y_user) {
  if (y_user.rows() != params.input_dim())
    throw ContractError("mlp_features_infer: input dimension mismatch");
  ComplexMatrix x = y_user;
  for (const MlpBlock& b : params.blocks) {
    ComplexMatrix u = matmul(b.weight, x);
    for (std::size_t i = 0; i < u.rows(); ++i)
      for (std::size_t j = 0; j < u.cols(); ++j) u(i, j) += b.bias(i, 0);
    u = bn_apply(u, b.run_mean, b.run_cov, b.gamma, b.shift,
                 params.cfg.bn_eps);
    x = ctanh_eval(u);
  }
  return x;
}

namespace {

ComplexMatrix cm_normalize(const ComplexMatrix& x, double eps_cm,
                           std::size_t m) {
  const double target = 1.0 / std::sqrt(static_cast<double>(m));
  ComplexMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const cdouble v = x.data()[i];
    const double mag = std::abs(v);
    // Exact zeros take phase 0 so the CM invariant survives degenerate heads.
    out.data()[i] = mag == 0.0 ? cdouble{target, 0.0}
                               : v / (mag + eps_cm) * target;
  }
  return out;
}

}  // namespace

AnalogPrecoder forward_infer(const NetworkParams& params,
                             const ComplexMatrix& input, NetworkMode mode) {
  const NetworkConfig& cfg = params.cfg;
  ComplexMatrix y;
  if (mode == NetworkMode::Indirect) {
    if (input.rows() != cfg.M || input.cols() != cfg.K)
      throw ContractError("forward: indirect mode expects an M x K channel");
    y = matmul(params.sensing.stacked(), input);
  } else {
    if (input.rows() != cfg.N * cfg.K || input.cols() != cfg.K)
      throw ContractError("forward: direct mode expects NK x K measurements");
    y = input;
  }
  const ComplexMatrix features = mlp_features_infer(params, y);  // D_P x K
  // Merged head: concatenate user features in fixed order.
  const std::size_t dp = params.feature_dim();
  ComplexMatrix z(cfg.K * dp, 1);
  for (std::size_t k = 0; k < cfg.K; ++k)
    for (std::size_t i = 0; i < dp; ++i) z(k * dp + i, 0) = features(i, k);
  ComplexMatrix f_vec = matmul(params.head.weight, z);
  for (std::size_t i = 0; i < f_vec.rows(); ++i)
    f_vec(i, 0) += params.head.bias(i, 0);
  f_vec = cm_normalize(f_vec, params.head.eps_cm, cfg.M);
  // Column-major unvec to M x N_RF.
  ComplexMatrix f(cfg.M, cfg.N_RF);
  for (std::size_t j = 0; j < cfg.N_RF; ++j)
    for (std::size_t i = 0; i < cfg.M; ++i) f(i, j) = f_vec(j * cfg.M + i, 0);
  return {std::move(f)};
}

TrainForward forward_train(const NetworkParams& params,
                           const std::vector<const ComplexMatrix*>& batch,
                           double noise_sigma2, RngStream& rng) {
  const NetworkConfig& cfg = params.cfg;
  const std::size_t s_count = batch.size();
  if (s_count == 0) throw ContractError("forward_train: empty batch");

  TrainForward out;
  // Bind leaves in parameter_refs order.
  auto& mutable_params = const_cast<NetworkParams&>(params);
  auto refs = mutable_params.parameter_refs();
  out.leaves.reserve(refs.size());
  for (auto& [name, mat] : refs) out.leaves.push_back(ad::Var::parameter(*mat));
  std::size_t idx = 0;
  std::vector<ad::Var> phi_vars(cfg.N);
  for (std::size_t n = 0; n < cfg.N; ++n) phi_vars[n] = out.leaves[idx++];
  struct BlockVars {
    ad::Var weight, bias, gamma, shift;
  };
  std::vector<BlockVars> block_vars;
  for (std::size_t p = 0; p < params.blocks.size(); ++p) {
    BlockVars bv;
    bv.weight = out.leaves[idx++];
    bv.bias = out.leaves[idx++];
    bv.gamma = out.leaves[idx++];
    bv.shift = out.leaves[idx++];
    block_vars.push_back(bv);
  }
  ad::Var head_w = out.leaves[idx++];
  ad::Var head_b = out.leaves[idx++];

  // Channel columns, sample-major / user-minor: col s*K+k = H_s column k.
  ComplexMatrix h_all(cfg.M, s_count * cfg.K);
  for (std::size_t s = 0; s < s_count; ++s) {
    const ComplexMatrix& h = *batch[s];
    if (h.rows() != cfg.M || h.cols() != cfg.K)
      throw ContractError("forward_train: channel shape mismatch");
    for (std::size_t i = 0; i < cfg.M; ++i)
      for (std::size_t k = 0; k < cfg.K; ++k)
        h_all(i, s * cfg.K + k) = h(i, k);
  }

  // Sensing: per-slot projection of the (optionally noise-perturbed) channel.
  std::vector<ad::Var> slot_outputs;
  slot_outputs.reserve(cfg.N);
  for (std::size_t n = 0; n < cfg.N; ++n) {
    ComplexMatrix h_slot = h_all;
    if (noise_sigma2 > 0.0)
      for (std::size_t i = 0; i < h_slot.size(); ++i)
        h_slot.data()[i] += rng.next_cgaussian(noise_sigma2);
    slot_outputs.push_back(
        ad::matmul(phi_vars[n], ad::Var::constant(std::move(h_slot))));
  }
  ad::Var x = ad::concat_rows(slot_outputs);  // NK x (S K)

  out.bn_stats.resize(params.blocks.size());
  for (std::size_t p = 0; p < params.blocks.size(); ++p) {
    ad::Var u = ad::add_col_broadcast(ad::matmul(block_vars[p].weight, x),
                                      block_vars[p].bias);
    ad::Var w = ad::batch_whiten(u, cfg.bn_eps, &out.bn_stats[p]);
    ad::Var a = ad::reim_affine(w, block_vars[p].gamma, block_vars[p].shift);
    x = ad::ctanh(a);
  }

  ad::Var z = ad::stack_user_columns(x, cfg.K);  // (K D_P) x S
  ad::Var f_tilde = ad::add_col_broadcast(ad::matmul(head_w, z), head_b);
  ad::Var mod = ad::modulus(f_tilde);
  ad::Var den = ad::add_scalar(mod, cdouble{params.head.eps_cm, 0.0});
  ad::Var quot = ad::hadamard_div(f_tilde, den);
  out.f_columns =
      ad::scale(quot, 1.0 / std::sqrt(static_cast<double>(cfg.M)));
  return out;
}

void save_checkpoint(const NetworkParams& params, const std::string& path,
                     std::uint64_t seed) {
  auto& mutable_params = const_cast<NetworkParams&>(params);
  auto refs = mutable_params.parameter_refs();
  Serializer s(path, "xlbeam-checkpoint v1");
  const NetworkConfig& cfg = params.cfg;
  s.put("mode", params.mode == NetworkMode::Direct ? "direct" : "indirect");
  s.put("M", static_cast<std::uint64_t>(cfg.M));
  s.put("K", static_cast<std::uint64_t>(cfg.K));
  s.put("N_RF", static_cast<std::uint64_t>(cfg.N_RF));
  s.put("N", static_cast<std::uint64_t>(cfg.N));
  std::string dims;
  for (std::size_t d : cfg.hidden)
    dims += (dims.empty() ? "" : ",") + std::to_string(d);
  s.put("hidden", dims);
  s.put("eps_cm", cfg.eps_cm);
  s.put("bn_eps", cfg.bn_eps);
  s.put("bn_momentum", cfg.bn_momentum);
  s.put("bn_inference", "running-stats");
  s.put("seed", seed);
  for (auto& [name, mat] : refs)
    s.put("param " + name, std::to_string(mat->rows()) + " " +
                                std::to_string(mat->cols()));
  for (std::size_t p = 0; p < params.blocks.size(); ++p) {
    const std::string base = "buffer mlp." + std::to_string(p);
    const std::size_t d = params.blocks[p].run_mean.size();
    s.put(base + ".run_mean", std::to_string(d) + " 1");
    s.put(base + ".run_cov", std::to_string(d) + " 3");
  }
  s.end_header();
  for (auto& [name, mat] : refs) s.write_complex(mat->data(), mat->size());
  for (const MlpBlock& b : params.blocks) {
    s.write_complex(b.run_mean.data(), b.run_mean.size());
    std::vector<double> cov;
    cov.reserve(b.run_cov.size() * 3);
    for (const auto& t : b.run_cov) {
      cov.push_back(t[0]);
      cov.push_back(t[1]);
      cov.push_back(t[2]);
    }
    s.write_doubles(cov);
  }
}

NetworkParams load_checkpoint(const std::string& path) {
  Deserializer d(path, "xlbeam-checkpoint v1");
  NetworkConfig cfg;
  cfg.M = d.get_u64("M");
  cfg.K = d.get_u64("K");
  cfg.N_RF = d.get_u64("N_RF");
  cfg.N = d.get_u64("N");
  cfg.hidden.clear();
  {
    std::string dims = d.get_string("hidden");
    std::size_t pos = 0;
    while (pos < dims.size()) {
      const std::size_t comma = dims.find(',', pos);
      const std::string tok = dims.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      cfg.hidden.push_back(std::stoull(tok));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  cfg.eps_cm = d.get_double("eps_cm");
  cfg.bn_eps = d.get_double("bn_eps");
  cfg.bn_momentum = d.get_double("bn_momentum");
  const NetworkMode mode = d.get_string("mode") == "direct"
                               ? NetworkMode::Direct
                               : NetworkMode::Indirect;
  NetworkParams params = init_network(cfg, mode, 0);
  auto refs = params.parameter_refs();
  // Parameters are stored in manifest order; verify shapes against init.
  std::size_t ref_idx = 0;
  for (const auto& [key, value] : d.lines()) {
    if (key != "param") continue;
    const std::size_t sp1 = value.find(' ');
    const std::size_t sp2 = value.find(' ', sp1 + 1);
    const std::string name = value.substr(0, sp1);
    const std::size_t rows = std::stoull(value.substr(sp1 + 1, sp2 - sp1 - 1));
    const std::size_t cols = std::stoull(value.substr(sp2 + 1));
    if (ref_idx >= refs.size() || refs[ref_idx].first != name ||
        refs[ref_idx].second->rows() != rows ||
        refs[ref_idx].second->cols() != cols)
      throw NumericError("checkpoint: parameter list mismatch at '" + name +
                         "'");
    ++ref_idx;
  }
  if (ref_idx != refs.size())
    throw NumericError("checkpoint: parameter count mismatch");
  d.end_header();
  for (auto& [name, mat] : refs) d.read_complex(mat->data(), mat->size());
  for (MlpBlock& b : params.blocks) {
    d.read_complex(b.run_mean.data(), b.run_mean.size());
    const auto cov = d.read_doubles(b.run_cov.size() * 3);
    for (std::size_t f = 0; f < b.run_cov.size(); ++f)
      b.run_cov[f] = {cov[3 * f], cov[3 * f + 1], cov[3 * f + 2]};
  }
  return params;
}

}  // namespace xlbeam
