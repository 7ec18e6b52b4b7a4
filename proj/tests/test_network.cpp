#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "xlbeam/gradcheck.hpp"
#include "xlbeam/network.hpp"

using namespace xlbeam;

namespace {

NetworkConfig toy_config() {
  NetworkConfig cfg;
  cfg.M = 16;
  cfg.K = 2;
  cfg.N_RF = 2;
  cfg.N = 4;
  cfg.hidden = {12, 8};
  return cfg;
}

ComplexMatrix random_channel(std::size_t m, std::size_t k, std::uint64_t s) {
  RngStream rng = RngStream::derive(s, "net-chan");
  return ComplexMatrix::random_gaussian(m, k, 1.0, rng);
}

}  // namespace

TEST_CASE("sensing: noise off is the pure stacked linear operator") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 1);
  const ComplexMatrix h = random_channel(16, 2, 2);
  RngStream rng = RngStream::derive(3, "no-noise");
  const ComplexMatrix y = sensing_forward(h, p.sensing, 0.0, rng);
  CHECK(equal_bits(y, matmul(p.sensing.stacked(), h)));
  CHECK(y.rows() == 4 * 2);
}

TEST_CASE("sensing linearity") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 4);
  const ComplexMatrix h1 = random_channel(16, 2, 5);
  const ComplexMatrix h2 = random_channel(16, 2, 6);
  RngStream rng = RngStream::derive(7, "lin");
  const cdouble a{1.3, -0.4}, b{-0.2, 2.1};
  const ComplexMatrix lhs = sensing_forward(
      add(scale(h1, a), scale(h2, b)), p.sensing, 0.0, rng);
  const ComplexMatrix rhs =
      add(scale(sensing_forward(h1, p.sensing, 0.0, rng), a),
          scale(sensing_forward(h2, p.sensing, 0.0, rng), b));
  CHECK(relative_error(lhs, rhs) < 1e-12);
}

TEST_CASE("sensing grouping isolation: kernel n touches only slot n") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 8);
  const ComplexMatrix h = random_channel(16, 2, 9);
  RngStream rng = RngStream::derive(10, "iso");
  const ComplexMatrix base = sensing_forward(h, p.sensing, 0.0, rng);
  p.sensing.phi[1](0, 3) += cdouble{0.5, -0.25};
  const ComplexMatrix bumped = sensing_forward(h, p.sensing, 0.0, rng);
  for (std::size_t r = 0; r < base.rows(); ++r)
    for (std::size_t c = 0; c < base.cols(); ++c) {
      const bool in_slot_1 = r >= 2 && r < 4;
      if (in_slot_1) continue;
      CHECK(base(r, c) == bumped(r, c));
    }
  CHECK_FALSE(equal_bits(base, bumped));
}

TEST_CASE("sensing grouping isolation via autodiff") {
  // d(slot n)/d(Phi m) = 0 for m != n.
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 11);
  const ComplexMatrix h = random_channel(16, 2, 12);
  std::vector<const ComplexMatrix*> batch{&h};
  RngStream rng = RngStream::derive(13, "iso-ad");
  TrainForward fwd = forward_train(p, batch, 0.0, rng);
  // Loss = squared modulus of slot 2's block only (rows 2K..3K-1 of the
  // sensing output feed features; use a direct slice of the graph instead:
  // rebuild a tiny graph by hand).
  ad::Var phi0 = ad::Var::parameter(p.sensing.phi[0]);
  ad::Var phi2 = ad::Var::parameter(p.sensing.phi[2]);
  ad::Var y0 = ad::matmul(phi0, ad::Var::constant(h));
  ad::Var y2 = ad::matmul(phi2, ad::Var::constant(h));
  ad::Var stacked = ad::concat_rows({y0, y2});
  ad::Var slot2 = ad::slice(stacked, 2, 0, 2, 2);
  ad::Var loss = ad::real(ad::trace(
      ad::matmul(ad::hermitian(slot2), slot2)));
  ad::backward(loss);
  CHECK(frobenius_norm(phi0.grad()) == 0.0);
  CHECK(frobenius_norm(phi2.grad()) > 0.0);
}

TEST_CASE("sensing colored-noise covariance matches sigma2 Phi Phi^H") {
  NetworkConfig cfg = toy_config();
  cfg.N = 1;
  NetworkParams p = init_network(cfg, NetworkMode::Indirect, 14);
  const ComplexMatrix h = random_channel(16, 1, 15);
  const double sigma2 = 0.5;
  const ComplexMatrix clean = matmul(p.sensing.phi[0], h);
  RngStream rng = RngStream::derive(16, "colored");
  ComplexMatrix cov(2, 2);
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    const ComplexMatrix y = sensing_forward(h, p.sensing, sigma2, rng);
    ComplexMatrix w(2, 1);
    for (std::size_t i = 0; i < 2; ++i) w(i, 0) = y(i, 0) - clean(i, 0);
    cov = add(cov, matmul(w, hermitian(w)));
  }
  cov = scale(cov, 1.0 / n);
  const ComplexMatrix expect =
      scale(matmul(p.sensing.phi[0], hermitian(p.sensing.phi[0])), sigma2);
  CHECK(relative_error(cov, expect) < 0.10);
}

TEST_CASE("ctanh evaluation") {
  ComplexMatrix x(1, 3);
  x(0, 0) = cdouble{0.0, 0.0};
  x(0, 1) = cdouble{0.7, 0.0};
  x(0, 2) = cdouble{100.0, 100.0};
  const ComplexMatrix y = ctanh_eval(x);
  CHECK(y(0, 0) == cdouble{0.0, 0.0});
  CHECK(y(0, 1).real() == doctest::Approx(std::tanh(0.7)).epsilon(1e-15));
  CHECK(y(0, 1).imag() == 0.0);
  CHECK(std::abs(y(0, 2) - cdouble{1.0, 1.0}) < 1e-12);
}

TEST_CASE("complex batch norm") {
  NetworkConfig cfg = toy_config();
  NetworkParams p = init_network(cfg, NetworkMode::Indirect, 17);
  MlpBlock& block = p.blocks[0];

  SUBCASE("pre-whitened input passes through up to the gamma scaling") {
    // Build a batch that is already zero-mean with identity re/im covariance.
    const std::size_t d = block.bias.rows();
    ComplexMatrix x(d, 4);
    const double v[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    for (std::size_t f = 0; f < d; ++f)
      for (std::size_t j = 0; j < 4; ++j)
        x(f, j) = cdouble{v[j][0], v[j][1]};
    block.gamma = ComplexMatrix::identity(2);
    const ComplexMatrix y =
        complex_bn_forward(x, block, true, 1e-9, cfg.bn_momentum);
    CHECK(relative_error(y, x) < 1e-6);
  }
  SUBCASE("constant batch collapses to the shift with no NaN") {
    const std::size_t d = block.bias.rows();
    ComplexMatrix x(d, 8);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = cdouble{2.0, -1.0};
    block.shift(0, 0) = cdouble{0.25, 0.5};
    const ComplexMatrix y =
        complex_bn_forward(x, block, true, 1e-5, cfg.bn_momentum);
    CHECK(y.all_finite());
    for (std::size_t i = 0; i < y.size(); ++i)
      CHECK(std::abs(y.data()[i] - cdouble{0.25, 0.5}) < 1e-9);
  }
  SUBCASE("whitening oracle: unit output covariance at gamma = I") {
    RngStream rng = RngStream::derive(18, "bn");
    const std::size_t d = block.bias.rows();
    ComplexMatrix x(d, 1024);
    for (std::size_t f = 0; f < d; ++f)
      for (std::size_t j = 0; j < 1024; ++j) {
        const double a = rng.next_gaussian(), b = rng.next_gaussian();
        x(f, j) = cdouble{1.5 * a + 0.4 * b - 0.7, 0.2 * a + 0.9 * b + 0.3};
      }
    block.gamma = ComplexMatrix::identity(2);
    block.shift = ComplexMatrix(1, 1);
    const ComplexMatrix y = complex_bn_forward(x, block, true, 1e-5, 0.1);
    for (std::size_t f = 0; f < d; ++f) {
      double vrr = 0, vii = 0, vri = 0;
      for (std::size_t j = 0; j < 1024; ++j) {
        vrr += y(f, j).real() * y(f, j).real();
        vii += y(f, j).imag() * y(f, j).imag();
        vri += y(f, j).real() * y(f, j).imag();
      }
      CHECK(vrr / 1024 == doctest::Approx(1.0).epsilon(0.05));
      CHECK(vii / 1024 == doctest::Approx(1.0).epsilon(0.05));
      CHECK(std::abs(vri / 1024) < 0.05);
    }
  }
  SUBCASE("training batch below 2 is rejected") {
    ComplexMatrix x(block.bias.rows(), 1);
    CHECK_THROWS_AS(complex_bn_forward(x, block, true, 1e-5, 0.1),
                    ContractError);
  }
  SUBCASE("inference with frozen stats is deterministic") {
    RngStream rng = RngStream::derive(19, "bn2");
    ComplexMatrix x = ComplexMatrix::random_gaussian(block.bias.rows(), 5,
                                                     1.0, rng);
    const ComplexMatrix y1 = complex_bn_forward(x, block, false, 1e-5, 0.1);
    const ComplexMatrix y2 = complex_bn_forward(x, block, false, 1e-5, 0.1);
    CHECK(equal_bits(y1, y2));
  }
}

TEST_CASE("shared MLP: user equivariance and boundedness") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 20);
  const ComplexMatrix h = random_channel(16, 2, 21);
  const ComplexMatrix y = matmul(p.sensing.stacked(), h);
  const ComplexMatrix feats = mlp_features_infer(p, y);
  // Swap the user columns of the input: outputs swap identically.
  ComplexMatrix y_swapped(y.rows(), 2);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    y_swapped(i, 0) = y(i, 1);
    y_swapped(i, 1) = y(i, 0);
  }
  const ComplexMatrix feats_swapped = mlp_features_infer(p, y_swapped);
  for (std::size_t i = 0; i < feats.rows(); ++i) {
    CHECK(feats(i, 0) == feats_swapped(i, 1));
    CHECK(feats(i, 1) == feats_swapped(i, 0));
  }
  // CTanh output bounds.
  for (std::size_t i = 0; i < feats.size(); ++i) {
    CHECK(std::abs(feats.data()[i].real()) <= 1.0);
    CHECK(std::abs(feats.data()[i].imag()) <= 1.0);
  }
}

TEST_CASE("zero weights and biases give zero features") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 22);
  for (MlpBlock& b : p.blocks) {
    b.weight = ComplexMatrix(b.weight.rows(), b.weight.cols());
    b.bias = ComplexMatrix(b.bias.rows(), 1);
    b.shift = ComplexMatrix(1, 1);
  }
  const ComplexMatrix y = random_channel(8, 2, 23);
  const ComplexMatrix feats = mlp_features_infer(p, y);
  CHECK(frobenius_norm(feats) == 0.0);
}

TEST_CASE("MLP parameter count is independent of the user count") {
  NetworkConfig cfg2 = toy_config();
  NetworkConfig cfg5 = toy_config();
  cfg5.K = 5;
  cfg5.N_RF = 5;
  // Same sensing budget N: input dim N*K changes, but compare the per-block
  // weights beyond the first layer which depend only on hidden dims.
  NetworkParams p2 = init_network(cfg2, NetworkMode::Indirect, 24);
  NetworkParams p5 = init_network(cfg5, NetworkMode::Indirect, 24);
  CHECK(p2.blocks[1].weight.size() == p5.blocks[1].weight.size());
  // There is exactly one parameter store per block (shared across users).
  CHECK(p2.mlp_parameter_count() ==
        p2.blocks[0].weight.size() + p2.blocks[0].bias.size() +
            p2.blocks[1].weight.size() + p2.blocks[1].bias.size());
}

TEST_CASE("head: phase preservation, zero rule, order sensitivity") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 25);
  const ComplexMatrix h = random_channel(16, 2, 26);
  const AnalogPrecoder f = forward_infer(p, h, NetworkMode::Indirect);
  f.check_cm(1e-9);

  SUBCASE("unit modulus with preserved phase") {
    // Recompute the unnormalized head output and compare phases.
    const ComplexMatrix y = matmul(p.sensing.stacked(), h);
    const ComplexMatrix feats = mlp_features_infer(p, y);
    ComplexMatrix z(2 * 8, 1);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t i = 0; i < 8; ++i) z(k * 8 + i, 0) = feats(i, k);
    ComplexMatrix f_vec = matmul(p.head.weight, z);
    for (std::size_t i = 0; i < f_vec.rows(); ++i)
      f_vec(i, 0) += p.head.bias(i, 0);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t i = 0; i < 16; ++i) {
        const cdouble raw = f_vec(j * 16 + i, 0);
        const double dphase =
            std::abs(std::arg(f.f_rf(i, j) / raw));
        CHECK(dphase < 1e-9);
      }
  }
  SUBCASE("exact zero head output maps to +1/sqrt(M)") {
    NetworkParams pz = p;
    pz.head.weight = ComplexMatrix(pz.head.weight.rows(),
                                   pz.head.weight.cols());
    pz.head.bias = ComplexMatrix(pz.head.bias.rows(), 1);
    const AnalogPrecoder fz = forward_infer(pz, h, NetworkMode::Indirect);
    for (std::size_t i = 0; i < fz.f_rf.size(); ++i)
      CHECK(fz.f_rf.data()[i] == cdouble{0.25, 0.0});
    fz.check_cm(1e-12);
  }
  SUBCASE("merged head is order-sensitive") {
    // Swapping the user columns of H changes F_RF (unlike the shared MLP).
    ComplexMatrix h_swapped(16, 2);
    for (std::size_t i = 0; i < 16; ++i) {
      h_swapped(i, 0) = h(i, 1);
      h_swapped(i, 1) = h(i, 0);
    }
    const AnalogPrecoder f2 = forward_infer(p, h_swapped, NetworkMode::Indirect);
    CHECK_FALSE(equal_bits(f.f_rf, f2.f_rf));
  }
}

TEST_CASE("structural identity: indirect forward equals direct forward on "
          "noiseless measurements, bit for bit") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 27);
  const ComplexMatrix h = random_channel(16, 2, 28);
  const AnalogPrecoder fi = forward_infer(p, h, NetworkMode::Indirect);
  const ComplexMatrix y = matmul(p.sensing.stacked(), h);
  const AnalogPrecoder fd = forward_infer(p, y, NetworkMode::Direct);
  CHECK(equal_bits(fi.f_rf, fd.f_rf));
}

TEST_CASE("forward shape and mode validation") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 29);
  const ComplexMatrix wrong(3, 3);
  CHECK_THROWS_AS(forward_infer(p, wrong, NetworkMode::Indirect),
                  ContractError);
  CHECK_THROWS_AS(forward_infer(p, wrong, NetworkMode::Direct), ContractError);
}

TEST_CASE("forward is deterministic and always CM") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Indirect, 30);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ComplexMatrix h = random_channel(16, 2, 100 + s);
    const AnalogPrecoder a = forward_infer(p, h, NetworkMode::Indirect);
    const AnalogPrecoder b = forward_infer(p, h, NetworkMode::Indirect);
    CHECK(equal_bits(a.f_rf, b.f_rf));
    a.check_cm(1e-9);
  }
}

TEST_CASE("training-mode forward matches inference on the same stats") {
  // With BN batch statistics copied into the running buffers, the plain
  // inference path must reproduce the graph forward's output.
  NetworkConfig cfg = toy_config();
  NetworkParams p = init_network(cfg, NetworkMode::Indirect, 31);
  std::vector<ComplexMatrix> channels;
  for (std::uint64_t s = 0; s < 4; ++s)
    channels.push_back(random_channel(16, 2, 200 + s));
  std::vector<const ComplexMatrix*> batch;
  for (const auto& h : channels) batch.push_back(&h);
  RngStream rng = RngStream::derive(32, "consist");
  TrainForward fwd = forward_train(p, batch, 0.0, rng);
  // Copy batch stats into running stats (EMA with momentum 1).
  NetworkParams p2 = p;
  for (std::size_t b = 0; b < p2.blocks.size(); ++b) {
    p2.blocks[b].run_mean = fwd.bn_stats[b].mean;
    p2.blocks[b].run_cov = fwd.bn_stats[b].cov;
  }
  for (std::size_t s = 0; s < channels.size(); ++s) {
    const AnalogPrecoder f =
        forward_infer(p2, channels[s], NetworkMode::Indirect);
    ComplexMatrix col(cfg.M * cfg.N_RF, 1);
    for (std::size_t i = 0; i < col.rows(); ++i)
      col(i, 0) = fwd.f_columns.value()(i, s);
    ComplexMatrix f_mat(cfg.M, cfg.N_RF);
    for (std::size_t j = 0; j < cfg.N_RF; ++j)
      for (std::size_t i = 0; i < cfg.M; ++i)
        f_mat(i, j) = col(j * cfg.M + i, 0);
    CHECK(relative_error(f_mat, f.f_rf) < 1e-12);
  }
}

TEST_CASE("checkpoint roundtrip preserves parameters, stats and outputs") {
  NetworkParams p = init_network(toy_config(), NetworkMode::Direct, 33);
  // Touch the running stats so the roundtrip is nontrivial.
  RngStream rng = RngStream::derive(34, "ckpt");
  ComplexMatrix x = ComplexMatrix::random_gaussian(12, 8, 1.0, rng);
  complex_bn_forward(x, p.blocks[0], true, 1e-5, 0.1);
  const std::string path = "/tmp/xlbeam_test_ckpt.bin";
  save_checkpoint(p, path, 33);
  NetworkParams q = load_checkpoint(path);
  CHECK(q.mode == NetworkMode::Direct);
  CHECK(q.cfg.hidden == p.cfg.hidden);
  auto pr = p.parameter_refs();
  auto qr = q.parameter_refs();
  REQUIRE(pr.size() == qr.size());
  for (std::size_t i = 0; i < pr.size(); ++i)
    CHECK(equal_bits(*pr[i].second, *qr[i].second));
  for (std::size_t f = 0; f < p.blocks[0].run_mean.size(); ++f) {
    CHECK(p.blocks[0].run_mean[f] == q.blocks[0].run_mean[f]);
    CHECK(p.blocks[0].run_cov[f] == q.blocks[0].run_cov[f]);
  }
  const ComplexMatrix h = random_channel(16, 2, 35);
  const ComplexMatrix y = matmul(p.sensing.stacked(), h);
  CHECK(equal_bits(forward_infer(p, y, NetworkMode::Direct).f_rf,
                   forward_infer(q, y, NetworkMode::Direct).f_rf));
  std::remove(path.c_str());
}

TEST_CASE("full-network gradient check (single seed)") {
  const GradCheckReport rep = run_network_gradcheck(7);
  CHECK(rep.max_rel_error < 1e-5);
}
