#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "xlbeam/experiment.hpp"
#include "xlbeam/precoding.hpp"
#include "xlbeam/protocol.hpp"
#include "xlbeam/training.hpp"

using namespace xlbeam;

namespace {

ScenarioConfig small_scenario() {
  ScenarioConfig sc;
  sc.M = 16;
  sc.K = 2;
  sc.N_RF = 2;
  sc.L = 2;
  sc.r_min = 5.0;
  sc.r_max = 40.0;
  sc.snr_db = 10.0;
  sc.seed = 424;
  return sc;
}

NetworkConfig small_network() {
  NetworkConfig cfg;
  cfg.M = 16;
  cfg.K = 2;
  cfg.N_RF = 2;
  cfg.N = 3;
  cfg.hidden = {24, 12};
  return cfg;
}

TrainConfig quick_train() {
  TrainConfig tc;
  tc.learning_rate = 2e-3;
  tc.batch_size = 64;
  tc.max_epochs = 12;
  tc.scheduler_patience = 6;
  tc.early_stop_patience = 12;
  tc.seed = 31;
  return tc;
}

}  // namespace

TEST_CASE("batch loss equals concentrated_mse averaged over the batch") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  NetworkParams params = init_network(cfg, NetworkMode::Indirect, 5);
  DatasetTriple ds = generate_dataset(sc, 20);
  const double sigma2 = sc.noise_variance();

  std::vector<const ComplexMatrix*> batch;
  for (const auto& h : ds.train.H) batch.push_back(&h);
  RngStream rng = RngStream::derive(6, "loss");
  TrainForward fwd = forward_train(params, batch, 0.0, rng);
  ad::Var loss =
      batch_loss_graph(fwd.f_columns, batch, cfg.M, cfg.N_RF, sc.pt, sigma2);

  // Reference: plain concentrated MSE on the per-sample precoders.
  double expect = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    ComplexMatrix f(cfg.M, cfg.N_RF);
    for (std::size_t j = 0; j < cfg.N_RF; ++j)
      for (std::size_t i = 0; i < cfg.M; ++i)
        f(i, j) = fwd.f_columns.value()(j * cfg.M + i, s);
    expect += concentrated_mse(*batch[s], f, sc.pt, sigma2);
  }
  expect /= static_cast<double>(batch.size());
  CHECK(std::abs(loss.value()(0, 0).real() - expect) < 1e-12 * expect);

  // 0 < loss <= K.
  CHECK(loss.value()(0, 0).real() > 0.0);
  CHECK(loss.value()(0, 0).real() <= static_cast<double>(sc.K) + 1e-12);
}

TEST_CASE("batch of identical samples equals the single-sample loss") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  NetworkParams params = init_network(cfg, NetworkMode::Indirect, 7);
  RngStream rng = RngStream::derive(8, "dup");
  const ComplexMatrix h =
      ComplexMatrix::random_gaussian(cfg.M, cfg.K, 1.0, rng);
  const double sigma2 = sc.noise_variance();

  std::vector<const ComplexMatrix*> one{&h};
  std::vector<const ComplexMatrix*> many{&h, &h, &h, &h};
  const double l1 = batch_loss_value(params, one, sc.pt, sigma2);
  const double l4 = batch_loss_value(params, many, sc.pt, sigma2);
  // BN statistics differ between a 2-column and an 8-column batch of the
  // same sample only through roundoff (identical per-feature stats).
  CHECK(std::abs(l1 - l4) < 1e-9 * l1);
}

TEST_CASE("loss error reports the offending sample") {
  ComplexMatrix h(4, 2);
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  std::vector<const ComplexMatrix*> batch{&h};
  // A zero precoder column defeats even the jitter (trace 0), so the solve
  // must fail and name sample 0.
  ad::Var f_cols = ad::Var::constant(ComplexMatrix(4 * 2, 1));
  try {
    batch_loss_graph(f_cols, batch, 4, 2, 1.0, 0.1);
    FAIL("expected throw");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("sample 0") != std::string::npos);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  TrainConfig cfg;
  ComplexMatrix w(2, 2);
  w(0, 0) = cdouble{1.0, -2.0};
  ComplexMatrix w0 = w;
  std::vector<ComplexMatrix*> params{&w};
  std::vector<ComplexMatrix> grads{ComplexMatrix(2, 2)};
  std::vector<std::string> names{"w"};
  AdamState state;
  adam_step(params, grads, names, state, cfg, 0.01);
  CHECK(equal_bits(w, w0));
  CHECK(state.step == 1);
}

TEST_CASE("adam: first step on a scalar quadratic moves by about lr") {
  // L = w^2 with w0 = 1: grad = 2, first bias-corrected step = lr * 1.
  TrainConfig cfg;
  ComplexMatrix w(1, 1);
  w(0, 0) = 1.0;
  std::vector<ComplexMatrix*> params{&w};
  ComplexMatrix g(1, 1);
  g(0, 0) = 2.0;
  std::vector<ComplexMatrix> grads{g};
  std::vector<std::string> names{"w"};
  AdamState state;
  adam_step(params, grads, names, state, cfg, 0.1);
  CHECK(w(0, 0).real() == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("adam determinism and NaN abort") {
  TrainConfig cfg;
  ComplexMatrix wa(1, 1), wb(1, 1);
  wa(0, 0) = wb(0, 0) = cdouble{0.5, 0.5};
  ComplexMatrix g(1, 1);
  g(0, 0) = cdouble{0.3, -0.2};
  std::vector<std::string> names{"w"};
  {
    std::vector<ComplexMatrix*> pa{&wa};
    std::vector<ComplexMatrix> ga{g};
    AdamState sa;
    adam_step(pa, ga, names, sa, cfg, 0.01);
    adam_step(pa, ga, names, sa, cfg, 0.01);
  }
  {
    std::vector<ComplexMatrix*> pb{&wb};
    std::vector<ComplexMatrix> gb{g};
    AdamState sb;
    adam_step(pb, gb, names, sb, cfg, 0.01);
    adam_step(pb, gb, names, sb, cfg, 0.01);
  }
  CHECK(equal_bits(wa, wb));

  ComplexMatrix bad(1, 1);
  bad(0, 0) = cdouble{std::nan(""), 0.0};
  std::vector<ComplexMatrix*> p{&wa};
  std::vector<ComplexMatrix> gbad{bad};
  AdamState s;
  try {
    adam_step(p, gbad, {"sensing.0"}, s, cfg, 0.01);
    FAIL("expected throw");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("sensing.0") != std::string::npos);
  }
}

TEST_CASE("descent sanity: one small full-batch step does not increase the "
          "loss") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  const double sigma2 = sc.noise_variance();
  DatasetTriple ds = generate_dataset(sc, 40);
  std::vector<const ComplexMatrix*> batch;
  for (const auto& h : ds.train.H) batch.push_back(&h);

  int failures = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    NetworkParams params = init_network(cfg, NetworkMode::Indirect, 100 + seed);
    const double before = batch_loss_value(params, batch, sc.pt, sigma2);

    RngStream rng = RngStream::derive(seed, "descent");
    TrainForward fwd = forward_train(params, batch, 0.0, rng);
    ad::Var loss = batch_loss_graph(fwd.f_columns, batch, cfg.M, cfg.N_RF,
                                    sc.pt, sigma2);
    ad::backward(loss);
    auto refs = params.parameter_refs();
    std::vector<ComplexMatrix*> ptrs;
    std::vector<std::string> names;
    std::vector<ComplexMatrix> grads;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      ptrs.push_back(refs[i].second);
      names.push_back(refs[i].first);
      grads.push_back(fwd.leaves[i].grad());
    }
    TrainConfig tc;
    AdamState state;
    adam_step(ptrs, grads, names, state, tc, 1e-5);
    const double after = batch_loss_value(params, batch, sc.pt, sigma2);
    if (after > before) ++failures;
  }
  CHECK(failures <= 1);
}

TEST_CASE("fit: zero learning rate is a no-op on the weights") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  TrainConfig tc = quick_train();
  tc.learning_rate = 0.0;
  tc.max_epochs = 3;
  DatasetTriple ds = generate_dataset(sc, 60);
  TrainResult result = fit(NetworkMode::Indirect, ds, cfg, tc);

  // The weights never move from the seeded init.
  NetworkParams reference = init_network(
      cfg, NetworkMode::Indirect,
      RngStream::derive(tc.seed, "init-seed").next_u64());
  auto got = result.params.parameter_refs();
  auto want = reference.parameter_refs();
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(equal_bits(*got[i].second, *want[i].second));

  // Validation is constant up to BN running-stat drift: the EMA keeps
  // absorbing batch statistics computed under fresh augmentation noise, so
  // the score wobbles by O(momentum / sqrt(batch)) even though no weight
  // moves. Everything else in the path is frozen.
  std::vector<double> vals;
  for (const TrainLogRow& r : result.log)
    if (r.has_validation) vals.push_back(r.val_sum_rate);
  REQUIRE(vals.size() == 3);
  for (double v : vals)
    CHECK(std::abs(v - vals[0]) < 2e-2 * std::abs(vals[0]));
}

TEST_CASE("fit: training beats the random-CM baseline on a reduced scenario") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  cfg.hidden = {32, 16};
  TrainConfig tc = quick_train();
  tc.batch_size = 128;
  tc.max_epochs = 150;
  tc.scheduler_patience = 40;
  tc.early_stop_patience = 150;
  DatasetTriple ds = generate_dataset(sc, 800);
  TrainResult result = fit(NetworkMode::Indirect, ds, cfg, tc);
  CHECK_FALSE(result.diverged);

  const MethodStats trained =
      eval_trained(result.params, ds.test, NetworkMode::Indirect, {}, 9);
  const MethodStats random_base = eval_random_cm(ds.test, 9);
  CHECK(trained.sum_rate_mean > random_base.sum_rate_mean);
}

TEST_CASE("fit: best checkpoint matches the max recorded validation score") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  TrainConfig tc = quick_train();
  DatasetTriple ds = generate_dataset(sc, 80);
  TrainResult result = fit(NetworkMode::Indirect, ds, cfg, tc);
  double best_logged = -1e300;
  for (const TrainLogRow& r : result.log)
    if (r.has_validation) best_logged = std::max(best_logged, r.val_sum_rate);
  CHECK(result.best_val_sum_rate == doctest::Approx(best_logged));
  // The returned parameters reproduce that score.
  const double replay = validation_sum_rate(
      result.params, ds.val, NetworkMode::Indirect, 1, 0.0,
      RngStream::derive(tc.seed, "val-noise").next_u64());
  CHECK(replay == doctest::Approx(result.best_val_sum_rate).epsilon(1e-12));
}

TEST_CASE("fit: identical configuration reproduces the identical run") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  TrainConfig tc = quick_train();
  tc.max_epochs = 4;
  DatasetTriple ds = generate_dataset(sc, 60);
  TrainResult a = fit(NetworkMode::Indirect, ds, cfg, tc);
  TrainResult b = fit(NetworkMode::Indirect, ds, cfg, tc);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_sum_rate == b.log[i].val_sum_rate);
  }
  auto ra = a.params.parameter_refs();
  auto rb = b.params.parameter_refs();
  for (std::size_t i = 0; i < ra.size(); ++i)
    CHECK(equal_bits(*ra[i].second, *rb[i].second));
}

TEST_CASE("fit: direct mode trains end to end") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  TrainConfig tc = quick_train();
  tc.max_epochs = 6;
  DatasetTriple ds = generate_dataset(sc, 80);
  TrainResult result = fit(NetworkMode::Direct, ds, cfg, tc, 2, 1e-9);
  CHECK_FALSE(result.diverged);
  CHECK(result.params.mode == NetworkMode::Direct);
  CHECK(result.best_val_sum_rate > 0.0);
}

TEST_CASE("training log CSV carries schema, lr changes and best epoch") {
  ScenarioConfig sc = small_scenario();
  NetworkConfig cfg = small_network();
  TrainConfig tc = quick_train();
  tc.max_epochs = 3;
  DatasetTriple ds = generate_dataset(sc, 60);
  TrainResult result = fit(NetworkMode::Indirect, ds, cfg, tc);
  const std::string path = "/tmp/xlbeam_train_log.csv";
  write_train_log_csv(result, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("# schema=1") != std::string::npos);
  CHECK(text.find("epoch,step,train_loss,val_sum_rate,lr,wall_ms,seed") !=
        std::string::npos);
  CHECK(text.find("# best_epoch=") != std::string::npos);
  std::remove(path.c_str());
}
