#include "xlbeam/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "xlbeam/precoding.hpp"
#include "xlbeam/protocol.hpp"

namespace xlbeam {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || batch_size == 0 || max_epochs == 0 ||
      !(scheduler_factor > 0.0 && scheduler_factor < 1.0) ||
      !(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 > 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
    throw ContractError("train config: invalid field");
}

ad::Var batch_loss_graph(const ad::Var& f_columns,
                         const std::vector<const ComplexMatrix*>& batch,
                         std::size_t m, std::size_t n_rf, double pt,
                         double sigma2) {
  const std::size_t s_count = batch.size();
  if (f_columns.cols() != s_count)
    throw ContractError("batch_loss_graph: batch size mismatch");
  const std::size_t k = batch[0]->cols();
  const double c = pt / (static_cast<double>(k) * sigma2);
  const ad::Var eye_k = ad::Var::constant(ComplexMatrix::identity(k));
  std::vector<ad::Var> per_sample;
  per_sample.reserve(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    try {
      ad::Var col = ad::slice(f_columns, 0, s, m * n_rf, 1);
      ad::Var f = ad::reshape_colmajor(col, m, n_rf);
      ad::Var fh = ad::hermitian(f);
      ad::Var gram = ad::matmul(fh, f);
      const double delta = 1e-12 * xlbeam::trace(gram.value()).real() /
                           static_cast<double>(n_rf);
      ad::Var gram_j = ad::add(
          gram, ad::Var::constant(
                    ComplexMatrix::scaled_identity(n_rf, cdouble{delta, 0.0})));
      ad::Var b = ad::matmul(fh, ad::Var::constant(*batch[s]));
      ad::Var x = ad::cholesky_solve(gram_j, b);
      ad::Var quad = ad::matmul(ad::hermitian(b), x);
      ad::Var inner = ad::add(eye_k, ad::scale(quad, cdouble{c, 0.0}));
      ad::Var inner_h =
          ad::scale(ad::add(inner, ad::hermitian(inner)), cdouble{0.5, 0.0});
      ad::Var t = ad::cholesky_solve(inner_h, eye_k);
      per_sample.push_back(ad::real(ad::trace(t)));
    } catch (const NumericError& e) {
      throw NumericError("batch loss: sample " + std::to_string(s) + ": " +
                         e.what());
    }
  }
  return ad::mean(per_sample);
}

double batch_loss_value(const NetworkParams& params,
                        const std::vector<const ComplexMatrix*>& batch,
                        double pt, double sigma2) {
  RngStream rng = RngStream::derive(0, "loss-eval");
  TrainForward fwd = forward_train(params, batch, 0.0, rng);
  ad::Var loss = batch_loss_graph(fwd.f_columns, batch, params.cfg.M,
                                  params.cfg.N_RF, pt, sigma2);
  return loss.value()(0, 0).real();
}

void adam_step(std::vector<ComplexMatrix*>& params,
               const std::vector<ComplexMatrix>& grads,
               const std::vector<std::string>& names, AdamState& state,
               const TrainConfig& cfg, double lr) {
  if (state.m.empty()) {
    for (ComplexMatrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1,
                                    static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2,
                                    static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    ComplexMatrix& w = *params[p];
    const ComplexMatrix& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gr = g.data()[i].real();
      const double gi = g.data()[i].imag();
      if (std::isnan(gr) || std::isnan(gi))
        throw NumericError("adam_step: NaN gradient in parameter '" +
                           names[p] + "'");
      cdouble& m = state.m[p].data()[i];
      cdouble& v = state.v[p].data()[i];
      m = cdouble{cfg.adam_beta1 * m.real() + (1.0 - cfg.adam_beta1) * gr,
                  cfg.adam_beta1 * m.imag() + (1.0 - cfg.adam_beta1) * gi};
      v = cdouble{cfg.adam_beta2 * v.real() + (1.0 - cfg.adam_beta2) * gr * gr,
                  cfg.adam_beta2 * v.imag() + (1.0 - cfg.adam_beta2) * gi * gi};
      const double mr = m.real() / bc1, mi = m.imag() / bc1;
      const double vr = v.real() / bc2, vi = v.imag() / bc2;
      w.data()[i] -= cdouble{lr * mr / (std::sqrt(vr) + cfg.adam_eps),
                             lr * mi / (std::sqrt(vi) + cfg.adam_eps)};
    }
  }
}

double validation_sum_rate(const NetworkParams& params,
                           const ChannelBatch& split, NetworkMode mode,
                           std::size_t protocol_reps, double damping,
                           std::uint64_t eval_seed) {
  const ScenarioConfig& sc = split.scenario;
  const double sigma2 = sc.noise_variance();
  std::vector<double> rates(split.H.size());
  parallel_for(split.H.size(), [&](std::size_t i) {
    if (mode == NetworkMode::Indirect) {
      const AnalogPrecoder f_rf = forward_infer(params, split.H[i], mode);
      const DigitalPrecoder d = kkt_digital(split.H[i], f_rf, sc.pt, sigma2);
      rates[i] =
          sinr_and_sum_rate(split.H[i], f_rf.f_rf, d.f_bb, sigma2).second;
    } else {
      ProtocolConfig pc;
      pc.repetitions = protocol_reps;
      pc.damping = damping;
      RngStream rng = RngStream::derive(eval_seed, "protocol-eval", i);
      const ProtocolTrace tr = run_direct(split.H[i], params, pc, sc, rng);
      rates[i] = tr.metrics.sum_rate;
    }
  });
  return std::accumulate(rates.begin(), rates.end(), 0.0) /
         static_cast<double>(rates.size());
}

TrainResult fit(NetworkMode mode, const DatasetTriple& dataset,
                const NetworkConfig& net_cfg, const TrainConfig& cfg,
                std::size_t protocol_reps, double damping) {
  cfg.validate();
  if (dataset.train.H.empty() || dataset.val.H.empty())
    throw ContractError("fit: dataset splits must be nonempty");
  const ScenarioConfig& sc = dataset.train.scenario;
  const double sigma2 = sc.noise_variance();

  NetworkParams params = init_network(net_cfg, mode,
                                      RngStream::derive(cfg.seed, "init-seed")
                                          .next_u64());
  auto refs = params.parameter_refs();
  std::vector<ComplexMatrix*> param_ptrs;
  std::vector<std::string> param_names;
  for (auto& [name, mat] : refs) {
    param_ptrs.push_back(mat);
    param_names.push_back(name);
  }

  AdamState adam;
  TrainResult result;
  double lr = cfg.learning_rate;
  double best_val = -1e300;
  NetworkParams best_params = params;
  std::size_t plateau = 0, stall = 0, global_step = 0;
  RngStream shuffle_rng = RngStream::derive(cfg.seed, "shuffle");

  std::vector<std::size_t> order(dataset.train.H.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&t0] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    // Fisher-Yates with the dedicated shuffle stream.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[shuffle_rng.next_u64() % i]);

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const ComplexMatrix*> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i)
        batch.push_back(&dataset.train.H[order[i]]);

      // Fresh noise every minibatch step (both modes).
      RngStream noise_rng =
          RngStream::derive(cfg.seed, "train-noise", global_step);
      TrainForward fwd = forward_train(params, batch, sigma2, noise_rng);
      ad::Var loss = batch_loss_graph(fwd.f_columns, batch, net_cfg.M,
                                      net_cfg.N_RF, sc.pt, sigma2);
      const double loss_val = loss.value()(0, 0).real();
      if (std::isnan(loss_val)) {
        result.diverged = true;
        result.params = best_params;
        result.best_val_sum_rate = best_val;
        return result;
      }
      ad::backward(loss);

      std::vector<ComplexMatrix> grads;
      grads.reserve(fwd.leaves.size());
      double norm_sq = 0.0;
      for (const ad::Var& leaf : fwd.leaves) {
        grads.push_back(leaf.grad());
        norm_sq += frobenius_norm_sq(grads.back());
      }
      const double gnorm = std::sqrt(norm_sq);
      if (gnorm > cfg.grad_clip) {
        const double k = cfg.grad_clip / gnorm;
        for (ComplexMatrix& g : grads)
          for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= k;
      }
      adam_step(param_ptrs, grads, param_names, adam, cfg, lr);

      // Running-stat EMA from the batch statistics the graph saw.
      for (std::size_t p = 0; p < params.blocks.size(); ++p) {
        MlpBlock& b = params.blocks[p];
        const ad::WhitenStats& st = fwd.bn_stats[p];
        for (std::size_t f = 0; f < b.run_mean.size(); ++f) {
          b.run_mean[f] = (1.0 - net_cfg.bn_momentum) * b.run_mean[f] +
                          net_cfg.bn_momentum * st.mean[f];
          for (int t = 0; t < 3; ++t)
            b.run_cov[f][t] = (1.0 - net_cfg.bn_momentum) * b.run_cov[f][t] +
                              net_cfg.bn_momentum * st.cov[f][t];
        }
      }

      epoch_loss += loss_val;
      ++n_batches;
      ++global_step;
      TrainLogRow row;
      row.epoch = epoch;
      row.step = global_step;
      row.train_loss = loss_val;
      row.lr = lr;
      row.wall_ms = wall_ms();
      row.seed = cfg.seed;
      result.log.push_back(row);
    }

    // Validation once per epoch on the full inference path.
    const double val_rate = validation_sum_rate(
        params, dataset.val, mode, protocol_reps, damping,
        RngStream::derive(cfg.seed, "val-noise").next_u64());
    TrainLogRow& last = result.log.back();
    last.val_sum_rate = val_rate;
    last.has_validation = true;

    if (val_rate > best_val + cfg.early_stop_threshold) {
      stall = 0;
    } else {
      ++stall;
    }
    if (val_rate > best_val + cfg.scheduler_threshold) {
      plateau = 0;
    } else {
      ++plateau;
    }
    if (val_rate > best_val) {
      best_val = val_rate;
      best_params = params;
      result.best_epoch = epoch;
    }
    if (plateau >= cfg.scheduler_patience) {
      lr *= cfg.scheduler_factor;
      plateau = 0;
      result.lr_changes.emplace_back(epoch, lr);
    }
    if (stall >= cfg.early_stop_patience) break;
    (void)epoch_loss;
    (void)n_batches;
  }

  result.params = best_params;
  result.best_val_sum_rate = best_val;
  return result;
}

void write_train_log_csv(const TrainResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NumericError("cannot open training log " + path);
  out << "# schema=1\n";
  out << "epoch,step,train_loss,val_sum_rate,lr,wall_ms,seed\n";
  char buf[256];
  for (const TrainLogRow& r : result.log) {
    if (r.has_validation)
      std::snprintf(buf, sizeof(buf), "%zu,%zu,%.12g,%.12g,%.12g,%.3f,%llu\n",
                    r.epoch, r.step, r.train_loss, r.val_sum_rate, r.lr,
                    r.wall_ms, static_cast<unsigned long long>(r.seed));
    else
      std::snprintf(buf, sizeof(buf), "%zu,%zu,%.12g,,%.12g,%.3f,%llu\n",
                    r.epoch, r.step, r.train_loss, r.lr, r.wall_ms,
                    static_cast<unsigned long long>(r.seed));
    out << buf;
  }
  for (const auto& [epoch, lr] : result.lr_changes)
    out << "# lr_change epoch=" << epoch << " lr=" << lr << "\n";
  out << "# best_epoch=" << result.best_epoch << "\n";
  out << "# best_val_sum_rate=" << result.best_val_sum_rate << "\n";
}

}  // namespace xlbeam
