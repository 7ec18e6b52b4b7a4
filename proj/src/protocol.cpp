#include "xlbeam/protocol.hpp"

#include <chrono>

#include <json.hpp>

#include "xlbeam/serialize.hpp"

namespace xlbeam {
namespace {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& out) : out_(out) {}
  void mark(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    out_.push_back(
        {stage, std::chrono::duration<double, std::micro>(now - last_).count()});
    last_ = now;
  }

 private:
  std::vector<StageTiming>& out_;
  std::chrono::steady_clock::time_point last_ =
      std::chrono::steady_clock::now();
};

nlohmann::json matrix_json(const ComplexMatrix& m, bool with_payload) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  if (with_payload) {
    std::vector<unsigned char> bytes(m.size() * 16);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double re = m.data()[i].real(), im = m.data()[i].imag();
      std::uint64_t rb, ib;
      static_assert(sizeof(double) == 8);
      std::memcpy(&rb, &re, 8);
      std::memcpy(&ib, &im, 8);
      for (int b = 0; b < 8; ++b) {
        bytes[16 * i + b] = static_cast<unsigned char>((rb >> (8 * b)) & 0xFF);
        bytes[16 * i + 8 + b] =
            static_cast<unsigned char>((ib >> (8 * b)) & 0xFF);
      }
    }
    j["data_base64_le"] = base64_encode(bytes.data(), bytes.size());
  }
  return j;
}

}  // namespace

std::string ProtocolTrace::to_json(bool with_payloads) const {
  nlohmann::json j;
  j["stages"] = {"sensing", "inference", "effective_channel_estimation",
                 "precoding"};
  j["pilot_overhead"] = pilot_overhead;
  j["repetitions"] = h_eq_hat.repetitions;
  j["y_ul"] = matrix_json(y_ul, with_payloads);
  j["f_rf"] = matrix_json(f_rf.f_rf, with_payloads);
  j["h_eq_hat"] = matrix_json(h_eq_hat.h_eq, with_payloads);
  j["f_bb"] = matrix_json(digital.f_bb, with_payloads);
  j["beta"] = digital.beta;
  j["metrics"]["sum_rate"] = metrics.sum_rate;
  j["metrics"]["sum_mse"] = metrics.sum_mse;
  j["metrics"]["sum_mse_db"] = metrics.sum_mse_db;
  j["metrics"]["sinr"] = metrics.sinr;
  for (const StageTiming& t : timings)
    j["timings_us"][t.stage] = t.micros;
  return j.dump(2);
}

HybridRun run_indirect(const ComplexMatrix& h, const NetworkParams& params,
                       const ScenarioConfig& sc) {
  const double sigma2 = sc.noise_variance();
  HybridRun run;
  run.f_rf = forward_infer(params, h, NetworkMode::Indirect);
  run.digital = kkt_digital(h, run.f_rf, sc.pt, sigma2);
  run.metrics =
      link_metrics(h, run.f_rf.f_rf, run.digital.f_bb, run.digital.beta,
                   sigma2);
  return run;
}

ProtocolTrace run_direct(const ComplexMatrix& h_true,
                         const NetworkParams& params,
                         const ProtocolConfig& protocol,
                         const ScenarioConfig& sc, RngStream& rng) {
  if (protocol.repetitions < 1)
    throw ContractError("run_direct: repetitions must be >= 1");
  const double sigma2 = sc.noise_variance();
  const double ul_sigma2 = protocol.ul_sigma2(sigma2);
  ProtocolTrace trace;
  StageClock clock(trace.timings);

  // (i) N sensing slots with fresh noise per slot.
  trace.y_ul = sensing_forward(h_true, params.sensing, ul_sigma2, rng);
  clock.mark("sensing");

  // (ii) Analog precoder from the measurements only.
  trace.f_rf = forward_infer(params, trace.y_ul, NetworkMode::Direct);
  clock.mark("inference");

  // (iii) I repetition blocks through the deployed UL combiner F_RF^H,
  // (iv) averaged into the effective-channel estimate.
  const ComplexMatrix combiner = hermitian(trace.f_rf.f_rf);
  std::vector<ComplexMatrix> blocks;
  blocks.reserve(protocol.repetitions);
  for (std::size_t i = 0; i < protocol.repetitions; ++i) {
    const ComplexMatrix noisy = add_awgn(h_true, ul_sigma2, rng);
    blocks.push_back(matmul(combiner, noisy));
  }
  trace.h_eq_hat = estimate_effective_channel(blocks);
  clock.mark("effective_channel_estimation");

  // (v) Regularized closed-form digital precoder and power scaling.
  trace.digital = digital_from_effective(trace.h_eq_hat, trace.f_rf, sc.pt,
                                         sigma2, protocol.damping);
  clock.mark("precoding");

  trace.metrics = link_metrics(h_true, trace.f_rf.f_rf, trace.digital.f_bb,
                               trace.digital.beta, sigma2);
  trace.pilot_overhead = params.cfg.N + protocol.repetitions;
  return trace;
}

HybridRun random_cm_baseline(const ComplexMatrix& h, const ScenarioConfig& sc,
                             RngStream& rng) {
  const double sigma2 = sc.noise_variance();
  HybridRun run;
  run.f_rf = random_cm_precoder(h.rows(), sc.N_RF, rng);
  run.digital = kkt_digital(h, run.f_rf, sc.pt, sigma2);
  run.metrics =
      link_metrics(h, run.f_rf.f_rf, run.digital.f_bb, run.digital.beta,
                   sigma2);
  return run;
}

}  // namespace xlbeam
