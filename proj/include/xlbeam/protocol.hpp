#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlbeam/channel.hpp"
#include "xlbeam/network.hpp"
#include "xlbeam/precoding.hpp"

namespace xlbeam {

struct ProtocolConfig {
  std::size_t repetitions = 1;  // I blocks for effective-channel estimation
  double damping = 1e-9;        // eps for the regularized digital solve
  /// UL noise variance override; negative means "use the scenario SNR"
  /// (SNR_UL = SNR_DL). Zero runs the protocol noiselessly.
  double ul_sigma2_override = -1.0;

  double ul_sigma2(double scenario_sigma2) const {
    return ul_sigma2_override < 0.0 ? scenario_sigma2 : ul_sigma2_override;
  }
};

struct StageTiming {
  std::string stage;
  double micros = 0.0;
};

/// Full record of one direct-mode run, in protocol order:
/// sensing -> inference -> effective-channel estimation -> precoding.
struct ProtocolTrace {
  ComplexMatrix y_ul;          // N K x K measurements
  AnalogPrecoder f_rf;
  EffectiveChannel h_eq_hat;
  DigitalPrecoder digital;
  LinkMetrics metrics;
  std::vector<StageTiming> timings;
  std::size_t pilot_overhead = 0;  // N + I

  /// JSON document with stage names, shapes, metrics and timings; matrices
  /// included as base64 little-endian payloads when with_payloads is set.
  std::string to_json(bool with_payloads = false) const;
};

struct HybridRun {
  AnalogPrecoder f_rf;
  DigitalPrecoder digital;
  LinkMetrics metrics;
};

/// Algorithm "indirect": F_RF from the network on explicit CSI (noise off),
/// digital precoder in closed form from the true channel.
HybridRun run_indirect(const ComplexMatrix& h, const NetworkParams& params,
                       const ScenarioConfig& sc);

/// Algorithm "direct": N noisy sensing slots, network inference on the
/// measurements only, I repetition blocks through the deployed combiner
/// F_RF^H, averaged effective-channel estimate, regularized digital solve.
/// h_true is used solely to synthesize over-the-air signals and final
/// metrics; it is never fed to the network.
ProtocolTrace run_direct(const ComplexMatrix& h_true,
                         const NetworkParams& params,
                         const ProtocolConfig& protocol,
                         const ScenarioConfig& sc, RngStream& rng);

/// Floor baseline: uniform random phases at modulus 1/sqrt(M), closed-form
/// digital stage.
HybridRun random_cm_baseline(const ComplexMatrix& h, const ScenarioConfig& sc,
                             RngStream& rng);

}  // namespace xlbeam
