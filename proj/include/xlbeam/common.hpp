#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace xlbeam {

using cdouble = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
// Propagation constant used by the channel model (plain 3e8, not the CODATA
// value; all wavelength-derived quantities in this project assume it).
inline constexpr double kSpeedOfLight = 3.0e8;

/// Thrown when an input violates a documented precondition.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numeric routine fails (non-PD pivot, divergence, ...).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thread count for data-parallel helpers. Reads XLBEAM_THREADS once;
/// defaults to the hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Splits into contiguous chunks across
/// threads; results must be written to disjoint slots so the outcome is
/// independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace xlbeam
