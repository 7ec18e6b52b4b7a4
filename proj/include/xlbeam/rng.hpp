#pragma once

#include <cstdint>
#include <string_view>

#include "xlbeam/common.hpp"

namespace xlbeam {

/// Counter-based random stream (splitmix64 core). Streams are addressed by
/// (master seed, name, two indices); any stream can be reconstructed from its
/// address, which keeps parallel generation reproducible.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key);

  /// Derives an independent substream from a master seed and a label,
  /// e.g. derive(seed, "sample", dataset_id, sample_idx).
  static RngStream derive(std::uint64_t master, std::string_view name,
                          std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53-bit resolution.
  double next_double();
  double next_uniform(double lo, double hi);
  /// Standard normal via Box-Muller (explicit, for cross-platform stability).
  double next_gaussian();
  /// Circularly symmetric complex Gaussian CN(0, sigma2).
  cdouble next_cgaussian(double sigma2);

 private:
  std::uint64_t state_;
  double cached_gaussian_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace xlbeam
