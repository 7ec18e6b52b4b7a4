#include "xlbeam/rng.hpp"

#include <cmath>

namespace xlbeam {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t key) : state_(key) {}

RngStream RngStream::derive(std::uint64_t master, std::string_view name,
                            std::uint64_t a, std::uint64_t b) {
  std::uint64_t k = mix64(master + kGamma);
  k = mix64(k ^ fnv1a(name));
  k = mix64(k + a * kGamma);
  k = mix64(k + b * kGamma);
  return RngStream(k);
}

std::uint64_t RngStream::next_u64() {
  state_ += kGamma;
  return mix64(state_);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double RngStream::next_gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_gaussian_;
  }
  // Box-Muller; u1 is kept away from 0 so log() stays finite.
  double u1 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = next_double();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  cached_gaussian_ = mag * std::sin(2.0 * kPi * u2);
  has_cached_ = true;
  return mag * std::cos(2.0 * kPi * u2);
}

cdouble RngStream::next_cgaussian(double sigma2) {
  if (sigma2 < 0.0) throw ContractError("negative complex-Gaussian variance");
  const double s = std::sqrt(sigma2 / 2.0);
  const double re = s * next_gaussian();
  const double im = s * next_gaussian();
  return {re, im};
}

}  // namespace xlbeam
