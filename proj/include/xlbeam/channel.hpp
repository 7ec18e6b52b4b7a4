#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xlbeam/complex_matrix.hpp"
#include "xlbeam/rng.hpp"

namespace xlbeam {

enum class ArrayKind { ULA, UPA };

/// Antenna array geometry with explicit element positions (meters). ULA
/// elements sit at delta_m * d on the y-axis with delta_m = (2m - M + 1)/2;
/// UPA elements form a centered grid in the (y, z) plane.
struct ArrayGeometry {
  ArrayKind kind = ArrayKind::ULA;
  std::size_t m_y = 1;  // ULA: element count; UPA: horizontal count
  std::size_t m_z = 1;  // UPA: vertical count (1 for ULA)
  double wavelength = 0.0;
  double spacing = 0.0;  // defaults to wavelength/2

  static ArrayGeometry ula(std::size_t elements, double carrier_hz,
                           double spacing = 0.0);
  static ArrayGeometry upa(std::size_t my, std::size_t mz, double carrier_hz,
                           double spacing = 0.0);

  std::size_t elements() const { return m_y * m_z; }
  /// 3-D position of element m in meters.
  std::array<double, 3> position(std::size_t m) const;
  /// Maximum pairwise element separation (aperture D).
  double aperture() const;
};

/// One propagation path: complex gain, angle parameter (the sine of the
/// arrival angle, in [-1, 1]; for UPA an azimuth/elevation sine pair) and
/// distance from the array center in meters.
struct PathParams {
  cdouble alpha;
  double theta;        // sin(azimuth)
  double theta_z = 0;  // sin(elevation); unused for ULA
  double r;            // meters, > 0
};

struct ScenarioConfig {
  std::size_t M = 32;
  std::size_t K = 2;
  std::size_t N_RF = 2;
  std::size_t L = 3;
  double carrier_hz = 100e9;
  double r_min = 5.0;
  double r_max = 40.0;
  double snr_db = 10.0;
  double pt = 1.0;
  ArrayKind geometry = ArrayKind::ULA;
  std::size_t upa_my = 0, upa_mz = 0;  // used when geometry == UPA
  std::uint64_t seed = 1;

  ArrayGeometry array() const;
  double noise_variance() const;  // sigma_n^2 = pt * 10^(-snr/10)
  void validate() const;
};

/// A set of channel realizations plus the paths that generated them.
struct ChannelBatch {
  std::vector<ComplexMatrix> H;                         // each M x K
  std::vector<std::vector<std::vector<PathParams>>> paths;  // [sample][user][path]
  ScenarioConfig scenario;
  std::string split;  // train / val / test
};

struct DatasetTriple {
  ChannelBatch train, val, test;
};

/// Near-field array response b(theta, r): entry m is
/// (1/sqrt(M)) exp(-j 2pi/lambda (r^(m) - r)) with r^(m) the exact Euclidean
/// distance from element m to the source point. Unit norm by construction.
ComplexMatrix array_response(const ArrayGeometry& g, double theta, double r,
                             double theta_z = 0.0);

/// Far-field boundary 2 D^2 / lambda.
double rayleigh_distance(const ArrayGeometry& g);

/// Single-user channel column per the spherical-wave multipath model:
/// h = sqrt(M/L) sum_l alpha_l exp(-j 2pi r_l / lambda) b(theta_l, r_l).
ComplexMatrix synthesize_channel(const ArrayGeometry& g,
                                 const std::vector<PathParams>& paths);

/// Draws path parameters (alpha ~ CN(0,1), theta ~ U[-1,1], r ~ U[rmin,rmax])
/// and synthesizes the user column. Deterministic given the stream.
std::pair<ComplexMatrix, std::vector<PathParams>> generate_channel(
    const ScenarioConfig& sc, RngStream& rng);

/// Multiuser channel matrix H (M x K) with per-user path lists.
std::pair<ComplexMatrix, std::vector<std::vector<PathParams>>>
generate_channel_matrix(const ScenarioConfig& sc, RngStream& rng);

/// size samples split 70/15/15 (floor train, floor val, remainder test) from
/// disjoint substreams of the master seed.
DatasetTriple generate_dataset(const ScenarioConfig& sc, std::size_t size);

/// Adds i.i.d. circular complex Gaussian noise with per-entry variance sigma2.
ComplexMatrix add_awgn(const ComplexMatrix& x, double sigma2, RngStream& rng);

/// Dataset snapshot (text manifest + little-endian double payload).
void save_dataset(const DatasetTriple& ds, const std::string& path);
DatasetTriple load_dataset(const std::string& path);

}  // namespace xlbeam
