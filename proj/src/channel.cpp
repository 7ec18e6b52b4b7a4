#include "xlbeam/channel.hpp"

#include <cmath>

#include "xlbeam/serialize.hpp"

namespace xlbeam {

ArrayGeometry ArrayGeometry::ula(std::size_t elements, double carrier_hz,
                                 double spacing) {
  ArrayGeometry g;
  g.kind = ArrayKind::ULA;
  g.m_y = elements;
  g.m_z = 1;
  g.wavelength = kSpeedOfLight / carrier_hz;
  g.spacing = spacing > 0.0 ? spacing : g.wavelength / 2.0;
  return g;
}

ArrayGeometry ArrayGeometry::upa(std::size_t my, std::size_t mz,
                                 double carrier_hz, double spacing) {
  ArrayGeometry g;
  g.kind = ArrayKind::UPA;
  g.m_y = my;
  g.m_z = mz;
  g.wavelength = kSpeedOfLight / carrier_hz;
  g.spacing = spacing > 0.0 ? spacing : g.wavelength / 2.0;
  return g;
}

std::array<double, 3> ArrayGeometry::position(std::size_t m) const {
  const std::size_t iy = m % m_y;
  const std::size_t iz = m / m_y;
  const double dy = (2.0 * static_cast<double>(iy) -
                     static_cast<double>(m_y) + 1.0) / 2.0;
  const double dz = (2.0 * static_cast<double>(iz) -
                     static_cast<double>(m_z) + 1.0) / 2.0;
  return {0.0, dy * spacing, dz * spacing};
}

double ArrayGeometry::aperture() const {
  const double wy = static_cast<double>(m_y - 1) * spacing;
  const double wz = static_cast<double>(m_z - 1) * spacing;
  return std::sqrt(wy * wy + wz * wz);
}

ArrayGeometry ScenarioConfig::array() const {
  if (geometry == ArrayKind::UPA) {
    std::size_t my = upa_my, mz = upa_mz;
    if (my == 0 || mz == 0 || my * mz != M)
      throw ContractError("scenario: UPA shape does not match M");
    return ArrayGeometry::upa(my, mz, carrier_hz);
  }
  return ArrayGeometry::ula(M, carrier_hz);
}

double ScenarioConfig::noise_variance() const {
  return pt * std::pow(10.0, -snr_db / 10.0);
}

void ScenarioConfig::validate() const {
  if (!(K <= N_RF && N_RF <= M))
    throw ContractError("scenario: requires K <= N_RF <= M");
  if (!(r_min > 0.0 && r_max >= r_min))
    throw ContractError("scenario: requires 0 < r_min <= r_max");
  if (!(pt > 0.0)) throw ContractError("scenario: pt must be positive");
  if (!(carrier_hz > 0.0)) throw ContractError("scenario: bad carrier");
  array();  // validates UPA shape
}

ComplexMatrix array_response(const ArrayGeometry& g, double theta, double r,
                             double theta_z) {
  if (!(r > 0.0)) throw ContractError("array_response: r must be positive");
  if (std::abs(theta) > 1.0 || std::abs(theta_z) > 1.0)
    throw ContractError("array_response: |theta| must be <= 1");
  const std::size_t m = g.elements();
  // Source point at distance r with direction sines (theta, theta_z):
  // e = (sqrt(1-v^2) sqrt(1-u^2), sqrt(1-v^2) u, v), unit norm for any
  // u, v in [-1, 1]. For the ULA (v = 0) the per-element Euclidean distance
  // reduces to the closed form sqrt(r^2 + d_m^2 d^2 - 2 r d_m d theta).
  const double u = theta, v = g.kind == ArrayKind::ULA ? 0.0 : theta_z;
  const double cv = std::sqrt(1.0 - v * v);
  const std::array<double, 3> src{r * cv * std::sqrt(1.0 - u * u),
                                  r * cv * u, r * v};
  ComplexMatrix b(m, 1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  const double k = 2.0 * kPi / g.wavelength;
  for (std::size_t i = 0; i < m; ++i) {
    const auto p = g.position(i);
    const double dx = src[0] - p[0];
    const double dy = src[1] - p[1];
    const double dz = src[2] - p[2];
    const double rm = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double phase = -k * (rm - r);
    b(i, 0) = cdouble{scale * std::cos(phase), scale * std::sin(phase)};
  }
  return b;
}

double rayleigh_distance(const ArrayGeometry& g) {
  const double d = g.aperture();
  return 2.0 * d * d / g.wavelength;
}

ComplexMatrix synthesize_channel(const ArrayGeometry& g,
                                 const std::vector<PathParams>& paths) {
  const std::size_t m = g.elements();
  ComplexMatrix h(m, 1);
  const double gain = std::sqrt(static_cast<double>(m) /
                                static_cast<double>(paths.size()));
  const double k = 2.0 * kPi / g.wavelength;
  for (const PathParams& p : paths) {
    const ComplexMatrix b = array_response(g, p.theta, p.r, p.theta_z);
    const double ph = -k * p.r;
    const cdouble w =
        gain * p.alpha * cdouble{std::cos(ph), std::sin(ph)};
    for (std::size_t i = 0; i < m; ++i) h(i, 0) += w * b(i, 0);
  }
  return h;
}

std::pair<ComplexMatrix, std::vector<PathParams>> generate_channel(
    const ScenarioConfig& sc, RngStream& rng) {
  const ArrayGeometry g = sc.array();
  std::vector<PathParams> paths(sc.L);
  for (PathParams& p : paths) {
    p.alpha = rng.next_cgaussian(1.0);
    p.theta = rng.next_uniform(-1.0, 1.0);
    p.theta_z = g.kind == ArrayKind::UPA ? rng.next_uniform(-1.0, 1.0) : 0.0;
    p.r = rng.next_uniform(sc.r_min, sc.r_max);
  }
  return {synthesize_channel(g, paths), std::move(paths)};
}

std::pair<ComplexMatrix, std::vector<std::vector<PathParams>>>
generate_channel_matrix(const ScenarioConfig& sc, RngStream& rng) {
  ComplexMatrix h(sc.M, sc.K);
  std::vector<std::vector<PathParams>> paths(sc.K);
  for (std::size_t k = 0; k < sc.K; ++k) {
    auto [col, p] = generate_channel(sc, rng);
    for (std::size_t i = 0; i < sc.M; ++i) h(i, k) = col(i, 0);
    paths[k] = std::move(p);
  }
  return {std::move(h), std::move(paths)};
}

namespace {

ChannelBatch make_split(const ScenarioConfig& sc, const char* split,
                        std::uint64_t split_id, std::size_t count) {
  ChannelBatch batch;
  batch.scenario = sc;
  batch.split = split;
  batch.H.resize(count);
  batch.paths.resize(count);
  parallel_for(count, [&](std::size_t i) {
    RngStream rng = RngStream::derive(sc.seed, "sample", split_id, i);
    auto [h, p] = generate_channel_matrix(sc, rng);
    batch.H[i] = std::move(h);
    batch.paths[i] = std::move(p);
  });
  return batch;
}

}  // namespace

DatasetTriple generate_dataset(const ScenarioConfig& sc, std::size_t size) {
  if (size < 10) throw ContractError("generate_dataset: size must be >= 10");
  sc.validate();
  // Floor train, floor val, remainder test.
  const std::size_t n_train = size * 70 / 100;
  const std::size_t n_val = size * 15 / 100;
  const std::size_t n_test = size - n_train - n_val;
  DatasetTriple ds;
  ds.train = make_split(sc, "train", 0, n_train);
  ds.val = make_split(sc, "val", 1, n_val);
  ds.test = make_split(sc, "test", 2, n_test);
  return ds;
}

ComplexMatrix add_awgn(const ComplexMatrix& x, double sigma2, RngStream& rng) {
  if (sigma2 < 0.0) throw ContractError("add_awgn: negative variance");
  if (sigma2 == 0.0) return x;
  ComplexMatrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] += rng.next_cgaussian(sigma2);
  return out;
}

namespace {

void write_batch(Serializer& s, const ChannelBatch& b) {
  for (std::size_t i = 0; i < b.H.size(); ++i) {
    s.write_complex(b.H[i].data(), b.H[i].size());
    for (const auto& user : b.paths[i])
      for (const PathParams& p : user) {
        s.write_complex(&p.alpha, 1);
        s.write_doubles({p.theta, p.theta_z, p.r});
      }
  }
}

ChannelBatch read_batch(Deserializer& d, const ScenarioConfig& sc,
                        const char* split, std::size_t count) {
  ChannelBatch b;
  b.scenario = sc;
  b.split = split;
  b.H.assign(count, ComplexMatrix(sc.M, sc.K));
  b.paths.assign(count, {});
  for (std::size_t i = 0; i < count; ++i) {
    d.read_complex(b.H[i].data(), b.H[i].size());
    b.paths[i].assign(sc.K, std::vector<PathParams>(sc.L));
    for (auto& user : b.paths[i])
      for (PathParams& p : user) {
        d.read_complex(&p.alpha, 1);
        auto v = d.read_doubles(3);
        p.theta = v[0];
        p.theta_z = v[1];
        p.r = v[2];
      }
  }
  return b;
}

}  // namespace

void save_dataset(const DatasetTriple& ds, const std::string& path) {
  Serializer s(path, "xlbeam-dataset v1");
  const ScenarioConfig& sc = ds.train.scenario;
  s.put("M", sc.M);
  s.put("K", sc.K);
  s.put("N_RF", sc.N_RF);
  s.put("L", sc.L);
  s.put("carrier_hz", sc.carrier_hz);
  s.put("r_min", sc.r_min);
  s.put("r_max", sc.r_max);
  s.put("snr_db", sc.snr_db);
  s.put("pt", sc.pt);
  s.put("geometry", sc.geometry == ArrayKind::UPA ? "upa" : "ula");
  s.put("upa_my", sc.upa_my);
  s.put("upa_mz", sc.upa_mz);
  s.put("seed", sc.seed);
  s.put("n_train", ds.train.H.size());
  s.put("n_val", ds.val.H.size());
  s.put("n_test", ds.test.H.size());
  s.end_header();
  write_batch(s, ds.train);
  write_batch(s, ds.val);
  write_batch(s, ds.test);
}

DatasetTriple load_dataset(const std::string& path) {
  Deserializer d(path, "xlbeam-dataset v1");
  ScenarioConfig sc;
  sc.M = d.get_u64("M");
  sc.K = d.get_u64("K");
  sc.N_RF = d.get_u64("N_RF");
  sc.L = d.get_u64("L");
  sc.carrier_hz = d.get_double("carrier_hz");
  sc.r_min = d.get_double("r_min");
  sc.r_max = d.get_double("r_max");
  sc.snr_db = d.get_double("snr_db");
  sc.pt = d.get_double("pt");
  sc.geometry = d.get_string("geometry") == "upa" ? ArrayKind::UPA
                                                  : ArrayKind::ULA;
  sc.upa_my = d.get_u64("upa_my");
  sc.upa_mz = d.get_u64("upa_mz");
  sc.seed = d.get_u64("seed");
  const std::size_t n_train = d.get_u64("n_train");
  const std::size_t n_val = d.get_u64("n_val");
  const std::size_t n_test = d.get_u64("n_test");
  d.end_header();
  DatasetTriple ds;
  ds.train = read_batch(d, sc, "train", n_train);
  ds.val = read_batch(d, sc, "val", n_val);
  ds.test = read_batch(d, sc, "test", n_test);
  return ds;
}

}  // namespace xlbeam
