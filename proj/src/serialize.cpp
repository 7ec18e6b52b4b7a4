#include "xlbeam/serialize.hpp"

#include <bit>
#include <cstring>
#include <sstream>

namespace xlbeam {
namespace {

// Portable little-endian double IO.
void store_le(double d, unsigned char out[8]) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i)
    out[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
}

double load_le(const unsigned char in[8]) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Serializer::Serializer(const std::string& path, const std::string& magic)
    : out_(path, std::ios::binary) {
  if (!out_) throw NumericError("serialize: cannot open " + path);
  out_ << magic << "\n";
}

Serializer::~Serializer() = default;

void Serializer::put(const std::string& key, const std::string& value) {
  if (header_done_) throw ContractError("serialize: header already closed");
  out_ << key << " " << value << "\n";
}

void Serializer::put(const std::string& key, double value) {
  put(key, format_double(value));
}

void Serializer::put(const std::string& key, std::uint64_t value) {
  put(key, std::to_string(value));
}

void Serializer::end_header() {
  out_ << "end-header\n";
  header_done_ = true;
}

void Serializer::write_doubles(const std::vector<double>& v) {
  write_doubles(v.data(), v.size());
}

void Serializer::write_doubles(const double* v, std::size_t n) {
  std::vector<unsigned char> buf(n * 8);
  for (std::size_t i = 0; i < n; ++i) store_le(v[i], buf.data() + 8 * i);
  out_.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size()));
}

void Serializer::write_complex(const cdouble* v, std::size_t n) {
  std::vector<unsigned char> buf(n * 16);
  for (std::size_t i = 0; i < n; ++i) {
    store_le(v[i].real(), buf.data() + 16 * i);
    store_le(v[i].imag(), buf.data() + 16 * i + 8);
  }
  out_.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size()));
}

Deserializer::Deserializer(const std::string& path, const std::string& magic)
    : in_(path, std::ios::binary) {
  if (!in_) throw NumericError("deserialize: cannot open " + path);
  std::string line;
  if (!std::getline(in_, line) || line != magic)
    throw NumericError("deserialize: bad magic in " + path + " (got '" +
                       line + "')");
  while (std::getline(in_, line)) {
    if (line == "end-header") return;
    const auto sp = line.find(' ');
    if (sp == std::string::npos)
      throw NumericError("deserialize: malformed manifest line '" + line + "'");
    std::string key = line.substr(0, sp);
    std::string value = line.substr(sp + 1);
    lines_.emplace_back(key, value);
    kv_[key] = value;
  }
  throw NumericError("deserialize: missing end-header in " + path);
}

bool Deserializer::has(const std::string& key) const { return kv_.count(key); }

std::string Deserializer::get_string(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end())
    throw NumericError("deserialize: missing manifest key '" + key + "'");
  return it->second;
}

double Deserializer::get_double(const std::string& key) const {
  return std::stod(get_string(key));
}

std::uint64_t Deserializer::get_u64(const std::string& key) const {
  return std::stoull(get_string(key));
}

void Deserializer::end_header() {}

std::vector<double> Deserializer::read_doubles(std::size_t n) {
  std::vector<unsigned char> buf(n * 8);
  in_.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in_.gcount()) != buf.size())
    throw NumericError("deserialize: truncated payload");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = load_le(buf.data() + 8 * i);
  return out;
}

void Deserializer::read_complex(cdouble* v, std::size_t n) {
  std::vector<unsigned char> buf(n * 16);
  in_.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in_.gcount()) != buf.size())
    throw NumericError("deserialize: truncated payload");
  for (std::size_t i = 0; i < n; ++i)
    v[i] = cdouble{load_le(buf.data() + 16 * i),
                   load_le(buf.data() + 16 * i + 8)};
}

std::string base64_encode(const unsigned char* data, std::size_t n) {
  static const char* tab =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16;
    if (i + 1 < n) v |= static_cast<std::uint32_t>(data[i + 1]) << 8;
    if (i + 2 < n) v |= data[i + 2];
    out.push_back(tab[(v >> 18) & 63]);
    out.push_back(tab[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? tab[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? tab[v & 63] : '=');
  }
  return out;
}

}  // namespace xlbeam
