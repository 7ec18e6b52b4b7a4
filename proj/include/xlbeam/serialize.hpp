#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "xlbeam/common.hpp"

namespace xlbeam {

/// Writer for the project's container format: a line-oriented text manifest
/// ("key value" pairs, terminated by "end-header"), followed by flat
/// little-endian double payloads. Complex arrays interleave (re, im).
class Serializer {
 public:
  Serializer(const std::string& path, const std::string& magic);
  ~Serializer();

  void put(const std::string& key, const std::string& value);
  void put(const std::string& key, double value);
  void put(const std::string& key, std::uint64_t value);
  void end_header();

  void write_doubles(const std::vector<double>& v);
  void write_doubles(const double* v, std::size_t n);
  void write_complex(const cdouble* v, std::size_t n);

 private:
  std::ofstream out_;
  bool header_done_ = false;
};

class Deserializer {
 public:
  Deserializer(const std::string& path, const std::string& magic);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  /// Manifest lines in file order (for per-parameter records).
  const std::vector<std::pair<std::string, std::string>>& lines() const {
    return lines_;
  }
  void end_header();  // positions the stream at the binary payload

  std::vector<double> read_doubles(std::size_t n);
  void read_complex(cdouble* v, std::size_t n);

 private:
  std::ifstream in_;
  std::vector<std::pair<std::string, std::string>> lines_;
  std::map<std::string, std::string> kv_;
};

std::string base64_encode(const unsigned char* data, std::size_t n);

}  // namespace xlbeam
