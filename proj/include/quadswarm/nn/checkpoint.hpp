#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "quadswarm/common.hpp"

namespace quadswarm::nn {

/// Versioned binary container of named float64 arrays plus the run
/// configuration that produced them. Layout is documented in docs/formats.md.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct Array {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> data;  // row-major
  };

  std::string config_text;
  std::uint64_t config_hash = 0;
  std::vector<Array> arrays;

  void put(const std::string& name, const MatX& value);
  void put_scalar(const std::string& name, double value);
  bool has(const std::string& name) const;
  /// Throws std::runtime_error when the array is absent.
  MatX get(const std::string& name) const;
  double get_scalar(const std::string& name) const;

  void save(const std::string& path) const;
  /// Rejects bad magic, unknown versions, truncation, trailer-hash mismatch
  /// and a config hash that does not match the embedded config text.
  static Checkpoint load(const std::string& path);
};

}  // namespace quadswarm::nn
