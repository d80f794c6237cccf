#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace quadswarm {

/// Flat `key = value` configuration with `#` comments.
///
/// Reads are tracked: every getter marks its key as consumed, and a getter
/// for an absent key records the default it returned. After all components
/// have pulled their settings, `reject_unconsumed()` names any key nobody
/// asked for, and `serialize()` yields the fully resolved configuration
/// (file values, flag overrides and defaults) in canonical sorted order.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::string& path);

  /// Flag-level override; later calls win.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  double get_double(const std::string& key, double fallback);
  long long get_int(const std::string& key, long long fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_string(const std::string& key, const std::string& fallback);
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback);

  void put_double(const std::string& key, double value);
  void put_int(const std::string& key, long long value);
  void put_bool(const std::string& key, bool value);
  void put_string(const std::string& key, const std::string& value) { set(key, value); }
  void put_doubles(const std::string& key, const std::vector<double>& values);

  /// Throws UsageError naming the first key that no component consumed.
  void reject_unconsumed() const;

  /// Canonical text: one `key = value` per line, sorted by key.
  std::string serialize() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  const std::string* lookup(const std::string& key);

  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

std::string format_double(double value);

}  // namespace quadswarm
