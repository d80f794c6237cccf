#include "quadswarm/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "quadswarm/common.hpp"

namespace quadswarm {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE) {
    throw UsageError("configuration key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double value) {
  // Shortest text that parses back to the same double.
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    if (cfg.has(key)) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open configuration file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

const std::string* KeyValueConfig::lookup(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  // Explicit values are rewritten in canonical form so that equal settings
  // serialize, and hash, identically.
  if (const auto* v = lookup(key)) {
    const double x = parse_double(key, *v);
    put_double(key, x);
    return x;
  }
  put_double(key, fallback);
  consumed_.insert(key);
  return fallback;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) {
  if (const auto* v = lookup(key)) {
    errno = 0;
    char* end = nullptr;
    const long long x = std::strtoll(v->c_str(), &end, 10);
    if (v->empty() || end != v->c_str() + v->size() || errno == ERANGE) {
      throw UsageError("configuration key '" + key + "': expected an integer, got '" + *v + "'");
    }
    put_int(key, x);
    return x;
  }
  put_int(key, fallback);
  consumed_.insert(key);
  return fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  if (const auto* v = lookup(key)) {
    if (*v == "true" || *v == "1" || *v == "yes") {
      put_bool(key, true);
      return true;
    }
    if (*v == "false" || *v == "0" || *v == "no") {
      put_bool(key, false);
      return false;
    }
    throw UsageError("configuration key '" + key + "': expected true/false, got '" + *v + "'");
  }
  put_bool(key, fallback);
  consumed_.insert(key);
  return fallback;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
  if (const auto* v = lookup(key)) return *v;
  set(key, fallback);
  consumed_.insert(key);
  return fallback;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                const std::vector<double>& fallback) {
  if (const auto* v = lookup(key)) {
    std::vector<double> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(parse_double(key, item));
    }
    put_doubles(key, out);
    return out;
  }
  put_doubles(key, fallback);
  consumed_.insert(key);
  return fallback;
}

void KeyValueConfig::put_double(const std::string& key, double value) {
  set(key, format_double(value));
}

void KeyValueConfig::put_int(const std::string& key, long long value) {
  set(key, std::to_string(value));
}

void KeyValueConfig::put_bool(const std::string& key, bool value) {
  set(key, value ? "true" : "false");
}

void KeyValueConfig::put_doubles(const std::string& key, const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ", ";
    s += format_double(values[i]);
  }
  set(key, s);
}

void KeyValueConfig::reject_unconsumed() const {
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) throw UsageError("unknown configuration key '" + key + "'");
  }
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

std::uint64_t KeyValueConfig::hash() const { return fnv1a64(serialize()); }

}  // namespace quadswarm
