#include "quadswarm/nn/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace quadswarm::nn {

namespace {

constexpr char kMagic[8] = {'Q', 'S', 'W', 'M', 'C', 'K', 'P', 'T'};

static_assert(sizeof(double) == 8, "float64 required");

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* out, std::size_t n) {
    if (n > end_ - pos_) throw std::runtime_error("checkpoint: truncated file");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t position() const { return pos_; }

 private:
  const std::vector<char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, const MatX& value) {
  Array a;
  a.name = name;
  a.shape = {value.rows(), value.cols()};
  a.data.reserve(static_cast<std::size_t>(value.size()));
  for (Eigen::Index r = 0; r < value.rows(); ++r) {
    for (Eigen::Index c = 0; c < value.cols(); ++c) a.data.push_back(value(r, c));
  }
  for (auto& existing : arrays) {
    if (existing.name == name) {
      existing = std::move(a);
      return;
    }
  }
  arrays.push_back(std::move(a));
}

void Checkpoint::put_scalar(const std::string& name, double value) {
  put(name, MatX::Constant(1, 1, value));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

MatX Checkpoint::get(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name != name) continue;
    const Eigen::Index rows = a.shape.empty() ? 1 : a.shape[0];
    const Eigen::Index cols = a.shape.size() < 2 ? 1 : a.shape[1];
    MatX m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a.data[k++];
    }
    return m;
  }
  throw std::runtime_error("checkpoint: missing array '" + name + "'");
}

double Checkpoint::get_scalar(const std::string& name) const { return get(name)(0, 0); }

void Checkpoint::save(const std::string& path) const {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kVersion);
  w.pod<std::uint64_t>(config_hash);
  w.pod<std::uint64_t>(config_text.size());
  w.raw(config_text.data(), config_text.size());
  w.pod<std::uint64_t>(arrays.size());
  for (const auto& a : arrays) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(a.name.size()));
    w.raw(a.name.data(), a.name.size());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.pod<std::int64_t>(d);
    w.raw(a.data.data(), a.data.size() * sizeof(double));
  }
  const std::uint64_t trailer = fnv1a64(w.bytes().data(), w.bytes().size());
  w.pod<std::uint64_t>(trailer);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write '" + tmp + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("checkpoint: cannot move into place '" + path + "'");
  }
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("checkpoint not found: '" + path + "'");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t)) {
    throw std::runtime_error("checkpoint: file too short");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored_trailer;
  std::memcpy(&stored_trailer, bytes.data() + body, sizeof(stored_trailer));
  if (stored_trailer != fnv1a64(bytes.data(), body)) {
    throw std::runtime_error("checkpoint: integrity hash mismatch");
  }

  Reader r(bytes, body);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("checkpoint: bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_hash = r.pod<std::uint64_t>();
  const auto text_len = r.pod<std::uint64_t>();
  if (text_len > body) throw std::runtime_error("checkpoint: truncated file");
  ck.config_text.resize(text_len);
  r.raw(ck.config_text.data(), text_len);
  if (fnv1a64(ck.config_text) != ck.config_hash) {
    throw std::runtime_error("checkpoint: config hash does not match embedded config");
  }
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    Array a;
    const auto name_len = r.pod<std::uint32_t>();
    a.name.resize(name_len);
    r.raw(a.name.data(), name_len);
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 3) throw std::runtime_error("checkpoint: rank above 3");
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.pod<std::int64_t>());
      if (a.shape.back() < 0) throw std::runtime_error("checkpoint: negative dimension");
      numel *= a.shape.back();
    }
    if (static_cast<std::uint64_t>(numel) * sizeof(double) > body - r.position()) {
      throw std::runtime_error("checkpoint: truncated file");
    }
    a.data.resize(static_cast<std::size_t>(numel));
    r.raw(a.data.data(), a.data.size() * sizeof(double));
    ck.arrays.push_back(std::move(a));
  }
  if (r.position() != body) throw std::runtime_error("checkpoint: trailing bytes");
  return ck;
}

}  // namespace quadswarm::nn
