#include "nilmformer/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "nilmformer/manifest.hpp"

namespace nilmformer {

namespace {

constexpr char kMagic[8] = {'N', 'I', 'L', 'M', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

class Fnv1a64 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ull;
    }
  }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    hash_.update(data, n);
  }
  void u32(std::uint32_t v) { little(v); }
  void u64(std::uint64_t v) { little(v); }
  void f64(double v) { little(std::bit_cast<std::uint64_t>(v)); }
  std::uint64_t digest() const { return hash_.digest(); }

 private:
  template <typename T>
  void little(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    bytes(buf, sizeof(T));
  }

  std::ofstream& out_;
  Fnv1a64 hash_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::string& path) : in_(in), path_(path) {}

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in_) throw DataError("checkpoint '" + path_ + "': truncated file");
    hash_.update(data, n);
  }
  std::uint32_t u32() { return little<std::uint32_t>(); }
  std::uint64_t u64() { return little<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(little<std::uint64_t>()); }
  std::uint64_t digest() const { return hash_.digest(); }

  std::uint64_t raw_u64() {  // read without hashing (the trailing checksum)
    unsigned char buf[8];
    in_.read(reinterpret_cast<char*>(buf), 8);
    if (!in_) throw DataError("checkpoint '" + path_ + "': missing checksum");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }

 private:
  template <typename T>
  T little() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(buf[i]) << (8 * i);
    }
    return v;
  }

  std::ifstream& in_;
  std::string path_;
  Fnv1a64 hash_;
};

}  // namespace

void save_checkpoint(const std::string& path, const NilmModel& model,
                     const ApplianceSpec& spec, const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  Writer w(out);
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);

  nlohmann::json header{{"model", to_json(model.config())},
                        {"appliance", to_json(spec)},
                        {"extra", extra}};
  const std::string header_str = header.dump();
  w.u64(header_str.size());
  w.bytes(header_str.data(), header_str.size());

  const auto params = model.named_parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u64(static_cast<std::uint64_t>(tensor.rows()));
    w.u64(static_cast<std::uint64_t>(tensor.cols()));
    const Matrix& v = tensor.value();
    for (Index i = 0; i < v.rows(); ++i) {
      for (Index j = 0; j < v.cols(); ++j) w.f64(v(i, j));
    }
  }
  const std::uint64_t digest = w.digest();
  unsigned char buf[8];
  for (std::size_t i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(digest >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
  if (!out) throw IoError("write to '" + path + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  Reader r(in, path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint '" + path + "': bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError("checkpoint '" + path + "': unsupported version " +
                    std::to_string(version));
  }
  const std::uint64_t header_len = r.u64();
  std::string header_str(header_len, '\0');
  r.bytes(header_str.data(), header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("checkpoint '" + path + "': bad config block: " + e.what());
  }

  ModelConfig cfg = model_config_from_json(header.at("model"));
  ApplianceSpec spec = appliance_from_json(header.at("appliance"));
  RngStream scratch(0);
  LoadedCheckpoint loaded{NilmModel(cfg, scratch), spec, header.value("extra", nlohmann::json{})};

  auto params = loaded.model.named_parameters();
  const std::uint32_t n = r.u32();
  if (n != params.size()) {
    throw DataError("checkpoint '" + path + "': has " + std::to_string(n) +
                    " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& [name, tensor] : params) {
    const std::uint32_t name_len = r.u32();
    std::string got_name(name_len, '\0');
    r.bytes(got_name.data(), name_len);
    if (got_name != name) {
      throw DataError("checkpoint '" + path + "': tensor '" + got_name +
                      "' where '" + name + "' was expected");
    }
    const auto rows = static_cast<Index>(r.u64());
    const auto cols = static_cast<Index>(r.u64());
    if (rows != tensor.rows() || cols != tensor.cols()) {
      throw DataError("checkpoint '" + path + "': tensor '" + name + "' has shape [" +
                      std::to_string(rows) + " x " + std::to_string(cols) + "], expected [" +
                      std::to_string(tensor.rows()) + " x " + std::to_string(tensor.cols()) +
                      "]");
    }
    Matrix& v = tensor.mutable_value();
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) v(i, j) = r.f64();
    }
  }
  const std::uint64_t expected = r.digest();
  const std::uint64_t stored = r.raw_u64();
  if (stored != expected) {
    throw DataError("checkpoint '" + path + "': checksum mismatch");
  }
  return loaded;
}

}  // namespace nilmformer
