#include "restorekit/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>

#include "restorekit/error.hpp"

namespace restorekit {

namespace {

constexpr char kMagic[8] = {'R', 'K', 'C', 'K', 'P', 'T', '\r', '\n'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw CheckpointError(std::string("truncated checkpoint while reading ") + what + " (need " +
                            std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                            ", have " + std::to_string(bytes_.size() - pos_) + ")");
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const nn::ParameterSet& params, nlohmann::json header) {
  header["schema_version"] = kCheckpointSchemaVersion;
  std::string out(kMagic, sizeof(kMagic));
  const std::string text = header.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put_u32(out, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& p : params.items()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    const nn::Shape s = p.var->value.shape();
    put_u32(out, 4);
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.var->value.values()) {
      const float f = static_cast<float>(v);
      if (static_cast<double>(f) != v) {
        throw CheckpointError("parameter " + p.name + " holds a value not representable as float32");
      }
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  put_u32(out, crc_of(out));
  return out;
}

CheckpointData decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic), "magic") != std::string_view(kMagic, sizeof(kMagic))) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const std::uint32_t header_len = r.u32("header length");
  const std::string_view header_text = r.take(header_len, "header");

  CheckpointData data;
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("tensor name length");
    std::string name(r.take(name_len, "tensor name"));
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank != 4) throw CheckpointError("tensor " + name + " has unsupported rank " + std::to_string(rank));
    int dims[4];
    for (int& d : dims) d = static_cast<int>(r.u32("tensor dims"));
    nn::Tensor t({dims[0], dims[1], dims[2], dims[3]});
    const std::string_view raw = r.take(t.numel() * 4, "tensor payload");
    for (std::size_t k = 0; k < t.numel(); ++k) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * k + b])) << (8 * b);
      t.values()[k] = static_cast<double>(std::bit_cast<float>(u));
    }
    data.params.add(std::move(name), std::move(t));
  }
  const std::size_t body_end = r.pos();
  const std::uint32_t stored = r.u32("checksum");
  if (r.pos() != bytes.size()) {
    throw CheckpointError("trailing bytes after checksum (" + std::to_string(bytes.size() - r.pos()) + ")");
  }
  const std::uint32_t actual = crc_of(bytes.substr(0, body_end));
  if (stored != actual) {
    throw CheckpointError("checksum mismatch: stored " + std::to_string(stored) + ", computed " +
                          std::to_string(actual) + " (file corrupted)");
  }
  try {
    data.header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  const int version = data.header.value("schema_version", -1);
  if (version != kCheckpointSchemaVersion) {
    throw CheckpointError("unsupported checkpoint schema version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointSchemaVersion) + ")");
  }
  return data;
}

}  // namespace restorekit
