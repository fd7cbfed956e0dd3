#include "skinforge/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <string>

#include "skinforge/error.hpp"
#include "skinforge/image_io.hpp"

namespace skinforge {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kWeightsMagic[8] = {'S', 'K', 'F', 'G', 'G', 'E', 'N', '\0'};
constexpr char kLatentMagic[8] = {'S', 'K', 'F', 'G', 'L', 'A', 'T', '\0'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + size);
  }
  std::vector<std::uint8_t> finish() {
    const std::uint32_t crc = static_cast<std::uint32_t>(::crc32(0L, bytes_.data(), static_cast<uInt>(bytes_.size())));
    put(crc);
    return std::move(bytes_);
  }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t size) {
    if (size > bytes_.size() - pos_) throw ChecksumError("file ends inside a record");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += size;
    return p;
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Checks magic and version, then the trailing CRC. Returns the payload
// between the version field and the checksum.
std::span<const std::uint8_t> open_container(std::span<const std::uint8_t> bytes, const char (&magic)[8],
                                             std::uint32_t version, const char* what) {
  if (bytes.size() < 8 && std::memcmp(bytes.data(), magic, bytes.size()) == 0) {
    throw ChecksumError(std::string(what) + " file is truncated");
  }
  if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 8) != 0) {
    throw VersionMismatch(std::string("not a ") + what + " file (bad magic bytes)");
  }
  if (bytes.size() < 12) throw ChecksumError(std::string(what) + " file is truncated");
  std::uint32_t file_version;
  std::memcpy(&file_version, bytes.data() + 8, 4);
  if (file_version != version) {
    throw VersionMismatch(std::string(what) + " format version " + std::to_string(file_version) +
                          " is not supported (expected " + std::to_string(version) + ")");
  }
  if (bytes.size() < 16) throw ChecksumError(std::string(what) + " file is truncated");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  const auto actual = static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(body)));
  if (stored != actual) throw ChecksumError(std::string(what) + " checksum mismatch (corrupt or truncated file)");
  return bytes.subspan(12, body - 12);
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const GeneratorWeights& weights) {
  Writer out;
  out.put_bytes(kWeightsMagic, 8);
  out.put<std::uint32_t>(kCheckpointVersion);
  const GeneratorConfig& cfg = weights.config();
  out.put<std::uint32_t>(kLatentDim);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.mapping_depth));
  out.put<std::uint32_t>(kLevelCount);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.channels_4));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.channels_8));

  const auto& tensors = weights.layout().tensors;
  out.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const TensorSlot& t : tensors) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    out.put_bytes(t.name.data(), t.name.size());
    out.put<std::uint64_t>(t.size);
    out.put_bytes(weights.params().data() + t.offset, t.size * sizeof(float));
  }

  const auto& avg = weights.cached_average();
  out.put<std::uint8_t>(avg ? 1 : 0);
  if (avg) out.put_bytes(avg->values().data(), kWPlusSize * sizeof(double));
  return out.finish();
}

GeneratorWeights deserialize_weights(std::span<const std::uint8_t> bytes) {
  Reader in(open_container(bytes, kWeightsMagic, kCheckpointVersion, "generator checkpoint"));
  const auto latent_dim = in.get<std::uint32_t>();
  GeneratorConfig cfg;
  cfg.mapping_depth = static_cast<int>(in.get<std::uint32_t>());
  const auto level_count = in.get<std::uint32_t>();
  cfg.channels_4 = static_cast<int>(in.get<std::uint32_t>());
  cfg.channels_8 = static_cast<int>(in.get<std::uint32_t>());
  if (latent_dim != static_cast<std::uint32_t>(kLatentDim) || level_count != static_cast<std::uint32_t>(kLevelCount)) {
    throw ShapeMismatch("checkpoint has latent_dim " + std::to_string(latent_dim) + " and " +
                        std::to_string(level_count) + " levels; expected 512 and 2");
  }
  const GeneratorLayout layout(cfg);
  const auto count = in.get<std::uint32_t>();
  if (count != layout.tensors.size()) throw ShapeMismatch("checkpoint tensor count does not match its metadata");

  std::vector<float> params(layout.total);
  for (const TensorSlot& slot : layout.tensors) {
    const auto name_len = in.get<std::uint32_t>();
    const std::string name(reinterpret_cast<const char*>(in.take(name_len)), name_len);
    const auto size = in.get<std::uint64_t>();
    if (name != slot.name || size != slot.size) {
      throw ShapeMismatch("checkpoint tensor '" + name + "' does not match expected '" + slot.name + "'");
    }
    std::memcpy(params.data() + slot.offset, in.take(size * sizeof(float)), size * sizeof(float));
  }

  GeneratorWeights weights(cfg, std::move(params));
  if (in.get<std::uint8_t>() != 0) {
    std::vector<double> avg(kWPlusSize);
    std::memcpy(avg.data(), in.take(kWPlusSize * sizeof(double)), kWPlusSize * sizeof(double));
    weights.set_cached_average(LatentWPlus(std::move(avg)));
  }
  if (!in.at_end()) throw ShapeMismatch("trailing bytes after checkpoint payload");
  return weights;
}

void save_weights(const GeneratorWeights& weights, const std::filesystem::path& path) {
  write_file(path, serialize_weights(weights));
}

GeneratorWeights load_weights(const std::filesystem::path& path) { return deserialize_weights(read_file(path)); }

std::vector<std::uint8_t> serialize_latent(const LatentWPlus& latent) {
  Writer out;
  out.put_bytes(kLatentMagic, 8);
  out.put<std::uint32_t>(kLatentFileVersion);
  out.put<std::uint32_t>(kLevelCount);
  out.put<std::uint32_t>(kLatentDim);
  out.put_bytes(latent.values().data(), kWPlusSize * sizeof(double));
  return out.finish();
}

LatentWPlus deserialize_latent(std::span<const std::uint8_t> bytes) {
  Reader in(open_container(bytes, kLatentMagic, kLatentFileVersion, "latent"));
  const auto rows = in.get<std::uint32_t>();
  const auto dim = in.get<std::uint32_t>();
  if (rows != static_cast<std::uint32_t>(kLevelCount) || dim != static_cast<std::uint32_t>(kLatentDim)) {
    throw ShapeMismatch("latent file holds " + std::to_string(rows) + "x" + std::to_string(dim) + ", expected 2x512");
  }
  std::vector<double> values(kWPlusSize);
  std::memcpy(values.data(), in.take(kWPlusSize * sizeof(double)), kWPlusSize * sizeof(double));
  if (!in.at_end()) throw ShapeMismatch("trailing bytes after latent payload");
  return LatentWPlus(std::move(values));
}

void save_latent(const LatentWPlus& latent, const std::filesystem::path& path) {
  write_file(path, serialize_latent(latent));
}

LatentWPlus load_latent(const std::filesystem::path& path) { return deserialize_latent(read_file(path)); }

}  // namespace skinforge
