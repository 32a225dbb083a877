#include "statpupil/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <boost/crc.hpp>

#include "statpupil/error.hpp"

namespace spup {

std::uint64_t checksum(std::span<const std::uint8_t> bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ull, 0xFFFFFFFFFFFFFFFFull, 0xFFFFFFFFFFFFFFFFull, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
  void i16(std::int16_t v) { le(static_cast<std::uint16_t>(v), 2); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const char* p, std::size_t n) { bytes.insert(bytes.end(), p, p + n); }

  std::vector<std::uint8_t> bytes;

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(le(4))); }
  std::int16_t i16() { return static_cast<std::int16_t>(static_cast<std::uint16_t>(le(2))); }
  std::uint64_t u64() { return le(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(le(8)); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  /// Bounds a declared element count by the bytes left, so corrupt counts
  /// cannot trigger huge allocations.
  std::uint32_t count(std::size_t min_element_size) {
    const std::uint32_t n = u32();
    if (static_cast<std::uint64_t>(n) * min_element_size > remaining()) {
      throw InvariantError("table count exceeds file size");
    }
    return n;
  }

 private:
  std::uint64_t le(int n) {
    if (remaining() < static_cast<std::size_t>(n)) throw InvariantError("model tables end prematurely");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kHeaderSize = 8;    // magic + version
constexpr std::size_t kTrailerSize = 8;   // checksum
constexpr std::size_t kEntrySize = 4 + 5 * 8 + 8 * 8 + 8 * 4 + 8 + 8;
constexpr std::size_t kPrototypeSize = 8 * 4 + 8;

}  // namespace

std::vector<std::uint8_t> serialize(const PupilModel& model) {
  Writer w;
  w.raw(kModelMagic, sizeof(kModelMagic));
  w.u32(kModelVersion);

  const ModelConfig& c = model.config;
  w.u32(c.downscale_factor);
  w.u32(c.radial_step);
  w.u32(c.rounding_rule);
  w.u32(c.frame_width);
  w.u32(c.frame_height);
  w.u32(c.min_valid);

  // std::map iteration is already sorted by (y, x) and (y, x, id).
  w.i64(model.shapes.total_count);
  w.u32(static_cast<std::uint32_t>(model.shapes.entries.size()));
  for (const auto& [pos, list] : model.shapes.entries) {
    w.i32(pos.x);
    w.i32(pos.y);
    w.u32(static_cast<std::uint32_t>(list.size()));
    for (const ShapeEntry& e : list) {
      w.u32(static_cast<std::uint32_t>(e.id));
      w.f64(e.ellipse.cx);
      w.f64(e.ellipse.cy);
      w.f64(e.ellipse.a);
      w.f64(e.ellipse.b);
      w.f64(e.ellipse.theta);
      for (const Point& p : e.landmarks.points) {
        w.i32(p.x);
        w.i32(p.y);
      }
      for (const Normal& n : e.landmarks.normals) {
        w.i16(n.x);
        w.i16(n.y);
      }
      w.f64(e.probability);
      w.i64(e.count);
    }
  }

  w.u32(static_cast<std::uint32_t>(model.diffsets.size()));
  for (const auto& [key, protos] : model.diffsets) {
    w.i32(key.position.x);
    w.i32(key.position.y);
    w.u32(static_cast<std::uint32_t>(key.id));
    w.u32(static_cast<std::uint32_t>(protos.size()));
    for (const DifferenceSet& d : protos) {
      for (std::int32_t v : d.values) w.i32(v);
      w.i64(d.members);
    }
  }

  w.u32(static_cast<std::uint32_t>(model.weights.size()));
  for (const auto& [key, vectors] : model.weights) {
    w.i32(key.position.x);
    w.i32(key.position.y);
    w.u32(static_cast<std::uint32_t>(key.id));
    w.u32(static_cast<std::uint32_t>(vectors.size()));
    for (const WeightVector& v : vectors) {
      for (double x : v) w.f64(x);
    }
  }

  w.u64(checksum(w.bytes));
  return std::move(w.bytes);
}

PupilModel deserialize(std::span<const std::uint8_t> bytes) {
  const std::size_t magic_len = std::min(bytes.size(), sizeof(kModelMagic));
  if (bytes.empty() || std::memcmp(bytes.data(), kModelMagic, magic_len) != 0) {
    throw BadMagicError("not a model file (bad magic)");
  }
  if (bytes.size() < kHeaderSize + kTrailerSize) throw ChecksumError("model file truncated");

  Reader head(bytes.subspan(sizeof(kModelMagic), 4));
  const std::uint32_t version = head.u32();
  if (version != kModelVersion) {
    throw UnsupportedVersionError("unsupported model version " + std::to_string(version) + " (expected " +
                                  std::to_string(kModelVersion) + ")");
  }

  const auto body = bytes.first(bytes.size() - kTrailerSize);
  Reader tail(bytes.last(kTrailerSize));
  if (tail.u64() != checksum(body)) throw ChecksumError("model checksum mismatch (corrupt or truncated file)");

  Reader r(body.subspan(kHeaderSize));
  PupilModel m;
  m.config.downscale_factor = r.u32();
  m.config.radial_step = r.u32();
  m.config.rounding_rule = r.u32();
  m.config.frame_width = r.u32();
  m.config.frame_height = r.u32();
  m.config.min_valid = r.u32();

  m.shapes.total_count = r.i64();
  const std::uint32_t positions = r.count(12);
  for (std::uint32_t i = 0; i < positions; ++i) {
    Position pos;
    pos.x = r.i32();
    pos.y = r.i32();
    const std::uint32_t n = r.count(kEntrySize);
    std::vector<ShapeEntry> list(n);
    for (ShapeEntry& e : list) {
      e.id = static_cast<int>(r.u32());
      e.ellipse.cx = r.f64();
      e.ellipse.cy = r.f64();
      e.ellipse.a = r.f64();
      e.ellipse.b = r.f64();
      e.ellipse.theta = r.f64();
      for (Point& p : e.landmarks.points) {
        p.x = r.i32();
        p.y = r.i32();
      }
      for (Normal& nm : e.landmarks.normals) {
        nm.x = r.i16();
        nm.y = r.i16();
      }
      e.probability = r.f64();
      e.count = r.i64();
    }
    if (!m.shapes.entries.emplace(pos, std::move(list)).second) throw InvariantError("duplicate search position");
  }

  const std::uint32_t ds_keys = r.count(16);
  for (std::uint32_t i = 0; i < ds_keys; ++i) {
    EntryKey key;
    key.position.x = r.i32();
    key.position.y = r.i32();
    key.id = static_cast<int>(r.u32());
    const std::uint32_t n = r.count(kPrototypeSize);
    std::vector<DifferenceSet> protos(n);
    for (DifferenceSet& d : protos) {
      for (std::int32_t& v : d.values) v = r.i32();
      d.members = r.i64();
    }
    if (!m.diffsets.emplace(key, std::move(protos)).second) throw InvariantError("duplicate difference-set key");
  }

  const std::uint32_t w_keys = r.count(16);
  for (std::uint32_t i = 0; i < w_keys; ++i) {
    EntryKey key;
    key.position.x = r.i32();
    key.position.y = r.i32();
    key.id = static_cast<int>(r.u32());
    const std::uint32_t n = r.count(8 * 8);
    std::vector<WeightVector> vectors(n);
    for (WeightVector& v : vectors) {
      for (double& x : v) x = r.f64();
    }
    if (!m.weights.emplace(key, std::move(vectors)).second) throw InvariantError("duplicate weight key");
  }
  if (r.remaining() != 0) throw InvariantError("trailing bytes after weight table");

  validate(m);
  return m;
}

void save(const PupilModel& model, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

PupilModel load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const BadMagicError& e) {
    throw BadMagicError(path.string() + ": " + e.what());
  } catch (const UnsupportedVersionError& e) {
    throw UnsupportedVersionError(path.string() + ": " + e.what());
  } catch (const ChecksumError& e) {
    throw ChecksumError(path.string() + ": " + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError(path.string() + ": " + e.what());
  }
}

}  // namespace spup
