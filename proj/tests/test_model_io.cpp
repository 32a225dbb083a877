#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "statpupil/error.hpp"
#include "statpupil/model_io.hpp"
#include "support.hpp"

namespace spup {
namespace {

namespace fs = std::filesystem;
using Bytes = std::vector<std::uint8_t>;

/// Rewrites the trailing checksum so the body passes the integrity check.
void reseal(Bytes& b) {
  const std::uint64_t c = checksum(std::span(b).first(b.size() - 8));
  for (int i = 0; i < 8; ++i) b[b.size() - 8 + i] = static_cast<std::uint8_t>(c >> (8 * i));
}

PupilModel small_model() {
  return testing::make_model({{{96.2, 72.4, 15, 13, 0.3}, 3, {DiffValues{-500, -480, -470, -510, -490, -500, -505, -495},
                                                               DiffValues{-20, -10, 0, 5, 10, -3, -7, 1}}},
                              {{96.1, 72.3, 9, 8, 1.0}, 1},
                              {{40.0, 30.0, 12, 12, 0}, 2}});
}

TEST(Checksum, Crc64XzCheckValue) {
  const char* msg = "123456789";
  EXPECT_EQ(checksum({reinterpret_cast<const std::uint8_t*>(msg), 9}), 0x995DC9BBDF1939FAull);
  EXPECT_EQ(checksum({}), 0u);
}

TEST(ModelIo, RoundTrip) {
  const PupilModel m = small_model();
  ASSERT_NO_THROW(validate(m));
  EXPECT_EQ(deserialize(serialize(m)), m);
  const PupilModel& trained = testing::shared_model();
  EXPECT_EQ(deserialize(serialize(trained)), trained);
}

TEST(ModelIo, HeaderLayout) {
  const Bytes b = serialize(small_model());
  ASSERT_GE(b.size(), 40u);
  EXPECT_EQ(std::memcmp(b.data(), "SPUP", 4), 0);
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5] | b[6] | b[7], 0);
  EXPECT_EQ(b[8], 2);  // downscale factor, little-endian
  EXPECT_EQ(b[12], 1);  // radial step
  EXPECT_EQ(b[20] | (b[21] << 8), 192);
  EXPECT_EQ(b[24] | (b[25] << 8), 144);
}

TEST(ModelIo, BytesAreDeterministicAndIdempotent) {
  const Bytes a = serialize(testing::shared_model());
  EXPECT_EQ(serialize(testing::shared_model()), a);
  EXPECT_EQ(serialize(deserialize(a)), a);
}

TEST(ModelIo, TruncationIsChecksumError) {
  const Bytes b = serialize(small_model());
  for (std::size_t n : {b.size() - 1, b.size() - 8, std::size_t{40}, std::size_t{15}, std::size_t{4}}) {
    EXPECT_THROW(deserialize(std::span(b).first(n)), ChecksumError) << n;
  }
}

TEST(ModelIo, FlippedByteIsChecksumError) {
  Bytes b = serialize(small_model());
  for (std::size_t i = 8; i < b.size(); i += 7) {
    Bytes c = b;
    c[i] ^= 0x10;
    EXPECT_THROW(deserialize(c), ChecksumError) << i;
  }
}

TEST(ModelIo, VersionAndMagic) {
  Bytes b = serialize(small_model());
  Bytes v = b;
  v[4] = 2;
  EXPECT_THROW(deserialize(v), UnsupportedVersionError);
  Bytes m = b;
  m[0] = 'X';
  EXPECT_THROW(deserialize(m), BadMagicError);
  EXPECT_THROW(deserialize(Bytes{}), BadMagicError);
  EXPECT_THROW(deserialize(Bytes{'P', 'N', 'G'}), BadMagicError);
}

TEST(ModelIo, ValidChecksumBrokenInvariants) {
  PupilModel m = small_model();
  m.weights.begin()->second[0][0] += 0.5;
  EXPECT_THROW(deserialize(serialize(m)), InvariantError);

  m = small_model();
  m.shapes.total_count += 1;
  EXPECT_THROW(deserialize(serialize(m)), InvariantError);

  m = small_model();
  m.diffsets.begin()->second.clear();
  EXPECT_THROW(deserialize(serialize(m)), InvariantError);

  m = small_model();
  m.config.downscale_factor = 0;
  EXPECT_THROW(deserialize(serialize(m)), InvariantError);

  Bytes b = serialize(small_model());
  b.insert(b.end() - 8, 0);
  reseal(b);
  EXPECT_THROW(deserialize(b), InvariantError);
}

TEST(ModelIo, FuzzedFilesFailCleanly) {
  const Bytes base = serialize(small_model());
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<std::size_t> pos(0, base.size() - 1);
  std::uniform_int_distribution<int> byte(0, 255);
  int accepted = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    Bytes b = base;
    const int edits = 1 + trial % 4;
    for (int e = 0; e < edits; ++e) b[pos(rng)] = static_cast<std::uint8_t>(byte(rng));
    if (trial % 3 == 0) b.resize(pos(rng));
    if (trial % 2 == 0 && b.size() >= 16) reseal(b);
    try {
      const PupilModel m = deserialize(b);
      EXPECT_NO_THROW(validate(m));
      ++accepted;
    } catch (const ModelFormatError&) {
    }
  }
  EXPECT_LT(accepted, 3000);
}

TEST(ModelIo, SaveLoadFiles) {
  const fs::path dir = fs::temp_directory_path() / "statpupil_model_io_test";
  fs::create_directories(dir);
  const PupilModel m = small_model();
  save(m, dir / "m.spup");
  EXPECT_EQ(load(dir / "m.spup"), m);
  EXPECT_THROW(load(dir / "absent.spup"), IoError);
  EXPECT_THROW(save(m, dir / "no" / "such" / "dir.spup"), IoError);
  std::ofstream(dir / "empty.spup").close();
  EXPECT_THROW(load(dir / "empty.spup"), BadMagicError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace spup
