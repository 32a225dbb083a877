#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <vector>

#include "statpupil/core.hpp"

namespace spup {

inline constexpr int kMaxPrototypes = 5;

/// Identifies one reduced ellipse: its search-area position and its id there.
struct EntryKey {
  Position position;
  int id = 0;

  friend bool operator==(const EntryKey&, const EntryKey&) = default;
  friend std::strong_ordering operator<=>(const EntryKey& l, const EntryKey& r) {
    if (auto c = l.position <=> r.position; c != 0) return c;
    return l.id <=> r.id;
  }
};

struct ShapeEntry {
  int id = 0;
  Ellipse ellipse;
  LandmarkSet landmarks;
  double probability = 0.0;
  std::int64_t count = 0;

  friend bool operator==(const ShapeEntry&, const ShapeEntry&) = default;
};

/// Reduced conditional distribution of ellipses over the search area. Entries
/// at one position are stored in id order.
struct ShapeDistribution {
  std::map<Position, std::vector<ShapeEntry>> entries;
  std::int64_t total_count = 0;

  std::size_t entry_count() const;
  const ShapeEntry* find(const EntryKey& key) const;

  friend bool operator==(const ShapeDistribution&, const ShapeDistribution&) = default;
};

using DiffValues = std::array<std::int32_t, kLandmarkCount>;

/// One appearance prototype: eight signed landmark differences.
struct DifferenceSet {
  DiffValues values{};
  std::int64_t members = 0;

  friend bool operator==(const DifferenceSet&, const DifferenceSet&) = default;
};

using DifferenceSets = std::map<EntryKey, std::vector<DifferenceSet>>;

using WeightVector = std::array<double, kLandmarkCount>;

/// Per entry, one weight vector per prototype (same order as DifferenceSets).
using FeatureWeights = std::map<EntryKey, std::vector<WeightVector>>;

inline constexpr std::uint32_t kRoundHalfAwayFromZero = 1;

struct ModelConfig {
  std::uint32_t downscale_factor = 2;
  std::uint32_t radial_step = 1;
  std::uint32_t rounding_rule = kRoundHalfAwayFromZero;
  std::uint32_t frame_width = 192;
  std::uint32_t frame_height = 144;
  std::uint32_t min_valid = 5;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct PupilModel {
  ModelConfig config;
  ShapeDistribution shapes;
  DifferenceSets diffsets;
  FeatureWeights weights;

  friend bool operator==(const PupilModel&, const PupilModel&) = default;
};

/// Throws InvariantError describing the first violated model invariant.
void validate(const PupilModel& model);

}  // namespace spup
