#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "statpupil/core.hpp"

namespace spup {

/// Image downscaled by exact s x s block sums. Trailing partial blocks are dropped.
class BlockSumImage {
 public:
  BlockSumImage() = default;

  int width() const { return width_; }
  int height() const { return height_; }
  int factor() const { return factor_; }
  std::int32_t at(int x, int y) const { return sums_[static_cast<std::size_t>(y) * width_ + x]; }
  std::int32_t at(std::int32_t index) const { return sums_[static_cast<std::size_t>(index)]; }
  std::span<const std::int32_t> sums() const { return sums_; }

  bool in_bounds(Point p) const { return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_; }
  std::int32_t index_of(Point p) const { return p.y * width_ + p.x; }

  friend BlockSumImage downscale(const GrayImage& img, int factor);

 private:
  int width_ = 0;
  int height_ = 0;
  int factor_ = 1;
  std::vector<std::int32_t> sums_;
};

BlockSumImage downscale(const GrayImage& img, int factor);

/// Inner/outer block coordinates sampled for one landmark.
struct SamplePair {
  Point inner;
  Point outer;
};

/// Geometry of one Haar pair: the landmark p = center + offset is displaced by
/// radial_step downscaled pixels against and along its normal; each displaced
/// point is mapped to the block that contains it.
SamplePair sample_blocks(Point center, Point offset, Normal normal, int factor, int radial_step);

struct LandmarkDiff {
  std::int32_t value = 0;
  bool valid = false;
};

/// Per-frame memo of block differences keyed on (inner index, outer index).
/// Counts block-sum reads so tests can observe that repeated keys are free.
class DiffCache {
 public:
  DiffCache() = default;

  std::int32_t get(const BlockSumImage& bsi, std::int32_t inner, std::int32_t outer);

  std::size_t size() const { return memo_.size(); }
  std::uint64_t block_reads() const { return block_reads_; }
  void clear() {
    memo_.clear();
    block_reads_ = 0;
  }

 private:
  std::unordered_map<std::uint64_t, std::int32_t> memo_;
  std::uint64_t block_reads_ = 0;
};

LandmarkDiff landmark_diff(const BlockSumImage& bsi, Point center, Point offset, Normal normal,
                           DiffCache& cache, int radial_step = 1);

/// Eight signed landmark differences; invalid entries are zero.
struct DifferenceVector {
  std::array<std::int32_t, kLandmarkCount> values{};
  std::array<bool, kLandmarkCount> valid{};

  int valid_count() const;

  friend bool operator==(const DifferenceVector&, const DifferenceVector&) = default;
};

DifferenceVector extract(const BlockSumImage& bsi, Point center, const LandmarkSet& lms, DiffCache& cache,
                         int radial_step = 1);

}  // namespace spup
