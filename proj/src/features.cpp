#include "statpupil/features.hpp"

#include <string>

#include "statpupil/error.hpp"

namespace spup {

namespace {

// Floor division for a positive divisor.
std::int64_t floor_div(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  if ((num % den != 0) && (num < 0)) --q;
  return q;
}

}  // namespace

BlockSumImage downscale(const GrayImage& img, int factor) {
  if (factor < 1) throw InvalidArgument("downscale factor must be >= 1, got " + std::to_string(factor));
  if (img.width() < factor || img.height() < factor) {
    throw InvalidArgument("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                          " is smaller than one " + std::to_string(factor) + "x" + std::to_string(factor) +
                          " block");
  }
  BlockSumImage out;
  out.factor_ = factor;
  out.width_ = img.width() / factor;
  out.height_ = img.height() / factor;
  out.sums_.assign(static_cast<std::size_t>(out.width_) * out.height_, 0);

  const auto px = img.pixels();
  const std::size_t stride = static_cast<std::size_t>(img.width());
  for (int by = 0; by < out.height_; ++by) {
    std::int32_t* row = out.sums_.data() + static_cast<std::size_t>(by) * out.width_;
    for (int dy = 0; dy < factor; ++dy) {
      const std::uint8_t* src = px.data() + (static_cast<std::size_t>(by) * factor + dy) * stride;
      for (int bx = 0; bx < out.width_; ++bx) {
        std::int32_t acc = 0;
        for (int dx = 0; dx < factor; ++dx) acc += src[bx * factor + dx];
        row[bx] += acc;
      }
    }
  }
  return out;
}

SamplePair sample_blocks(Point center, Point offset, Normal normal, int factor, int radial_step) {
  // Point p (full resolution) shifted by radial_step*factor*n, then divided by
  // factor; done in Q14 integers so the block choice is exact.
  const std::int64_t px = static_cast<std::int64_t>(center.x + offset.x) * kNormalScale;
  const std::int64_t py = static_cast<std::int64_t>(center.y + offset.y) * kNormalScale;
  const std::int64_t sx = static_cast<std::int64_t>(radial_step) * factor * normal.x;
  const std::int64_t sy = static_cast<std::int64_t>(radial_step) * factor * normal.y;
  const std::int64_t den = static_cast<std::int64_t>(factor) * kNormalScale;
  return {
      {static_cast<int>(floor_div(px - sx, den)), static_cast<int>(floor_div(py - sy, den))},
      {static_cast<int>(floor_div(px + sx, den)), static_cast<int>(floor_div(py + sy, den))},
  };
}

std::int32_t DiffCache::get(const BlockSumImage& bsi, std::int32_t inner, std::int32_t outer) {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(inner)) << 32) | static_cast<std::uint32_t>(outer);
  auto [it, inserted] = memo_.try_emplace(key, 0);
  if (inserted) {
    it->second = bsi.at(inner) - bsi.at(outer);
    block_reads_ += 2;
  }
  return it->second;
}

LandmarkDiff landmark_diff(const BlockSumImage& bsi, Point center, Point offset, Normal normal,
                           DiffCache& cache, int radial_step) {
  const SamplePair s = sample_blocks(center, offset, normal, bsi.factor(), radial_step);
  if (!bsi.in_bounds(s.inner) || !bsi.in_bounds(s.outer)) return {};
  return {cache.get(bsi, bsi.index_of(s.inner), bsi.index_of(s.outer)), true};
}

int DifferenceVector::valid_count() const {
  int n = 0;
  for (bool v : valid) n += v ? 1 : 0;
  return n;
}

DifferenceVector extract(const BlockSumImage& bsi, Point center, const LandmarkSet& lms, DiffCache& cache,
                         int radial_step) {
  DifferenceVector out;
  for (int k = 0; k < kLandmarkCount; ++k) {
    const LandmarkDiff d = landmark_diff(bsi, center, lms.points[k], lms.normals[k], cache, radial_step);
    out.values[k] = d.value;
    out.valid[k] = d.valid;
  }
  return out;
}

}  // namespace spup
