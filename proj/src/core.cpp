#include "statpupil/core.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>

#include "statpupil/error.hpp"

namespace spup {

GrayImage::GrayImage(int width, int height, std::uint8_t fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw InvalidArgument("image dimensions must be positive");
  pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw InvalidArgument("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw InvalidArgument("pixel buffer size " + std::to_string(pixels_.size()) +
                          " does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
}

Ellipse canonical(Ellipse e) {
  if (e.b > e.a) {
    std::swap(e.a, e.b);
    e.theta += std::numbers::pi / 2.0;
  }
  e.theta = std::fmod(e.theta, std::numbers::pi);
  if (e.theta < 0.0) e.theta += std::numbers::pi;
  if (e.theta >= std::numbers::pi) e.theta = 0.0;
  return e;
}

bool is_valid(const Ellipse& e) {
  return std::isfinite(e.cx) && std::isfinite(e.cy) && std::isfinite(e.a) && std::isfinite(e.b) &&
         std::isfinite(e.theta) && e.b > 0.0 && e.a >= e.b && e.theta >= 0.0 &&
         e.theta < std::numbers::pi;
}

std::array<double, 2> landmark_offset(const Ellipse& e, int k) {
  const double t = k * (std::numbers::pi / 4.0);
  const double lx = e.a * std::cos(t);
  const double ly = e.b * std::sin(t);
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  return {c * lx - s * ly, s * lx + c * ly};
}

LandmarkSet ellipse_landmarks(const Ellipse& e) {
  LandmarkSet out;
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  for (int k = 0; k < kLandmarkCount; ++k) {
    const auto [ox, oy] = landmark_offset(e, k);
    out.points[k] = {static_cast<int>(round_half_away(ox)), static_cast<int>(round_half_away(oy))};

    // gradient of (x/a)^2 + (y/b)^2 at the parametric point, up to scale
    const double t = k * (std::numbers::pi / 4.0);
    const double lx = e.b * std::cos(t);
    const double ly = e.a * std::sin(t);
    double nx = c * lx - s * ly;
    double ny = s * lx + c * ly;
    const double len = std::hypot(nx, ny);
    nx /= len;
    ny /= len;
    out.normals[k] = {static_cast<std::int16_t>(round_half_away(nx * kNormalScale)),
                      static_cast<std::int16_t>(round_half_away(ny * kNormalScale))};
  }
  return out;
}

int landmark_distance(const LandmarkSet& l, const LandmarkSet& r) {
  int d = 0;
  for (int k = 0; k < kLandmarkCount; ++k) {
    d = std::max({d, std::abs(l.points[k].x - r.points[k].x), std::abs(l.points[k].y - r.points[k].y)});
  }
  return d;
}

std::size_t EllipseMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool contains(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  const double u = (c * dx + s * dy) / e.a;
  const double v = (-s * dx + c * dy) / e.b;
  return u * u + v * v <= 1.0;
}

EllipseMask rasterize(const Ellipse& e, int width, int height) {
  if (width <= 0 || height <= 0) throw InvalidArgument("mask dimensions must be positive");
  EllipseMask mask(width, height);

  // Axis-aligned bounding box of the rotated ellipse, padded by one pixel.
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  const double hw = std::sqrt(e.a * e.a * c * c + e.b * e.b * s * s);
  const double hh = std::sqrt(e.a * e.a * s * s + e.b * e.b * c * c);
  const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - hw)) - 1);
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(e.cx + hw)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - hh)) - 1);
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(e.cy + hh)) + 1);

  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (contains(e, x + 0.5, y + 0.5)) mask.set(x, y, true);
    }
  }
  return mask;
}

Position quantize_center(const Ellipse& e) {
  return {static_cast<int>(round_half_away(e.cx)), static_cast<int>(round_half_away(e.cy))};
}

}  // namespace spup
