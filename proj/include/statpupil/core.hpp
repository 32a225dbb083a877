#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace spup {

inline constexpr int kLandmarkCount = 8;

/// Fixed-point scale of stored landmark normals (Q14).
inline constexpr int kNormalScale = 1 << 14;

/// Round half away from zero. Used for every rounding in the library.
inline long round_half_away(double v) { return std::lround(v); }

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;
};

/// Integer search-area position. Ordered row-major (y first, then x), which is
/// also the detector's scan order.
struct Position {
  int x = 0;
  int y = 0;

  friend bool operator==(const Position&, const Position&) = default;
  friend std::strong_ordering operator<=>(const Position& l, const Position& r) {
    if (auto c = l.y <=> r.y; c != 0) return c;
    return l.x <=> r.x;
  }
};

inline Point as_point(Position p) { return {p.x, p.y}; }

/// 8-bit grayscale raster, row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t at(int x, int y) const { return pixels_[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return pixels_[index(x, y)]; }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Pupil ellipse: center (sub-pixel), semi-axes a >= b > 0, rotation in [0, pi).
/// Pixel (px, py) covers [px, px+1) x [py, py+1); its center is (px+0.5, py+0.5).
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;
  double b = 1.0;
  double theta = 0.0;

  friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

/// Brings an arbitrary (a, b, theta) triple into canonical form: swaps axes if
/// b > a and wraps theta into [0, pi).
Ellipse canonical(Ellipse e);

/// True when a >= b > 0, theta in [0, pi) and all fields are finite.
bool is_valid(const Ellipse& e);

/// Outward boundary normal stored as Q14 fixed point.
struct Normal {
  std::int16_t x = 0;
  std::int16_t y = 0;

  friend bool operator==(const Normal&, const Normal&) = default;
};

/// Eight boundary landmarks at parametric angles k*45deg, as integer offsets
/// from the ellipse center, plus their outward normals.
struct LandmarkSet {
  std::array<Point, kLandmarkCount> points{};
  std::array<Normal, kLandmarkCount> normals{};

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

LandmarkSet ellipse_landmarks(const Ellipse& e);

/// Continuous (unrounded) landmark k of e relative to its center.
std::array<double, 2> landmark_offset(const Ellipse& e, int k);

/// Largest per-landmark Chebyshev distance between two offset sets.
int landmark_distance(const LandmarkSet& l, const LandmarkSet& r);

class EllipseMask {
 public:
  EllipseMask() = default;
  EllipseMask(int width, int height) : width_(width), height_(height), bits_(size_of(width, height), 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v) { bits_[index(x, y)] = v ? 1 : 0; }
  std::size_t count() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  friend bool operator==(const EllipseMask&, const EllipseMask&) = default;

 private:
  static std::size_t size_of(int w, int h) {
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Marks every pixel whose center lies inside or on e.
EllipseMask rasterize(const Ellipse& e, int width, int height);

/// Pixel-center inside test shared by rasterize and the renderer.
bool contains(const Ellipse& e, double x, double y);

Position quantize_center(const Ellipse& e);

}  // namespace spup
