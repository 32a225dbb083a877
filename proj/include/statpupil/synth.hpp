#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "statpupil/core.hpp"
#include "statpupil/dataset.hpp"

namespace spup {

/// Seeded generator with a platform-independent mapping to real/int ranges.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t v);

struct Eyelid {
  double slope = 0.0;
  /// Fraction of the pupil's vertical extent hidden, measured from its top.
  double coverage = 0.0;
  int intensity = 150;
};

struct SceneParams {
  int width = 192;
  int height = 144;
  Ellipse pupil{96.0, 72.0, 14.0, 12.0, 0.0};
  int pupil_intensity = 20;
  int iris_intensity = 110;
  double iris_cx = 96.0;
  double iris_cy = 72.0;
  double iris_radius = 42.0;
  int sclera_intensity = 200;
  /// Linear illumination ramp: intensity change from frame center to the
  /// frame edge along gradient_angle.
  double gradient_angle = 0.0;
  double gradient_magnitude = 0.0;
  std::optional<Eyelid> eyelid;
};

struct RenderedFrame {
  GrayImage image;
  Ellipse truth;
};

/// Layers: sclera, iris disk, pupil ellipse, eyelid, illumination ramp.
RenderedFrame render(const SceneParams& params);

/// Ranges scenes are drawn from. With grid > 0 pupil centers are drawn from a
/// grid x grid lattice spanning the center ranges.
struct SceneSampler {
  int width = 192;
  int height = 144;
  double cx_min = 92.0;
  double cx_max = 100.0;
  double cy_min = 69.0;
  double cy_max = 75.0;
  double a_min = 15.0;
  double a_max = 17.0;
  double aspect_min = 0.9;
  double aspect_max = 1.0;
  int pupil_min = 10;
  int pupil_max = 30;
  int iris_min = 110;
  int iris_max = 130;
  double iris_radius_min = 38.0;
  double iris_radius_max = 48.0;
  double iris_offset_max = 4.0;
  int sclera_min = 170;
  int sclera_max = 230;
  double gradient_max = 25.0;
  double eyelid_probability = 0.0;
  double eyelid_coverage_max = 0.3;
  int grid = 0;

  SceneParams sample(Rng& rng) const;
};

struct AugmentConfig {
  double noise_max_frac = 0.20;
  double reflection_max_frac = 0.20;
  int contrast_min = -40;
  int contrast_max = 40;
  int shift_min = -10;
  int shift_max = 10;
  double zoom_min = 0.8;
  double zoom_max = 1.2;

  /// Every range collapsed to the neutral value.
  static AugmentConfig identity();
};

/// One concrete draw of the augmentation recipe.
struct AugmentParams {
  int shift_x = 0;
  int shift_y = 0;
  double zoom = 1.0;
  double reflection = 0.0;  // fraction of the second scene's intensity added
  int reflection_x = 0;
  int reflection_y = 0;
  int reflection_w = 0;
  int reflection_h = 0;
  std::uint64_t reflection_seed = 0;
  int contrast = 0;
  double noise = 0.0;  // per-pixel amplitude in intensity units
  std::uint64_t noise_seed = 0;
};

AugmentParams sample_augment(const AugmentConfig& cfg, int width, int height, Rng& rng);

struct Augmented {
  GrayImage image;
  Ellipse truth;
  /// Truth center left the frame; callers skip such samples.
  bool off_frame = false;
};

/// Order: shift (edge replication), zoom about the frame center (nearest
/// neighbour), reflection patch, contrast offset, noise. Geometric steps
/// transform the truth exactly.
Augmented apply_augment(const GrayImage& img, const Ellipse& truth, const AugmentParams& p);

Augmented augment(const GrayImage& img, const Ellipse& truth, const AugmentConfig& cfg, Rng& rng);

struct DatasetSpec {
  std::size_t frames = 500;
  /// Augmented variants rendered from each scene.
  int variants = 5;
  bool augmented = true;
  SceneSampler sampler;
  AugmentConfig augment;
  std::uint64_t seed = 1;
};

/// Frame i shows scene i / variants. Every frame depends only on the seed and
/// its index, so the result does not depend on `threads`.
std::vector<Sample> generate_samples(const DatasetSpec& spec, int threads = 0);

/// Writes frame_NNNNNN.png files and annotations.txt into dir.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);

void make_dataset(const std::filesystem::path& dir, const DatasetSpec& spec, int threads = 0);

}  // namespace spup
