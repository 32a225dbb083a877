#include "statpupil/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "statpupil/error.hpp"
#include "statpupil/parallel.hpp"

namespace spup {

std::uint64_t mix_seed(std::uint64_t v) {
  // splitmix64 finalizer
  v += 0x9E3779B97F4A7C15ull;
  v = (v ^ (v >> 30)) * 0xBF58476D1CE4E5B9ull;
  v = (v ^ (v >> 27)) * 0x94D049BB133111EBull;
  return v ^ (v >> 31);
}

namespace {

std::uint8_t to_pixel(double v) {
  return static_cast<std::uint8_t>(std::clamp<long>(round_half_away(v), 0, 255));
}

int clamp_pixel(int v) { return std::clamp(v, 0, 255); }

}  // namespace

RenderedFrame render(const SceneParams& p) {
  if (p.width < 16 || p.height < 16) throw InvalidArgument("frame must be at least 16x16");
  if (p.pupil_intensity < 0 || p.pupil_intensity > 40) throw InvalidArgument("pupil intensity must be in [0,40]");
  if (!(p.pupil_intensity < p.iris_intensity && p.iris_intensity < p.sclera_intensity) || p.sclera_intensity > 255) {
    throw InvalidArgument("intensities must satisfy pupil < iris < sclera <= 255");
  }
  const Ellipse pupil = canonical(p.pupil);
  if (!is_valid(pupil)) throw InvalidArgument("invalid pupil ellipse");
  if (!(pupil.cx >= 0.0 && pupil.cy >= 0.0 && pupil.cx < p.width && pupil.cy < p.height)) {
    throw InvalidArgument("pupil center outside the frame");
  }

  const double gx = std::cos(p.gradient_angle) * p.gradient_magnitude / (p.width / 2.0);
  const double gy = std::sin(p.gradient_angle) * p.gradient_magnitude / (p.width / 2.0);

  double lid_top = 0.0;
  double lid_span = 0.0;
  if (p.eyelid) {
    const double c = std::cos(pupil.theta);
    const double s = std::sin(pupil.theta);
    const double half_height = std::sqrt(pupil.a * pupil.a * s * s + pupil.b * pupil.b * c * c);
    lid_top = pupil.cy - half_height;
    lid_span = 2.0 * half_height;
  }

  GrayImage img(p.width, p.height);
  const double r2 = p.iris_radius * p.iris_radius;
  for (int y = 0; y < p.height; ++y) {
    const double yc = y + 0.5;
    for (int x = 0; x < p.width; ++x) {
      const double xc = x + 0.5;
      double v = p.sclera_intensity;
      const double dx = xc - p.iris_cx;
      const double dy = yc - p.iris_cy;
      if (dx * dx + dy * dy <= r2) v = p.iris_intensity;
      if (contains(pupil, xc, yc)) v = p.pupil_intensity;
      if (p.eyelid) {
        const double line = lid_top + p.eyelid->coverage * lid_span + p.eyelid->slope * (xc - pupil.cx);
        if (yc < line) v = p.eyelid->intensity;
      }
      v += gx * (xc - p.width / 2.0) + gy * (yc - p.height / 2.0);
      img.at(x, y) = to_pixel(v);
    }
  }
  return {std::move(img), pupil};
}

SceneParams SceneSampler::sample(Rng& rng) const {
  SceneParams p;
  p.width = width;
  p.height = height;
  if (grid > 0) {
    auto lattice = [&](double lo, double hi) {
      if (grid == 1) return 0.5 * (lo + hi);
      return lo + (hi - lo) * rng.uniform_int(0, grid - 1) / (grid - 1);
    };
    p.pupil.cx = lattice(cx_min, cx_max);
    p.pupil.cy = lattice(cy_min, cy_max);
  } else {
    p.pupil.cx = rng.uniform(cx_min, cx_max);
    p.pupil.cy = rng.uniform(cy_min, cy_max);
  }
  p.pupil.a = rng.uniform(a_min, a_max);
  p.pupil.b = p.pupil.a * rng.uniform(aspect_min, aspect_max);
  p.pupil.theta = rng.uniform(0.0, std::numbers::pi);
  p.pupil = canonical(p.pupil);

  p.pupil_intensity = rng.uniform_int(pupil_min, pupil_max);
  p.iris_intensity = rng.uniform_int(std::max(iris_min, p.pupil_intensity + 1), iris_max);
  p.sclera_intensity = rng.uniform_int(std::max(sclera_min, p.iris_intensity + 1), std::max(sclera_max, p.iris_intensity + 1));
  p.iris_cx = p.pupil.cx + rng.uniform(-iris_offset_max, iris_offset_max);
  p.iris_cy = p.pupil.cy + rng.uniform(-iris_offset_max, iris_offset_max);
  p.iris_radius = rng.uniform(iris_radius_min, iris_radius_max);
  p.gradient_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  p.gradient_magnitude = rng.uniform(0.0, gradient_max);
  if (rng.chance(eyelid_probability)) {
    Eyelid lid;
    lid.slope = rng.uniform(-0.3, 0.3);
    lid.coverage = rng.uniform(0.0, eyelid_coverage_max);
    lid.intensity = rng.uniform_int(p.iris_intensity, p.sclera_intensity);
    p.eyelid = lid;
  }
  return p;
}

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.noise_max_frac = 0.0;
  c.reflection_max_frac = 0.0;
  c.contrast_min = c.contrast_max = 0;
  c.shift_min = c.shift_max = 0;
  c.zoom_min = c.zoom_max = 1.0;
  return c;
}

AugmentParams sample_augment(const AugmentConfig& cfg, int width, int height, Rng& rng) {
  AugmentParams p;
  p.shift_x = rng.uniform_int(cfg.shift_min, cfg.shift_max);
  p.shift_y = rng.uniform_int(cfg.shift_min, cfg.shift_max);
  p.zoom = cfg.zoom_min == cfg.zoom_max ? cfg.zoom_min : rng.uniform(cfg.zoom_min, cfg.zoom_max);
  if (cfg.reflection_max_frac > 0.0) {
    p.reflection = rng.uniform(0.0, cfg.reflection_max_frac);
    p.reflection_w = rng.uniform_int(width / 5, width / 2);
    p.reflection_h = rng.uniform_int(height / 5, height / 2);
    p.reflection_x = rng.uniform_int(0, width - p.reflection_w);
    p.reflection_y = rng.uniform_int(0, height - p.reflection_h);
    p.reflection_seed = rng.next();
  }
  p.contrast = rng.uniform_int(cfg.contrast_min, cfg.contrast_max);
  if (cfg.noise_max_frac > 0.0) {
    p.noise = rng.uniform(0.0, cfg.noise_max_frac * 255.0);
    p.noise_seed = rng.next();
  }
  return p;
}

Augmented apply_augment(const GrayImage& img, const Ellipse& truth, const AugmentParams& p) {
  const int w = img.width();
  const int h = img.height();
  Augmented out{img, truth, false};

  if (p.shift_x != 0 || p.shift_y != 0) {
    GrayImage shifted(w, h);
    for (int y = 0; y < h; ++y) {
      const int sy = std::clamp(y - p.shift_y, 0, h - 1);
      for (int x = 0; x < w; ++x) shifted.at(x, y) = out.image.at(std::clamp(x - p.shift_x, 0, w - 1), sy);
    }
    out.image = std::move(shifted);
    out.truth.cx += p.shift_x;
    out.truth.cy += p.shift_y;
  }

  if (p.zoom != 1.0) {
    const double hw = w / 2.0;
    const double hh = h / 2.0;
    GrayImage zoomed(w, h);
    for (int y = 0; y < h; ++y) {
      const int sy = std::clamp(static_cast<int>(std::floor((y + 0.5 - hh) / p.zoom + hh)), 0, h - 1);
      for (int x = 0; x < w; ++x) {
        const int sx = std::clamp(static_cast<int>(std::floor((x + 0.5 - hw) / p.zoom + hw)), 0, w - 1);
        zoomed.at(x, y) = out.image.at(sx, sy);
      }
    }
    out.image = std::move(zoomed);
    out.truth.cx = (out.truth.cx - hw) * p.zoom + hw;
    out.truth.cy = (out.truth.cy - hh) * p.zoom + hh;
    out.truth.a *= p.zoom;
    out.truth.b *= p.zoom;
  }

  if (p.reflection > 0.0 && p.reflection_w > 0 && p.reflection_h > 0) {
    SceneSampler sampler;
    sampler.width = w;
    sampler.height = h;
    sampler.cx_min = sampler.cx_max = w / 2.0;
    sampler.cy_min = sampler.cy_max = h / 2.0;
    Rng rr(p.reflection_seed);
    const GrayImage source = render(sampler.sample(rr)).image;
    const int x1 = std::min(w, p.reflection_x + p.reflection_w);
    const int y1 = std::min(h, p.reflection_y + p.reflection_h);
    for (int y = std::max(0, p.reflection_y); y < y1; ++y) {
      for (int x = std::max(0, p.reflection_x); x < x1; ++x) {
        const int add = static_cast<int>(round_half_away(p.reflection * source.at(x, y)));
        out.image.at(x, y) = static_cast<std::uint8_t>(clamp_pixel(out.image.at(x, y) + add));
      }
    }
  }

  if (p.contrast != 0) {
    for (auto& v : out.image.pixels()) v = static_cast<std::uint8_t>(clamp_pixel(v + p.contrast));
  }

  if (p.noise > 0.0) {
    Rng nr(p.noise_seed);
    for (auto& v : out.image.pixels()) {
      const int n = static_cast<int>(round_half_away(nr.uniform(-p.noise, p.noise)));
      v = static_cast<std::uint8_t>(clamp_pixel(v + n));
    }
  }

  const Ellipse& t = out.truth;
  out.off_frame = !(t.cx >= 0.0 && t.cy >= 0.0 && t.cx < w && t.cy < h);
  return out;
}

Augmented augment(const GrayImage& img, const Ellipse& truth, const AugmentConfig& cfg, Rng& rng) {
  return apply_augment(img, truth, sample_augment(cfg, img.width(), img.height(), rng));
}

std::vector<Sample> generate_samples(const DatasetSpec& spec, int threads) {
  if (spec.frames < 1) throw InvalidArgument("dataset needs at least one frame");
  if (spec.variants < 1) throw InvalidArgument("variants per scene must be >= 1");
  constexpr int kAttempts = 8;

  std::vector<Sample> out(spec.frames);
  parallel_for(spec.frames, threads, [&](std::size_t i) {
    const std::uint64_t scene = i / static_cast<std::size_t>(spec.variants);
    Rng scene_rng(mix_seed(spec.seed ^ scene));
    RenderedFrame frame = render(spec.sampler.sample(scene_rng));
    out[i] = {frame.image, frame.truth};
    if (!spec.augmented) return;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      Rng rng(mix_seed(mix_seed(spec.seed ^ i) + static_cast<std::uint64_t>(attempt)));
      Augmented a = augment(frame.image, frame.truth, spec.augment, rng);
      if (!a.off_frame) {
        out[i] = {std::move(a.image), a.truth};
        return;
      }
    }
  });
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::vector<Annotation> rows;
  rows.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.png", i);
    write_image(dir / name, samples[i].image);
    rows.push_back({name, samples[i].truth});
  }
  write_annotations(dir / kAnnotationFile, rows);
}

void make_dataset(const std::filesystem::path& dir, const DatasetSpec& spec, int threads) {
  write_dataset(dir, generate_samples(spec, threads));
}

}  // namespace spup
