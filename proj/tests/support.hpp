#pragma once

#include <vector>

#include "statpupil/core.hpp"
#include "statpupil/dataset.hpp"
#include "statpupil/model.hpp"
#include "statpupil/synth.hpp"
#include "statpupil/train.hpp"

namespace spup::testing {

/// Two-level image: `inside` where the pixel center lies in e, else `outside`.
inline GrayImage two_level(int w, int h, const Ellipse& e, std::uint8_t inside, std::uint8_t outside) {
  GrayImage img(w, h, outside);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (contains(e, x + 0.5, y + 0.5)) img.at(x, y) = inside;
    }
  }
  return img;
}

inline GrayImage add_offset(const GrayImage& img, int c) {
  GrayImage out = img;
  for (auto& p : out.pixels()) p = static_cast<std::uint8_t>(p + c);
  return out;
}

inline int max_pixel(const GrayImage& img) {
  int m = 0;
  for (auto p : img.pixels()) m = std::max<int>(m, p);
  return m;
}

/// Default-distribution training corpus, small enough for unit tests.
inline std::vector<Sample> corpus(std::size_t frames, std::uint64_t seed) {
  DatasetSpec spec;
  spec.frames = frames;
  spec.seed = seed;
  return generate_samples(spec);
}

struct EntrySpec {
  Ellipse ellipse;
  std::int64_t count = 1;
  std::vector<DiffValues> prototypes{DiffValues{}};
};

/// Hand-built model; ids are assigned per position in argument order,
/// probabilities from counts, weights uniform.
inline PupilModel make_model(const std::vector<EntrySpec>& specs, ModelConfig cfg = {}) {
  PupilModel m;
  m.config = cfg;
  for (const EntrySpec& s : specs) m.shapes.total_count += s.count;
  for (const EntrySpec& s : specs) {
    const Position pos = quantize_center(s.ellipse);
    auto& list = m.shapes.entries[pos];
    ShapeEntry e;
    e.id = static_cast<int>(list.size());
    e.ellipse = s.ellipse;
    e.landmarks = ellipse_landmarks(s.ellipse);
    e.count = s.count;
    e.probability = static_cast<double>(s.count) / static_cast<double>(m.shapes.total_count);
    list.push_back(e);
    const EntryKey key{pos, e.id};
    for (const DiffValues& v : s.prototypes) {
      m.diffsets[key].push_back({v, 1});
      WeightVector w;
      w.fill(1.0 / kLandmarkCount);
      m.weights[key].push_back(w);
    }
  }
  return m;
}

/// Top-left crop; pixel coordinates are preserved.
inline GrayImage crop(const GrayImage& img, int w, int h) {
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(x, y);
  }
  return out;
}

/// Shared model trained once per test binary.
inline const PupilModel& shared_model() {
  static const PupilModel model = [] {
    MemorySource src(corpus(600, 17));
    return train(src, TrainConfig{});
  }();
  return model;
}

}  // namespace spup::testing
