#include "statpupil/detect.hpp"

#include <cmath>
#include <cstdlib>
#include <string>
#include <unordered_map>

#include "statpupil/error.hpp"
#include "statpupil/parallel.hpp"

namespace spup {

std::optional<ScoreResult> score(const DifferenceVector& obs, std::span<const DifferenceSet> prototypes,
                                 std::span<const WeightVector> weights, int min_valid) {
  if (obs.valid_count() < min_valid || prototypes.empty()) return std::nullopt;
  std::optional<ScoreResult> best;
  for (std::size_t j = 0; j < prototypes.size(); ++j) {
    double wsum = 0.0;
    double acc = 0.0;
    for (int k = 0; k < kLandmarkCount; ++k) {
      if (!obs.valid[k]) continue;
      const double w = weights[j][k];
      wsum += w;
      acc += static_cast<double>(std::abs(static_cast<std::int64_t>(prototypes[j].values[k]) - obs.values[k])) * w;
    }
    const double s = wsum > 0.0 ? acc / wsum : INFINITY;
    if (!best || s < best->score) best = ScoreResult{s, static_cast<int>(j)};
  }
  return best;
}

bool better_candidate(const Detection& cand, const Detection& best) {
  if (cand.score != best.score) return cand.score < best.score;
  if (cand.probability != best.probability) return cand.probability > best.probability;
  if (cand.position != best.position) return cand.position < best.position;
  return cand.ellipse_id < best.ellipse_id;
}

namespace {

void check_frame(const GrayImage& img, const ModelConfig& cfg) {
  const int s = static_cast<int>(cfg.downscale_factor);
  if (img.width() < s || img.height() < s) {
    throw InvalidArgument("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                          " is smaller than the model's downscale factor " + std::to_string(s));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Indexed detector

Detector::Detector(const PupilModel& model) : config_(model.config) {
  for (const auto& [pos, list] : model.shapes.entries) {
    for (const ShapeEntry& e : list) {
      const EntryKey key{pos, e.id};
      const auto& protos = model.diffsets.at(key);
      const auto& ws = model.weights.at(key);
      if (ws.size() != protos.size()) throw InvariantError("weight/prototype count mismatch");
      Candidate c;
      c.position = pos;
      c.id = e.id;
      c.ellipse = e.ellipse;
      c.probability = e.probability;
      c.landmarks = e.landmarks;
      c.first_prototype = prototypes_.size();
      c.prototype_count = protos.size();
      prototypes_.insert(prototypes_.end(), protos.begin(), protos.end());
      weights_.insert(weights_.end(), ws.begin(), ws.end());
      candidates_.push_back(c);
    }
  }
  const int s = static_cast<int>(config_.downscale_factor);
  plan_ = make_plan(static_cast<int>(config_.frame_width) / s, static_cast<int>(config_.frame_height) / s);
}

Detector::Plan Detector::make_plan(int block_width, int block_height) const {
  Plan plan;
  plan.block_width = block_width;
  plan.block_height = block_height;
  plan.slots.assign(candidates_.size() * kLandmarkCount, -1);
  std::unordered_map<std::uint64_t, std::int32_t> index;
  const int s = static_cast<int>(config_.downscale_factor);
  const int r = static_cast<int>(config_.radial_step);
  auto inside = [&](Point p) { return p.x >= 0 && p.y >= 0 && p.x < block_width && p.y < block_height; };

  for (std::size_t c = 0; c < candidates_.size(); ++c) {
    const Candidate& cand = candidates_[c];
    const Point center{cand.position.x, cand.position.y};
    for (int k = 0; k < kLandmarkCount; ++k) {
      const SamplePair sp = sample_blocks(center, cand.landmarks.points[k], cand.landmarks.normals[k], s, r);
      if (!inside(sp.inner) || !inside(sp.outer)) continue;
      const std::int32_t inner = sp.inner.y * block_width + sp.inner.x;
      const std::int32_t outer = sp.outer.y * block_width + sp.outer.x;
      const std::uint64_t key =
          (static_cast<std::uint64_t>(static_cast<std::uint32_t>(inner)) << 32) | static_cast<std::uint32_t>(outer);
      auto [it, inserted] = index.try_emplace(key, static_cast<std::int32_t>(plan.pairs.size() / 2));
      if (inserted) {
        plan.pairs.push_back(inner);
        plan.pairs.push_back(outer);
      }
      plan.slots[c * kLandmarkCount + k] = it->second;
    }
  }
  return plan;
}

std::optional<Detection> Detector::run(const BlockSumImage& bsi, const Plan& plan) const {
  const std::size_t n_pairs = plan.pairs.size() / 2;
  std::vector<std::int32_t> diffs(n_pairs);
  const std::int32_t* sums = bsi.sums().data();
  for (std::size_t i = 0; i < n_pairs; ++i) diffs[i] = sums[plan.pairs[2 * i]] - sums[plan.pairs[2 * i + 1]];

  const int min_valid = static_cast<int>(config_.min_valid);
  std::optional<Detection> best;
  DifferenceVector obs;
  for (std::size_t c = 0; c < candidates_.size(); ++c) {
    const std::int32_t* slot = plan.slots.data() + c * kLandmarkCount;
    for (int k = 0; k < kLandmarkCount; ++k) {
      obs.valid[k] = slot[k] >= 0;
      obs.values[k] = slot[k] >= 0 ? diffs[static_cast<std::size_t>(slot[k])] : 0;
    }
    const Candidate& cand = candidates_[c];
    const auto protos = std::span(prototypes_).subspan(cand.first_prototype, cand.prototype_count);
    const auto ws = std::span(weights_).subspan(cand.first_prototype, cand.prototype_count);
    const auto sc = score(obs, protos, ws, min_valid);
    if (!sc) continue;
    Detection d{cand.ellipse, cand.position, cand.id, sc->score, sc->prototype, obs.valid_count(), cand.probability};
    if (!best || better_candidate(d, *best)) best = d;
  }
  return best;
}

std::optional<Detection> Detector::detect(const GrayImage& img) const {
  check_frame(img, config_);
  const BlockSumImage bsi = downscale(img, static_cast<int>(config_.downscale_factor));
  if (bsi.width() == plan_.block_width && bsi.height() == plan_.block_height) return run(bsi, plan_);
  return run(bsi, make_plan(bsi.width(), bsi.height()));
}

std::optional<Detection> detect(const GrayImage& img, const PupilModel& model) {
  return Detector(model).detect(img);
}

std::vector<std::optional<Detection>> detect_batch(const Detector& detector, std::span<const GrayImage> frames,
                                                   int threads) {
  std::vector<std::optional<Detection>> out(frames.size());
  parallel_for(frames.size(), threads, [&](std::size_t i) { out[i] = detector.detect(frames[i]); });
  return out;
}

std::vector<std::optional<Detection>> detect_serial(const Detector& detector, std::span<const GrayImage> frames) {
  std::vector<std::optional<Detection>> out;
  out.reserve(frames.size());
  for (const GrayImage& f : frames) out.push_back(detector.detect(f));
  return out;
}

// ---------------------------------------------------------------------------
// Reference detector

namespace {

std::int64_t raw_block_sum(const GrayImage& img, Point block, int s) {
  std::int64_t sum = 0;
  for (int y = block.y * s; y < block.y * s + s; ++y) {
    for (int x = block.x * s; x < block.x * s + s; ++x) sum += img.at(x, y);
  }
  return sum;
}

}  // namespace

std::optional<Detection> detect_oracle(const GrayImage& img, const PupilModel& model) {
  check_frame(img, model.config);
  const int s = static_cast<int>(model.config.downscale_factor);
  const int r = static_cast<int>(model.config.radial_step);
  const int bw = img.width() / s;
  const int bh = img.height() / s;
  auto inside = [&](Point p) { return p.x >= 0 && p.y >= 0 && p.x < bw && p.y < bh; };

  std::optional<Detection> best;
  for (const auto& [pos, list] : model.shapes.entries) {
    for (const ShapeEntry& entry : list) {
      DifferenceVector obs;
      for (int k = 0; k < kLandmarkCount; ++k) {
        const SamplePair sp = sample_blocks({pos.x, pos.y}, entry.landmarks.points[k], entry.landmarks.normals[k], s, r);
        if (!inside(sp.inner) || !inside(sp.outer)) continue;
        obs.valid[k] = true;
        obs.values[k] = static_cast<std::int32_t>(raw_block_sum(img, sp.inner, s) - raw_block_sum(img, sp.outer, s));
      }
      const EntryKey key{pos, entry.id};
      const auto sc = score(obs, model.diffsets.at(key), model.weights.at(key), static_cast<int>(model.config.min_valid));
      if (!sc) continue;
      Detection d{entry.ellipse, pos, entry.id, sc->score, sc->prototype, obs.valid_count(), entry.probability};
      if (!best || better_candidate(d, *best)) best = d;
    }
  }
  return best;
}

EllipseMask segment(const Detection& det, int width, int height) { return rasterize(det.ellipse, width, height); }

}  // namespace spup
