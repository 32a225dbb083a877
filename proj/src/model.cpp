#include "statpupil/model.hpp"

#include <cmath>
#include <string>

#include "statpupil/error.hpp"

namespace spup {

std::size_t ShapeDistribution::entry_count() const {
  std::size_t n = 0;
  for (const auto& [pos, list] : entries) n += list.size();
  return n;
}

const ShapeEntry* ShapeDistribution::find(const EntryKey& key) const {
  auto it = entries.find(key.position);
  if (it == entries.end()) return nullptr;
  for (const ShapeEntry& e : it->second) {
    if (e.id == key.id) return &e;
  }
  return nullptr;
}

namespace {

std::string describe(const EntryKey& k) {
  return "(" + std::to_string(k.position.x) + "," + std::to_string(k.position.y) + ")#" + std::to_string(k.id);
}

}  // namespace

void validate(const PupilModel& model) {
  constexpr double kTol = 1e-9;
  const ModelConfig& cfg = model.config;
  if (cfg.downscale_factor < 1) throw InvariantError("downscale factor must be >= 1");
  if (cfg.radial_step < 1) throw InvariantError("radial step must be >= 1");
  if (cfg.rounding_rule != kRoundHalfAwayFromZero) throw InvariantError("unknown rounding rule id");
  if (cfg.min_valid < 1 || cfg.min_valid > kLandmarkCount) throw InvariantError("min_valid out of range");
  if (cfg.frame_width < 16 || cfg.frame_height < 16) throw InvariantError("frame dimensions below 16");
  if (model.shapes.entries.empty()) throw InvariantError("model has no shape entries");

  double total = 0.0;
  std::int64_t count_sum = 0;
  std::size_t keys = 0;
  for (const auto& [pos, list] : model.shapes.entries) {
    if (list.empty()) throw InvariantError("empty entry list at a search position");
    int last_id = -1;
    for (const ShapeEntry& e : list) {
      const EntryKey key{pos, e.id};
      if (e.id <= last_id) throw InvariantError("entry ids not strictly increasing at " + describe(key));
      last_id = e.id;
      if (!is_valid(e.ellipse)) throw InvariantError("invalid ellipse at " + describe(key));
      if (quantize_center(e.ellipse) != pos) throw InvariantError("ellipse center off its key at " + describe(key));
      if (!(e.probability > 0.0 && e.probability <= 1.0)) throw InvariantError("probability out of (0,1] at " + describe(key));
      if (e.count <= 0) throw InvariantError("nonpositive count at " + describe(key));
      total += e.probability;
      count_sum += e.count;
      ++keys;

      auto ds = model.diffsets.find(key);
      auto ws = model.weights.find(key);
      if (ds == model.diffsets.end()) throw InvariantError("missing difference sets for " + describe(key));
      if (ws == model.weights.end()) throw InvariantError("missing feature weights for " + describe(key));
      if (ds->second.empty() || ds->second.size() > static_cast<std::size_t>(kMaxPrototypes)) {
        throw InvariantError("prototype count outside 1..5 at " + describe(key));
      }
      if (ws->second.size() != ds->second.size()) throw InvariantError("weight/prototype count mismatch at " + describe(key));
      for (const WeightVector& w : ws->second) {
        double sum = 0.0;
        for (double v : w) {
          if (!std::isfinite(v) || v < 0.0) throw InvariantError("negative or non-finite weight at " + describe(key));
          sum += v;
        }
        if (std::abs(sum - 1.0) > kTol) throw InvariantError("weights do not sum to 1 at " + describe(key));
      }
    }
  }
  if (model.diffsets.size() != keys || model.weights.size() != keys) {
    throw InvariantError("difference-set/weight tables reference unknown entries");
  }
  if (count_sum != model.shapes.total_count) throw InvariantError("entry counts do not sum to total_count");
  if (std::abs(total - 1.0) > kTol) throw InvariantError("shape probabilities do not sum to 1");
}

}  // namespace spup
