#include "statpupil/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "statpupil/error.hpp"
#include "statpupil/features.hpp"
#include "statpupil/parallel.hpp"

namespace spup {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::size_t chunk_count(std::size_t n) { return (n + kTrainChunk - 1) / kTrainChunk; }

/// Applies fn(acc, index) to every sample index, one accumulator per fixed
/// chunk, and returns the accumulators in chunk order.
template <class Acc, class Fn>
std::vector<Acc> accumulate_chunks(std::size_t n, int threads, Fn&& fn) {
  std::vector<Acc> parts(chunk_count(n));
  parallel_for(parts.size(), threads, [&](std::size_t c) {
    const std::size_t begin = c * kTrainChunk;
    const std::size_t end = std::min(n, begin + kTrainChunk);
    for (std::size_t i = begin; i < end; ++i) fn(parts[c], i);
  });
  return parts;
}

std::int64_t sign_of(std::int64_t v) { return (v > 0) - (v < 0); }

void check_config(const TrainConfig& cfg) {
  if (cfg.downscale_factor < 1) throw InvalidArgument("downscale factor must be >= 1");
  if (cfg.radial_step < 1) throw InvalidArgument("radial step must be >= 1");
  if (cfg.max_clusters < 1 || cfg.max_clusters > kMaxPrototypes) {
    throw InvalidArgument("max_clusters must be in 1..5");
  }
  if (cfg.merge_tolerance < 0) throw InvalidArgument("merge tolerance must be >= 0");
  if (cfg.min_valid < 1 || cfg.min_valid > kLandmarkCount) throw InvalidArgument("min_valid must be in 1..8");
  if (!(cfg.raw_weight_floor > 0.0)) throw InvalidArgument("raw weight floor must be > 0");
  if (!(cfg.weight_floor >= 0.0 && cfg.weight_floor < 1.0 / kLandmarkCount)) {
    throw InvalidArgument("weight floor must be in [0, 1/8)");
  }
}

}  // namespace

double TrainConfig::bandwidth() const {
  if (mean_shift_bandwidth > 0.0) return mean_shift_bandwidth;
  return 0.05 * 255.0 * downscale_factor * downscale_factor;
}

// ---------------------------------------------------------------------------
// Pass 1

void RawShape::add(const RawShape& other) {
  if (count == 0) landmarks = other.landmarks;
  count += other.count;
  sum_cx += other.sum_cx;
  sum_cy += other.sum_cy;
  sum_a += other.sum_a;
  sum_b += other.sum_b;
  sum_cos2 += other.sum_cos2;
  sum_sin2 += other.sum_sin2;
}

void RawShapeCounts::add(const Ellipse& raw, int frame_width, int frame_height) {
  const Ellipse e = canonical(raw);
  const bool inside_frame =
      frame_width <= 0 || (e.cx >= 0.0 && e.cy >= 0.0 && e.cx < frame_width && e.cy < frame_height);
  if (!is_valid(e) || e.b < 1.0 || !inside_frame) {
    ++skipped;
    return;
  }
  RawShape one;
  one.count = 1;
  one.landmarks = ellipse_landmarks(e);
  one.sum_cx = e.cx;
  one.sum_cy = e.cy;
  one.sum_a = e.a;
  one.sum_b = e.b;
  one.sum_cos2 = std::cos(2.0 * e.theta);
  one.sum_sin2 = std::sin(2.0 * e.theta);
  shapes[ShapeKey{quantize_center(e), one.landmarks.points}].add(one);
  ++accepted;
}

void RawShapeCounts::merge(const RawShapeCounts& other) {
  for (const auto& [key, shape] : other.shapes) shapes[key].add(shape);
  accepted += other.accepted;
  skipped += other.skipped;
}

RawShapeCounts pass1_shapes(std::span<const Ellipse> annotations) {
  auto parts = accumulate_chunks<RawShapeCounts>(annotations.size(), 1,
                                                 [&](RawShapeCounts& acc, std::size_t i) { acc.add(annotations[i]); });
  RawShapeCounts out;
  for (const auto& p : parts) out.merge(p);
  return out;
}

namespace {

Ellipse mean_ellipse(const RawShape& s, Position key) {
  const double n = static_cast<double>(s.count);
  Ellipse e;
  e.cx = s.sum_cx / n;
  e.cy = s.sum_cy / n;
  e.a = s.sum_a / n;
  e.b = std::min(s.sum_b / n, e.a);
  e.theta = 0.5 * std::atan2(s.sum_sin2, s.sum_cos2);
  e = canonical(e);
  // The mean of centers inside one rounding cell stays in it up to float
  // error; pull it back if that error crossed the cell edge.
  while (round_half_away(e.cx) > key.x) e.cx = std::nextafter(e.cx, -INFINITY);
  while (round_half_away(e.cx) < key.x) e.cx = std::nextafter(e.cx, INFINITY);
  while (round_half_away(e.cy) > key.y) e.cy = std::nextafter(e.cy, -INFINITY);
  while (round_half_away(e.cy) < key.y) e.cy = std::nextafter(e.cy, INFINITY);
  return e;
}

}  // namespace

ShapeDistribution reduce_shapes(const RawShapeCounts& raw, const TrainConfig& cfg) {
  if (raw.shapes.empty()) throw InvalidArgument("no training shapes");

  struct Kept {
    LandmarkSet landmarks;
    RawShape sums;
  };

  ShapeDistribution out;
  std::int64_t total = 0;
  auto it = raw.shapes.begin();
  while (it != raw.shapes.end()) {
    const Position pos = it->first.position;
    std::vector<const RawShape*> group;
    for (; it != raw.shapes.end() && it->first.position == pos; ++it) group.push_back(&it->second);
    // map order is lexicographic in offsets; stable sort keeps it as tie-break
    std::stable_sort(group.begin(), group.end(),
                     [](const RawShape* l, const RawShape* r) { return l->count > r->count; });

    std::vector<Kept> kept;
    for (const RawShape* s : group) {
      auto home = std::find_if(kept.begin(), kept.end(), [&](const Kept& k) {
        return landmark_distance(k.landmarks, s->landmarks) <= cfg.merge_tolerance;
      });
      if (home != kept.end()) {
        home->sums.add(*s);
      } else {
        kept.push_back({s->landmarks, *s});
      }
    }

    std::vector<ShapeEntry> entries;
    for (const Kept& k : kept) {
      if (k.sums.count < cfg.min_count) continue;
      ShapeEntry entry;
      entry.id = static_cast<int>(entries.size());
      entry.ellipse = mean_ellipse(k.sums, pos);
      entry.landmarks = k.landmarks;
      entry.count = k.sums.count;
      total += entry.count;
      entries.push_back(entry);
    }
    if (!entries.empty()) out.entries.emplace(pos, std::move(entries));
  }
  if (total == 0) throw InvalidArgument("no training shapes survive min_count");

  out.total_count = total;
  for (auto& [pos, list] : out.entries) {
    for (ShapeEntry& e : list) e.probability = static_cast<double>(e.count) / static_cast<double>(total);
  }
  return out;
}

std::optional<EntryKey> resolve(const ShapeDistribution& shapes, const Ellipse& raw, int tolerance) {
  const Ellipse e = canonical(raw);
  if (!is_valid(e)) return std::nullopt;
  const Position pos = quantize_center(e);
  auto it = shapes.entries.find(pos);
  if (it == shapes.entries.end()) return std::nullopt;
  const LandmarkSet lms = ellipse_landmarks(e);
  for (const ShapeEntry& entry : it->second) {
    if (landmark_distance(entry.landmarks, lms) <= tolerance) return EntryKey{pos, entry.id};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Pass 2

void DiffObservations::merge(DiffObservations&& other) {
  for (auto& [key, list] : other.buckets) {
    auto& dst = buckets[key];
    dst.insert(dst.end(), list.begin(), list.end());
  }
  skipped_unresolved += other.skipped_unresolved;
  skipped_partial += other.skipped_partial;
}

DiffObservations pass2_diffs(const SampleSource& samples, const ShapeDistribution& shapes,
                             const TrainConfig& cfg) {
  auto parts = accumulate_chunks<DiffObservations>(samples.size(), cfg.threads, [&](DiffObservations& acc,
                                                                                   std::size_t i) {
    const Sample s = samples.read(i);
    const auto key = resolve(shapes, s.truth, cfg.merge_tolerance);
    if (!key) {
      ++acc.skipped_unresolved;
      return;
    }
    const ShapeEntry* entry = shapes.find(*key);
    const BlockSumImage bsi = downscale(s.image, cfg.downscale_factor);
    DiffCache cache;
    const DifferenceVector dv = extract(bsi, as_point(key->position), entry->landmarks, cache, cfg.radial_step);
    if (dv.valid_count() < kLandmarkCount) {
      ++acc.skipped_partial;
      return;
    }
    acc.buckets[*key].push_back(dv.values);
  });
  DiffObservations out;
  for (auto& p : parts) out.merge(std::move(p));
  return out;
}

std::vector<DifferenceSet> mean_shift(std::span<const DiffValues> observations, double bandwidth,
                                      int max_clusters) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InvalidArgument("mean-shift bandwidth must be > 0");
  if (observations.empty()) throw InvalidArgument("mean shift needs at least one observation");
  if (max_clusters < 1) throw InvalidArgument("max_clusters must be >= 1");

  using Vec = std::array<double, kLandmarkCount>;
  constexpr double kConverged = 0.1;
  constexpr int kMaxIterations = 100;

  // Identical observations collapse into one weighted point.
  std::vector<DiffValues> sorted(observations.begin(), observations.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<Vec> points;
  std::vector<double> weights;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    Vec p;
    for (int k = 0; k < kLandmarkCount; ++k) p[k] = sorted[i][k];
    points.push_back(p);
    weights.push_back(static_cast<double>(j - i));
    i = j;
  }

  auto dist2 = [](const Vec& l, const Vec& r) {
    double d = 0.0;
    for (int k = 0; k < kLandmarkCount; ++k) d += (l[k] - r[k]) * (l[k] - r[k]);
    return d;
  };

  const double bw2 = bandwidth * bandwidth;
  std::vector<Vec> converged(points.size());
  for (std::size_t u = 0; u < points.size(); ++u) {
    Vec p = points[u];
    for (int iter = 0; iter < kMaxIterations; ++iter) {
      Vec sum{};
      double w = 0.0;
      for (std::size_t q = 0; q < points.size(); ++q) {
        if (dist2(p, points[q]) <= bw2) {
          for (int k = 0; k < kLandmarkCount; ++k) sum[k] += weights[q] * points[q][k];
          w += weights[q];
        }
      }
      Vec next;
      for (int k = 0; k < kLandmarkCount; ++k) next[k] = sum[k] / w;
      const double shift = std::sqrt(dist2(next, p));
      p = next;
      if (shift < kConverged) break;
    }
    converged[u] = p;
  }

  struct Mode {
    Vec anchor;
    Vec sum{};
    double members = 0.0;
  };
  const double merge2 = (bandwidth / 2.0) * (bandwidth / 2.0);
  std::vector<Mode> modes;
  for (std::size_t u = 0; u < points.size(); ++u) {
    auto home = std::find_if(modes.begin(), modes.end(),
                             [&](const Mode& m) { return dist2(m.anchor, converged[u]) <= merge2; });
    if (home == modes.end()) {
      modes.push_back({converged[u]});
      home = std::prev(modes.end());
    }
    for (int k = 0; k < kLandmarkCount; ++k) home->sum[k] += weights[u] * converged[u][k];
    home->members += weights[u];
  }

  std::vector<DifferenceSet> out;
  out.reserve(modes.size());
  for (const Mode& m : modes) {
    DifferenceSet d;
    for (int k = 0; k < kLandmarkCount; ++k) {
      d.values[k] = static_cast<std::int32_t>(round_half_away(m.sum[k] / m.members));
    }
    d.members = static_cast<std::int64_t>(m.members);
    out.push_back(d);
  }
  std::sort(out.begin(), out.end(), [](const DifferenceSet& l, const DifferenceSet& r) {
    if (l.members != r.members) return l.members > r.members;
    return l.values < r.values;
  });
  if (out.size() > static_cast<std::size_t>(max_clusters)) out.resize(static_cast<std::size_t>(max_clusters));
  return out;
}

DifferenceSets cluster_differences(const DiffObservations& obs, const TrainConfig& cfg) {
  std::vector<const std::pair<const EntryKey, std::vector<DiffValues>>*> buckets;
  for (const auto& b : obs.buckets) {
    if (!b.second.empty()) buckets.push_back(&b);
  }
  std::vector<std::vector<DifferenceSet>> protos(buckets.size());
  const double bw = cfg.bandwidth();
  parallel_for(buckets.size(), cfg.threads,
               [&](std::size_t i) { protos[i] = mean_shift(buckets[i]->second, bw, cfg.max_clusters); });
  DifferenceSets out;
  for (std::size_t i = 0; i < buckets.size(); ++i) out.emplace(buckets[i]->first, std::move(protos[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Pass 3

void WeightAccumulators::merge(const WeightAccumulators& other) {
  for (const auto& [key, list] : other.acc) {
    auto& dst = acc[key];
    if (dst.size() < list.size()) dst.resize(list.size(), SignAccumulator{});
    for (std::size_t j = 0; j < list.size(); ++j) {
      for (int k = 0; k < kLandmarkCount; ++k) dst[j][k] += list[j][k];
    }
  }
  skipped_unresolved += other.skipped_unresolved;
  skipped_no_prototypes += other.skipped_no_prototypes;
}

int nearest_prototype(std::span<const DifferenceSet> prototypes, const DiffValues& obs,
                      const std::array<bool, kLandmarkCount>& valid) {
  int best = 0;
  std::int64_t best_dist = -1;
  for (std::size_t j = 0; j < prototypes.size(); ++j) {
    std::int64_t d = 0;
    for (int k = 0; k < kLandmarkCount; ++k) {
      if (valid[k]) d += std::abs(static_cast<std::int64_t>(prototypes[j].values[k]) - obs[k]);
    }
    if (best_dist < 0 || d < best_dist) {
      best_dist = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

void accumulate_signs(SignAccumulator& acc, const DiffValues& prototype, const DiffValues& obs,
                      const std::array<bool, kLandmarkCount>& valid) {
  for (int k = 0; k < kLandmarkCount; ++k) {
    if (!valid[k]) continue;
    acc[k] += sign_of(prototype[k]) == sign_of(obs[k]) ? 1 : -1;
  }
}

WeightAccumulators pass3_accumulate(const SampleSource& samples, const ShapeDistribution& shapes,
                                    const DifferenceSets& diffsets, const TrainConfig& cfg) {
  auto parts = accumulate_chunks<WeightAccumulators>(samples.size(), cfg.threads, [&](WeightAccumulators& acc,
                                                                                     std::size_t i) {
    const Sample s = samples.read(i);
    const auto key = resolve(shapes, s.truth, cfg.merge_tolerance);
    if (!key) {
      ++acc.skipped_unresolved;
      return;
    }
    auto protos = diffsets.find(*key);
    if (protos == diffsets.end() || protos->second.empty()) {
      ++acc.skipped_no_prototypes;
      return;
    }
    const ShapeEntry* entry = shapes.find(*key);
    const BlockSumImage bsi = downscale(s.image, cfg.downscale_factor);
    DiffCache cache;
    const DifferenceVector dv = extract(bsi, as_point(key->position), entry->landmarks, cache, cfg.radial_step);
    if (dv.valid_count() == 0) {
      ++acc.skipped_unresolved;
      return;
    }
    const int j = nearest_prototype(protos->second, dv.values, dv.valid);
    auto& slots = acc.acc[*key];
    if (slots.size() < protos->second.size()) slots.resize(protos->second.size(), SignAccumulator{});
    accumulate_signs(slots[static_cast<std::size_t>(j)], protos->second[static_cast<std::size_t>(j)].values, dv.values,
                     dv.valid);
  });
  WeightAccumulators out;
  for (const auto& p : parts) out.merge(p);
  return out;
}

WeightVector finalize_weights(const SignAccumulator& acc, const TrainConfig& cfg) {
  WeightVector w{};
  double sum = 0.0;
  for (int k = 0; k < kLandmarkCount; ++k) {
    w[k] = std::max(static_cast<double>(acc[k]), cfg.raw_weight_floor);
    sum += w[k];
  }
  const double keep = 1.0 - kLandmarkCount * cfg.weight_floor;
  for (double& v : w) v = cfg.weight_floor + keep * (v / sum);
  return w;
}

FeatureWeights pass3_weights(const SampleSource& samples, const ShapeDistribution& shapes,
                             const DifferenceSets& diffsets, const TrainConfig& cfg, WeightAccumulators* stats) {
  WeightAccumulators acc = pass3_accumulate(samples, shapes, diffsets, cfg);
  FeatureWeights out;
  for (const auto& [key, protos] : diffsets) {
    std::vector<WeightVector> ws;
    auto it = acc.acc.find(key);
    for (std::size_t j = 0; j < protos.size(); ++j) {
      SignAccumulator a{};
      if (it != acc.acc.end() && j < it->second.size()) a = it->second[j];
      ws.push_back(finalize_weights(a, cfg));
    }
    out.emplace(key, std::move(ws));
  }
  if (stats) *stats = std::move(acc);
  return out;
}

// ---------------------------------------------------------------------------

PupilModel train(const SampleSource& samples, const TrainConfig& cfg, TrainReport* report) {
  check_config(cfg);
  const std::size_t n = samples.size();
  if (n == 0) throw InvalidArgument("empty dataset");

  TrainReport rep;
  rep.samples = n;
  rep.bandwidth = cfg.bandwidth();
  const auto t_start = Clock::now();

  // Pass 1: annotations only, but every sample is read once.
  struct Pass1Part {
    RawShapeCounts counts;
    int width = 0;
    int height = 0;
    bool mixed = false;
  };
  auto t0 = Clock::now();
  auto parts = accumulate_chunks<Pass1Part>(n, cfg.threads, [&](Pass1Part& acc, std::size_t i) {
    const Sample s = samples.read(i);
    if (acc.width == 0) {
      acc.width = s.image.width();
      acc.height = s.image.height();
    } else if (acc.width != s.image.width() || acc.height != s.image.height()) {
      acc.mixed = true;
    }
    acc.counts.add(s.truth, s.image.width(), s.image.height());
  });
  RawShapeCounts raw;
  for (const Pass1Part& p : parts) {
    if (p.mixed || p.width != parts.front().width || p.height != parts.front().height) {
      throw DataError("training images have differing dimensions");
    }
    raw.merge(p.counts);
  }
  rep.frame_width = parts.front().width;
  rep.frame_height = parts.front().height;
  if (rep.frame_width < 16 || rep.frame_height < 16) throw DataError("training images smaller than 16x16");
  rep.pass1_skipped = raw.skipped;
  rep.raw_shapes = raw.shapes.size();
  rep.pass1_ms = ms_since(t0);

  t0 = Clock::now();
  const ShapeDistribution reduced = reduce_shapes(raw, cfg);
  rep.reduced_entries = reduced.entry_count();
  rep.reduce_ms = ms_since(t0);

  t0 = Clock::now();
  const DiffObservations obs = pass2_diffs(samples, reduced, cfg);
  rep.pass2_skipped_unresolved = obs.skipped_unresolved;
  rep.pass2_skipped_partial = obs.skipped_partial;
  for (const auto& [key, list] : obs.buckets) rep.observations += list.size();
  rep.pass2_ms = ms_since(t0);

  t0 = Clock::now();
  const DifferenceSets diffsets = cluster_differences(obs, cfg);
  rep.cluster_ms = ms_since(t0);

  t0 = Clock::now();
  WeightAccumulators stats;
  const FeatureWeights weights = pass3_weights(samples, reduced, diffsets, cfg, &stats);
  rep.pass3_skipped_unresolved = stats.skipped_unresolved;
  rep.pass3_skipped_no_prototypes = stats.skipped_no_prototypes;
  rep.pass3_ms = ms_since(t0);

  // Keep only entries with prototypes; renumber ids densely in their order.
  PupilModel model;
  model.config.downscale_factor = static_cast<std::uint32_t>(cfg.downscale_factor);
  model.config.radial_step = static_cast<std::uint32_t>(cfg.radial_step);
  model.config.frame_width = static_cast<std::uint32_t>(rep.frame_width);
  model.config.frame_height = static_cast<std::uint32_t>(rep.frame_height);
  model.config.min_valid = static_cast<std::uint32_t>(cfg.min_valid);
  std::int64_t total = 0;
  for (const auto& [pos, list] : reduced.entries) {
    std::vector<ShapeEntry> kept;
    for (const ShapeEntry& e : list) {
      const EntryKey old_key{pos, e.id};
      auto ds = diffsets.find(old_key);
      if (ds == diffsets.end()) {
        ++rep.entries_pruned;
        continue;
      }
      ShapeEntry entry = e;
      entry.id = static_cast<int>(kept.size());
      const EntryKey key{pos, entry.id};
      model.diffsets.emplace(key, ds->second);
      model.weights.emplace(key, weights.at(old_key));
      rep.prototypes += ds->second.size();
      total += entry.count;
      kept.push_back(entry);
    }
    if (!kept.empty()) model.shapes.entries.emplace(pos, std::move(kept));
  }
  if (total == 0) throw DataError("no training sample produced a complete landmark observation");
  model.shapes.total_count = total;
  for (auto& [pos, list] : model.shapes.entries) {
    for (ShapeEntry& e : list) e.probability = static_cast<double>(e.count) / static_cast<double>(total);
  }
  rep.positions = model.shapes.entries.size();
  rep.entries = model.shapes.entry_count();
  rep.total_ms = ms_since(t_start);

  validate(model);
  if (report) *report = rep;
  return model;
}

void write_report(const std::filesystem::path& path, const TrainReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training report " + path.string());
  out << "samples: " << r.samples << '\n'
      << "frame_width: " << r.frame_width << '\n'
      << "frame_height: " << r.frame_height << '\n'
      << "mean_shift_bandwidth: " << r.bandwidth << '\n'
      << "pass1_skipped: " << r.pass1_skipped << '\n'
      << "raw_shapes: " << r.raw_shapes << '\n'
      << "reduced_entries: " << r.reduced_entries << '\n'
      << "pass2_skipped_unresolved: " << r.pass2_skipped_unresolved << '\n'
      << "pass2_skipped_partial: " << r.pass2_skipped_partial << '\n'
      << "pass2_observations: " << r.observations << '\n'
      << "pass3_skipped_unresolved: " << r.pass3_skipped_unresolved << '\n'
      << "pass3_skipped_no_prototypes: " << r.pass3_skipped_no_prototypes << '\n'
      << "entries_pruned: " << r.entries_pruned << '\n'
      << "positions: " << r.positions << '\n'
      << "entries: " << r.entries << '\n'
      << "prototypes: " << r.prototypes << '\n'
      << "pass1_ms: " << r.pass1_ms << '\n'
      << "reduce_ms: " << r.reduce_ms << '\n'
      << "pass2_ms: " << r.pass2_ms << '\n'
      << "cluster_ms: " << r.cluster_ms << '\n'
      << "pass3_ms: " << r.pass3_ms << '\n'
      << "total_ms: " << r.total_ms << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace spup
