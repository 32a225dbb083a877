#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "statpupil/core.hpp"
#include "statpupil/dataset.hpp"
#include "statpupil/model.hpp"

namespace spup {

struct TrainConfig {
  int downscale_factor = 2;
  int radial_step = 1;
  /// Mean-shift bandwidth in summed-intensity units; <= 0 selects the default
  /// 0.05 * 255 * factor^2.
  double mean_shift_bandwidth = 0.0;
  int max_clusters = kMaxPrototypes;
  int merge_tolerance = 1;
  double raw_weight_floor = 1e-3;
  double weight_floor = 1e-3 / 8.0;
  std::int64_t min_count = 1;
  int min_valid = 5;
  /// 0 = OpenMP default. Output never depends on this.
  int threads = 0;

  double bandwidth() const;
};

/// Fixed number of samples per accumulation chunk. Chunks are the unit of
/// parallel work and are merged in index order.
inline constexpr std::size_t kTrainChunk = 256;

// ---------------------------------------------------------------------------
// Pass 1: shape distribution

struct ShapeKey {
  Position position;
  std::array<Point, kLandmarkCount> offsets{};

  friend bool operator==(const ShapeKey&, const ShapeKey&) = default;
  friend std::strong_ordering operator<=>(const ShapeKey& l, const ShapeKey& r) {
    if (auto c = l.position <=> r.position; c != 0) return c;
    return l.offsets <=> r.offsets;
  }
};

/// Count-weighted parameter sums of all ellipses sharing one ShapeKey. Theta
/// is accumulated as a doubled-angle vector so that averaging respects the
/// pi-periodicity of ellipse orientation.
struct RawShape {
  std::int64_t count = 0;
  LandmarkSet landmarks;
  double sum_cx = 0.0;
  double sum_cy = 0.0;
  double sum_a = 0.0;
  double sum_b = 0.0;
  double sum_cos2 = 0.0;
  double sum_sin2 = 0.0;

  void add(const RawShape& other);
};

struct RawShapeCounts {
  std::map<ShapeKey, RawShape> shapes;
  std::int64_t accepted = 0;
  std::int64_t skipped = 0;

  /// Adds one annotation; rejects (and counts) axes below one pixel and,
  /// when frame dimensions are given, centers outside the frame.
  void add(const Ellipse& e, int frame_width = 0, int frame_height = 0);
  void merge(const RawShapeCounts& other);
};

RawShapeCounts pass1_shapes(std::span<const Ellipse> annotations);

ShapeDistribution reduce_shapes(const RawShapeCounts& raw, const TrainConfig& cfg);

/// The entry an annotation belongs to: the first entry (in id order) at its
/// quantized center whose landmarks are within merge tolerance.
std::optional<EntryKey> resolve(const ShapeDistribution& shapes, const Ellipse& e, int tolerance);

// ---------------------------------------------------------------------------
// Pass 2: difference observations and clustering

struct DiffObservations {
  std::map<EntryKey, std::vector<DiffValues>> buckets;
  std::int64_t skipped_unresolved = 0;
  std::int64_t skipped_partial = 0;

  void merge(DiffObservations&& other);
};

DiffObservations pass2_diffs(const SampleSource& samples, const ShapeDistribution& shapes,
                             const TrainConfig& cfg);

/// Flat-kernel mean shift under L2. Returns at most max_clusters prototypes,
/// sorted by member count (descending) then lexicographically.
std::vector<DifferenceSet> mean_shift(std::span<const DiffValues> observations, double bandwidth,
                                      int max_clusters = kMaxPrototypes);

DifferenceSets cluster_differences(const DiffObservations& obs, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Pass 3: feature weights

using SignAccumulator = std::array<std::int64_t, kLandmarkCount>;

struct WeightAccumulators {
  std::map<EntryKey, std::vector<SignAccumulator>> acc;
  std::int64_t skipped_unresolved = 0;
  std::int64_t skipped_no_prototypes = 0;

  void merge(const WeightAccumulators& other);
};

/// Index of the prototype nearest to obs in unweighted L1 over valid
/// landmarks (lowest index wins ties).
int nearest_prototype(std::span<const DifferenceSet> prototypes, const DiffValues& obs,
                      const std::array<bool, kLandmarkCount>& valid);

/// +1 per valid landmark where the signs agree, -1 where they differ.
void accumulate_signs(SignAccumulator& acc, const DiffValues& prototype, const DiffValues& obs,
                      const std::array<bool, kLandmarkCount>& valid);

WeightAccumulators pass3_accumulate(const SampleSource& samples, const ShapeDistribution& shapes,
                                    const DifferenceSets& diffsets, const TrainConfig& cfg);

/// Clamps raw accumulators to raw_weight_floor, normalizes, then mixes with
/// the uniform vector so that every weight is >= weight_floor.
WeightVector finalize_weights(const SignAccumulator& acc, const TrainConfig& cfg);

FeatureWeights pass3_weights(const SampleSource& samples, const ShapeDistribution& shapes,
                             const DifferenceSets& diffsets, const TrainConfig& cfg,
                             WeightAccumulators* stats = nullptr);

// ---------------------------------------------------------------------------

struct TrainReport {
  std::size_t samples = 0;
  int frame_width = 0;
  int frame_height = 0;
  double bandwidth = 0.0;
  std::int64_t pass1_skipped = 0;
  std::size_t raw_shapes = 0;
  std::size_t reduced_entries = 0;
  std::int64_t pass2_skipped_unresolved = 0;
  std::int64_t pass2_skipped_partial = 0;
  std::size_t observations = 0;
  std::int64_t pass3_skipped_unresolved = 0;
  std::int64_t pass3_skipped_no_prototypes = 0;
  std::size_t entries_pruned = 0;
  std::size_t positions = 0;
  std::size_t entries = 0;
  std::size_t prototypes = 0;
  double pass1_ms = 0.0;
  double reduce_ms = 0.0;
  double pass2_ms = 0.0;
  double cluster_ms = 0.0;
  double pass3_ms = 0.0;
  double total_ms = 0.0;
};

/// Three passes over `samples`. Entries that never received a complete
/// observation in pass 2 are pruned and probabilities renormalized.
PupilModel train(const SampleSource& samples, const TrainConfig& cfg, TrainReport* report = nullptr);

void write_report(const std::filesystem::path& path, const TrainReport& report);

}  // namespace spup
