#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "statpupil/core.hpp"
#include "statpupil/features.hpp"
#include "statpupil/model.hpp"

namespace spup {

struct Detection {
  Ellipse ellipse;
  Position position;
  int ellipse_id = 0;
  double score = 0.0;
  int prototype_index = 0;
  int valid_landmarks = 0;
  double probability = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct ScoreResult {
  double score = 0.0;
  int prototype = 0;
};

/// Weighted L1 distance of obs to the nearest prototype. Weights are
/// restricted to valid landmarks and renormalized. nullopt when fewer than
/// min_valid landmarks are valid.
std::optional<ScoreResult> score(const DifferenceVector& obs, std::span<const DifferenceSet> prototypes,
                                 std::span<const WeightVector> weights, int min_valid);

/// Total order on candidates: lower score, then higher probability, then scan
/// order (y, x, ellipse id). Returns true when `cand` beats `best`.
bool better_candidate(const Detection& cand, const Detection& best);

/// Indexed detector. Construction flattens the model and precomputes, for the
/// model's frame size, the distinct (inner, outer) block pairs every candidate
/// needs; detection computes each pair once per frame.
class Detector {
 public:
  explicit Detector(const PupilModel& model);

  std::optional<Detection> detect(const GrayImage& img) const;

  std::size_t candidate_count() const { return candidates_.size(); }
  /// Distinct block differences evaluated per frame of the model's frame size.
  std::size_t difference_count() const { return plan_.pairs.size() / 2; }

  struct Plan {
    int block_width = 0;
    int block_height = 0;
    std::vector<std::int32_t> pairs;  // inner0, outer0, inner1, outer1, ...
    std::vector<std::int32_t> slots;  // 8 per candidate, -1 when out of bounds
  };

 private:
  struct Candidate {
    Position position;
    int id = 0;
    Ellipse ellipse;
    double probability = 0.0;
    LandmarkSet landmarks;
    std::size_t first_prototype = 0;
    std::size_t prototype_count = 0;
  };

  Plan make_plan(int block_width, int block_height) const;
  std::optional<Detection> run(const BlockSumImage& bsi, const Plan& plan) const;

  ModelConfig config_;
  std::vector<Candidate> candidates_;
  std::vector<DifferenceSet> prototypes_;
  std::vector<WeightVector> weights_;
  Plan plan_;
};

std::optional<Detection> detect(const GrayImage& img, const PupilModel& model);

/// Reference detector: walks the model tables directly and recomputes every
/// block sum from raw pixels for every landmark, without any sharing.
std::optional<Detection> detect_oracle(const GrayImage& img, const PupilModel& model);

/// Detects every frame; frames are processed in parallel on `threads` OpenMP
/// threads (0 = default). Output order matches input order.
std::vector<std::optional<Detection>> detect_batch(const Detector& detector, std::span<const GrayImage> frames,
                                                   int threads = 0);

/// Serial loop over detect(); the reference for detect_batch.
std::vector<std::optional<Detection>> detect_serial(const Detector& detector, std::span<const GrayImage> frames);

EllipseMask segment(const Detection& det, int width, int height);

}  // namespace spup
