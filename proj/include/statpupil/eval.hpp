#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "statpupil/core.hpp"
#include "statpupil/detect.hpp"

namespace spup {

struct FrameResult {
  std::string id;
  Ellipse truth;
  std::optional<Ellipse> detection;
  double iou = 0.0;
  double center_error = 0.0;  // +inf when there is no detection
  double detect_time_us = 0.0;

  bool failed() const { return !detection.has_value(); }
};

/// Mask IoU at frame resolution; 0 when both masks are empty.
double iou(const Ellipse& truth, const Ellipse& det, int width, int height);

double center_error(const Ellipse& truth, const Ellipse& det);

FrameResult make_result(std::string id, const Ellipse& truth, const std::optional<Ellipse>& det, int width,
                        int height, double detect_time_us = 0.0);

enum class Metric { CenterError, Iou };

struct CurveRow {
  double threshold = 0.0;
  double fraction = 0.0;
};

/// Thresholds 0..15 step 1 for center error, 0..1 step 0.05 for IoU.
std::vector<double> default_thresholds(Metric m);

/// Fraction of all frames with error <= t (center error) or IoU >= t. Frames
/// without a detection never reach a threshold.
std::vector<CurveRow> cumulative_curve(std::span<const FrameResult> results, Metric m,
                                       std::span<const double> thresholds);

inline constexpr int kGridCells = 10;
inline constexpr double kGridErrorClip = 10.0;

struct GridCell {
  std::size_t count = 0;       // frames whose truth center falls in the cell
  std::size_t detected = 0;    // of those, frames with a detection
  std::optional<double> mean;  // absent when nothing was detected in the cell
};

struct GridMap {
  Metric metric = Metric::CenterError;
  std::array<std::array<GridCell, kGridCells>, kGridCells> cells{};  // [row][col]

  std::size_t total_count() const;
};

std::pair<int, int> grid_cell(const Ellipse& truth, int width, int height);

/// Per-cell means; center errors are clipped at 10 px before averaging.
GridMap grid_map(std::span<const FrameResult> results, Metric m, int width, int height);

struct Summary {
  std::size_t frames = 0;
  std::size_t failures = 0;
  double failure_rate = 0.0;
  double mean_iou = 0.0;
  double mean_center_error = 0.0;
  double within_2px = 0.0;  // fraction of all frames with center error <= 2
};

Summary summarize(std::span<const FrameResult> results);

struct BenchReport {
  std::size_t frames = 0;
  int repetitions = 0;
  std::size_t warmup = 0;
  std::size_t samples = 0;
  double median_us = 0.0;
  double p95_us = 0.0;
  double mean_us = 0.0;
  double min_us = 0.0;
  double max_us = 0.0;
  std::size_t candidates = 0;
  std::size_t differences = 0;
};

/// Single-threaded wall clock per Detector::detect call. The first 10 calls
/// are warmup and are not recorded.
BenchReport bench(const Detector& detector, std::span<const GrayImage> frames, int repetitions);

inline constexpr std::size_t kBenchWarmup = 10;
inline constexpr std::size_t kBenchMinFrames = 100;
/// Reference single-core execution time of the original method, in ms.
inline constexpr double kReferenceExecutionMs = 0.9;

/// One line of `detect` output: `filename cx cy a b theta score`, or
/// `filename none` when nothing was found.
struct DetectionLine {
  std::string filename;
  std::optional<Ellipse> ellipse;
  double score = 0.0;

  friend bool operator==(const DetectionLine&, const DetectionLine&) = default;
};

std::string format_detection_line(const std::string& filename, const std::optional<Detection>& det);
DetectionLine parse_detection_line(const std::string& line);
/// Blank lines are skipped; errors name the file and line.
std::vector<DetectionLine> read_detections(const std::filesystem::path& path);

void write_curve_csv(const std::filesystem::path& path, std::span<const CurveRow> rows, Metric m);
void write_grid_csv(const std::filesystem::path& path, const GridMap& grid);
void write_summary(const std::filesystem::path& path, const Summary& s);
void write_bench_report(const std::filesystem::path& path, const BenchReport& r);

}  // namespace spup
