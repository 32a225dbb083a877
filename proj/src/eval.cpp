#include "statpupil/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "statpupil/dataset.hpp"
#include "statpupil/error.hpp"

namespace spup {

double iou(const Ellipse& truth, const Ellipse& det, int width, int height) {
  const EllipseMask a = rasterize(truth, width, height);
  const EllipseMask b = rasterize(det, width, height);
  std::size_t inter = 0;
  std::size_t uni = 0;
  const auto ab = a.bits();
  const auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += ab[i] & bb[i];
    uni += ab[i] | bb[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double center_error(const Ellipse& truth, const Ellipse& det) {
  return std::hypot(det.cx - truth.cx, det.cy - truth.cy);
}

FrameResult make_result(std::string id, const Ellipse& truth, const std::optional<Ellipse>& det, int width,
                        int height, double detect_time_us) {
  FrameResult r;
  r.id = std::move(id);
  r.truth = truth;
  r.detection = det;
  r.detect_time_us = detect_time_us;
  if (det) {
    r.iou = iou(truth, *det, width, height);
    r.center_error = center_error(truth, *det);
  } else {
    r.iou = 0.0;
    r.center_error = std::numeric_limits<double>::infinity();
  }
  return r;
}

std::vector<double> default_thresholds(Metric m) {
  std::vector<double> t;
  if (m == Metric::CenterError) {
    for (int i = 0; i <= 15; ++i) t.push_back(i);
  } else {
    for (int i = 0; i <= 20; ++i) t.push_back(i * 0.05);
  }
  return t;
}

std::vector<CurveRow> cumulative_curve(std::span<const FrameResult> results, Metric m,
                                       std::span<const double> thresholds) {
  if (results.empty()) throw InvalidArgument("cumulative curve needs at least one result");
  std::vector<CurveRow> rows;
  rows.reserve(thresholds.size());
  for (double t : thresholds) {
    std::size_t hits = 0;
    for (const FrameResult& r : results) {
      if (r.failed()) continue;
      const bool hit = m == Metric::CenterError ? r.center_error <= t : r.iou >= t;
      hits += hit ? 1 : 0;
    }
    rows.push_back({t, static_cast<double>(hits) / static_cast<double>(results.size())});
  }
  return rows;
}

std::size_t GridMap::total_count() const {
  std::size_t n = 0;
  for (const auto& row : cells) {
    for (const GridCell& c : row) n += c.count;
  }
  return n;
}

std::pair<int, int> grid_cell(const Ellipse& truth, int width, int height) {
  const int col = std::clamp(static_cast<int>(std::floor(kGridCells * truth.cx / width)), 0, kGridCells - 1);
  const int row = std::clamp(static_cast<int>(std::floor(kGridCells * truth.cy / height)), 0, kGridCells - 1);
  return {row, col};
}

GridMap grid_map(std::span<const FrameResult> results, Metric m, int width, int height) {
  if (results.empty()) throw InvalidArgument("grid map needs at least one result");
  GridMap grid;
  grid.metric = m;
  std::array<std::array<double, kGridCells>, kGridCells> sums{};
  for (const FrameResult& r : results) {
    const auto [row, col] = grid_cell(r.truth, width, height);
    GridCell& cell = grid.cells[row][col];
    ++cell.count;
    if (r.failed()) continue;
    ++cell.detected;
    sums[row][col] += m == Metric::CenterError ? std::min(r.center_error, kGridErrorClip) : r.iou;
  }
  for (int row = 0; row < kGridCells; ++row) {
    for (int col = 0; col < kGridCells; ++col) {
      GridCell& cell = grid.cells[row][col];
      if (cell.detected > 0) cell.mean = sums[row][col] / static_cast<double>(cell.detected);
    }
  }
  return grid;
}

Summary summarize(std::span<const FrameResult> results) {
  Summary s;
  s.frames = results.size();
  double iou_sum = 0.0;
  double err_sum = 0.0;
  std::size_t within = 0;
  for (const FrameResult& r : results) {
    if (r.failed()) {
      ++s.failures;
      continue;
    }
    iou_sum += r.iou;
    err_sum += r.center_error;
    within += r.center_error <= 2.0 ? 1 : 0;
  }
  const std::size_t ok = s.frames - s.failures;
  if (s.frames > 0) {
    s.failure_rate = static_cast<double>(s.failures) / static_cast<double>(s.frames);
    s.within_2px = static_cast<double>(within) / static_cast<double>(s.frames);
  }
  if (ok > 0) {
    s.mean_iou = iou_sum / static_cast<double>(ok);
    s.mean_center_error = err_sum / static_cast<double>(ok);
  }
  return s;
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

}  // namespace

BenchReport bench(const Detector& detector, std::span<const GrayImage> frames, int repetitions) {
  if (frames.size() < kBenchMinFrames) throw InvalidArgument("bench needs at least 100 frames");
  if (repetitions < 1) throw InvalidArgument("bench repetitions must be >= 1");
  using Clock = std::chrono::steady_clock;

  volatile std::size_t sink = 0;
  for (std::size_t i = 0; i < kBenchWarmup; ++i) sink = sink + detector.detect(frames[i % frames.size()]).has_value();

  std::vector<double> times;
  times.reserve(frames.size() * static_cast<std::size_t>(repetitions));
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const GrayImage& f : frames) {
      const auto t0 = Clock::now();
      const auto det = detector.detect(f);
      const auto t1 = Clock::now();
      sink = sink + det.has_value();
      times.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
  }
  std::sort(times.begin(), times.end());

  BenchReport r;
  r.frames = frames.size();
  r.repetitions = repetitions;
  r.warmup = kBenchWarmup;
  r.samples = times.size();
  r.median_us = percentile(times, 0.5);
  r.p95_us = percentile(times, 0.95);
  double total = 0.0;
  for (double t : times) total += t;
  r.mean_us = total / static_cast<double>(times.size());
  r.min_us = times.front();
  r.max_us = times.back();
  r.candidates = detector.candidate_count();
  r.differences = detector.difference_count();
  return r;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurveRow> rows, Metric m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << (m == Metric::CenterError ? "max_center_error_px" : "min_iou") << ",fraction\n";
  for (const CurveRow& r : rows) out << format_double(r.threshold) << ',' << format_double(r.fraction) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_grid_csv(const std::filesystem::path& path, const GridMap& grid) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "row,col,count,detected," << (grid.metric == Metric::CenterError ? "mean_center_error_px" : "mean_iou")
      << '\n';
  for (int row = 0; row < kGridCells; ++row) {
    for (int col = 0; col < kGridCells; ++col) {
      const GridCell& c = grid.cells[row][col];
      out << row << ',' << col << ',' << c.count << ',' << c.detected << ','
          << (c.mean ? format_double(*c.mean) : std::string()) << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_summary(const std::filesystem::path& path, const Summary& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "frames: " << s.frames << '\n'
      << "failures: " << s.failures << '\n'
      << "failure_rate: " << format_double(s.failure_rate) << '\n'
      << "mean_iou: " << format_double(s.mean_iou) << '\n'
      << "mean_center_error_px: " << format_double(s.mean_center_error) << '\n'
      << "fraction_within_2px: " << format_double(s.within_2px) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_bench_report(const std::filesystem::path& path, const BenchReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "frames: " << r.frames << '\n'
      << "repetitions: " << r.repetitions << '\n'
      << "warmup_calls: " << r.warmup << '\n'
      << "timed_calls: " << r.samples << '\n'
      << "threads: 1\n"
      << "median_us: " << r.median_us << '\n'
      << "p95_us: " << r.p95_us << '\n'
      << "mean_us: " << r.mean_us << '\n'
      << "min_us: " << r.min_us << '\n'
      << "max_us: " << r.max_us << '\n'
      << "candidates: " << r.candidates << '\n'
      << "differences_per_frame: " << r.differences << '\n'
      << "reference_execution_ms: " << kReferenceExecutionMs << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::string format_detection_line(const std::string& filename, const std::optional<Detection>& det) {
  if (!det) return filename + " none";
  const Ellipse& e = det->ellipse;
  return filename + ' ' + format_double(e.cx) + ' ' + format_double(e.cy) + ' ' + format_double(e.a) + ' ' +
         format_double(e.b) + ' ' + format_double(e.theta) + ' ' + format_double(det->score);
}

DetectionLine parse_detection_line(const std::string& line) {
  std::istringstream ss(line);
  DetectionLine out;
  std::vector<std::string> f;
  for (std::string tok; ss >> tok;) f.push_back(tok);
  if (f.size() == 2 && f[1] == "none") {
    out.filename = f[0];
    return out;
  }
  if (f.size() != 7) throw DataError("expected `filename cx cy a b theta score` or `filename none`");
  out.filename = f[0];
  out.ellipse = Ellipse{parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4]),
                        parse_double(f[5])};
  out.score = parse_double(f[6]);
  return out;
}

std::vector<DetectionLine> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detections file " + path.string());
  std::vector<DetectionLine> rows;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(parse_detection_line(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace spup
