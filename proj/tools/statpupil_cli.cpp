#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "statpupil/dataset.hpp"
#include "statpupil/detect.hpp"
#include "statpupil/error.hpp"
#include "statpupil/eval.hpp"
#include "statpupil/model_io.hpp"
#include "statpupil/synth.hpp"
#include "statpupil/train.hpp"

namespace fs = std::filesystem;
using namespace spup;

namespace {

struct SynthArgs {
  std::size_t frames = 500;
  std::uint64_t seed = 1;
  int variants = 5;
  bool no_augment = false;
  int width = 192;
  int height = 144;
  double eyelid = 0.0;
  int grid = 0;
  int threads = 0;
  fs::path out;
};

struct TrainArgs {
  fs::path data;
  fs::path out;
  fs::path report;
  TrainConfig cfg;
};

struct DetectArgs {
  fs::path model;
  fs::path data;
  std::vector<fs::path> images;
  fs::path out;
  double max_score = std::numeric_limits<double>::infinity();
  int threads = 0;
};

struct EvalArgs {
  fs::path model;
  fs::path data;
  fs::path detections;
  fs::path out = "eval_out";
  double max_score = std::numeric_limits<double>::infinity();
  int threads = 0;
};

struct BenchArgs {
  fs::path model;
  fs::path data;
  fs::path out;
  int repetitions = 5;
};

std::optional<Detection> filtered(std::optional<Detection> d, double max_score) {
  if (d && d->score > max_score) return std::nullopt;
  return d;
}

std::vector<GrayImage> read_frames(const fs::path& dir, const std::vector<fs::path>& files) {
  std::vector<GrayImage> frames;
  frames.reserve(files.size());
  for (const fs::path& f : files) frames.push_back(read_image(dir.empty() ? f : dir / f));
  return frames;
}

int run_synth(const SynthArgs& a) {
  DatasetSpec spec;
  spec.frames = a.frames;
  spec.seed = a.seed;
  spec.variants = a.variants;
  spec.augmented = !a.no_augment;
  spec.sampler.width = a.width;
  spec.sampler.height = a.height;
  spec.sampler.eyelid_probability = a.eyelid;
  spec.sampler.grid = a.grid;
  make_dataset(a.out, spec, a.threads);
  std::cerr << "wrote " << a.frames << " frames to " << a.out.string() << '\n';
  return 0;
}

int run_train(TrainArgs a) {
  DirectorySource src(a.data);
  TrainReport report;
  const PupilModel model = train(src, a.cfg, &report);
  save(model, a.out);
  if (a.report.empty()) a.report = fs::path(a.out.string() + ".report.txt");
  write_report(a.report, report);
  std::cerr << "model: " << report.entries << " entries at " << report.positions << " positions, "
            << report.prototypes << " prototypes -> " << a.out.string() << '\n';
  return 0;
}

int run_detect(const DetectArgs& a) {
  const PupilModel model = load(a.model);
  std::vector<fs::path> names;
  if (!a.data.empty()) {
    for (const Annotation& row : read_annotations(a.data / kAnnotationFile)) names.push_back(row.filename);
  }
  names.insert(names.end(), a.images.begin(), a.images.end());
  if (names.empty()) throw InvalidArgument("detect needs --data or at least one image");

  const std::vector<GrayImage> frames = read_frames(a.data, names);
  const Detector detector(model);
  const auto results = detect_batch(detector, frames, a.threads);

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw IoError("cannot write " + a.out.string());
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << format_detection_line(names[i].string(), filtered(results[i], a.max_score)) << '\n';
  }
  if (!out) throw IoError("write failed for detections");
  return 0;
}

int run_eval(const EvalArgs& a) {
  if (a.model.empty() == a.detections.empty()) throw InvalidArgument("eval needs exactly one of --model or --detections");
  const DirectorySource src(a.data);
  const auto& rows = src.annotations();
  if (rows.empty()) throw DataError("no annotated frames in " + a.data.string());
  const GrayImage first = read_image(a.data / rows.front().filename);
  const int w = first.width();
  const int h = first.height();

  std::vector<std::optional<Ellipse>> found(rows.size());
  if (!a.model.empty()) {
    std::vector<fs::path> names;
    for (const Annotation& r : rows) names.push_back(r.filename);
    const std::vector<GrayImage> frames = read_frames(a.data, names);
    const Detector detector(load(a.model));
    const auto dets = detect_batch(detector, frames, a.threads);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (auto d = filtered(dets[i], a.max_score)) found[i] = d->ellipse;
    }
  } else {
    std::map<std::string, DetectionLine> by_name;
    for (DetectionLine& d : read_detections(a.detections)) by_name[d.filename] = std::move(d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto it = by_name.find(rows[i].filename);
      if (it == by_name.end()) throw DataError(a.detections.string() + ": no line for frame " + rows[i].filename);
      if (it->second.ellipse && it->second.score <= a.max_score) found[i] = it->second.ellipse;
    }
  }

  std::vector<FrameResult> results;
  results.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    results.push_back(make_result(rows[i].filename, rows[i].ellipse, found[i], w, h));
  }

  fs::create_directories(a.out);
  for (Metric m : {Metric::CenterError, Metric::Iou}) {
    const std::string tag = m == Metric::CenterError ? "center_error" : "iou";
    const auto thresholds = default_thresholds(m);
    write_curve_csv(a.out / ("curve_" + tag + ".csv"), cumulative_curve(results, m, thresholds), m);
    write_grid_csv(a.out / ("grid_" + tag + ".csv"), grid_map(results, m, w, h));
  }
  const Summary s = summarize(results);
  write_summary(a.out / "summary.txt", s);
  std::printf("frames %zu  failures %zu  within_2px %.4f  mean_iou %.4f\n", s.frames, s.failures, s.within_2px,
              s.mean_iou);
  return 0;
}

int run_bench(const BenchArgs& a) {
  const Detector detector(load(a.model));
  const DirectorySource src(a.data);
  std::vector<fs::path> names;
  for (const Annotation& r : src.annotations()) names.push_back(r.filename);
  const BenchReport r = bench(detector, read_frames(a.data, names), a.repetitions);
  if (!a.out.empty()) write_bench_report(a.out, r);
  std::printf("median %.1f us  p95 %.1f us  over %zu calls (reference %.1f ms)\n", r.median_us, r.p95_us, r.samples,
              kReferenceExecutionMs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trained ellipse-landmark pupil detector"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Render a synthetic annotated dataset");
  synth->add_option("--n", sa.frames, "Number of frames")->check(CLI::PositiveNumber);
  synth->add_option("--seed", sa.seed, "Random seed");
  synth->add_option("--variants", sa.variants, "Augmented variants per scene")->check(CLI::PositiveNumber);
  synth->add_flag("--no-augment", sa.no_augment, "Write unaugmented renders");
  synth->add_option("--width", sa.width, "Frame width");
  synth->add_option("--height", sa.height, "Frame height");
  synth->add_option("--eyelid", sa.eyelid, "Probability of an occluding eyelid")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--grid", sa.grid, "Draw pupil centers from a grid x grid lattice");
  synth->add_option("--threads", sa.threads, "Worker threads (0 = all)");
  synth->add_option("--out", sa.out, "Output directory")->required();

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train a model from an annotated dataset");
  trainc->add_option("--data", ta.data, "Dataset directory")->required();
  trainc->add_option("--out", ta.out, "Model file")->required();
  trainc->add_option("--report", ta.report, "Training report (default <out>.report.txt)");
  trainc->add_option("--factor", ta.cfg.downscale_factor, "Block-sum downscale factor");
  trainc->add_option("--radial-step", ta.cfg.radial_step, "Landmark sampling distance in blocks");
  trainc->add_option("--bandwidth", ta.cfg.mean_shift_bandwidth, "Mean-shift bandwidth (<= 0: default)");
  trainc->add_option("--max-clusters", ta.cfg.max_clusters, "Prototypes kept per ellipse");
  trainc->add_option("--min-count", ta.cfg.min_count, "Drop reduced shapes seen fewer times");
  trainc->add_option("--min-valid", ta.cfg.min_valid, "Landmarks required to score a candidate");
  trainc->add_option("--threads", ta.cfg.threads, "Worker threads (0 = all)");

  DetectArgs da;
  auto* detectc = app.add_subcommand("detect", "Detect pupils; prints `filename cx cy a b theta score`");
  detectc->add_option("--model", da.model, "Model file")->required();
  detectc->add_option("--data", da.data, "Dataset directory (frames listed in annotations.txt)");
  detectc->add_option("images", da.images, "Image files");
  detectc->add_option("--out", da.out, "Write lines here instead of standard output");
  detectc->add_option("--max-score", da.max_score, "Report `none` above this score");
  detectc->add_option("--threads", da.threads, "Frames detected in parallel (0 = all)");

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Score detections against annotations");
  evalc->add_option("--model", ea.model, "Model file (detect every frame)");
  evalc->add_option("--detections", ea.detections, "Saved detect output");
  evalc->add_option("--data", ea.data, "Annotated dataset directory")->required();
  evalc->add_option("--out", ea.out, "Directory for curves, grids and summary");
  evalc->add_option("--max-score", ea.max_score, "Treat detections above this score as failures");
  evalc->add_option("--threads", ea.threads, "Frames detected in parallel (0 = all)");

  BenchArgs ba;
  auto* benchc = app.add_subcommand("bench", "Single-core detection latency");
  benchc->add_option("--model", ba.model, "Model file")->required();
  benchc->add_option("--data", ba.data, "Dataset directory (>= 100 frames)")->required();
  benchc->add_option("--reps", ba.repetitions, "Passes over the frames");
  benchc->add_option("--out", ba.out, "Report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*trainc) return run_train(ta);
    if (*detectc) return run_detect(da);
    if (*evalc) return run_eval(ea);
    return run_bench(ba);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
