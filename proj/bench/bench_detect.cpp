// Reference detector vs indexed serial detector vs OpenMP frame-parallel
// batch, on the default synthetic distribution.

#include <benchmark/benchmark.h>

#include <omp.h>

#include <cstdlib>
#include <iostream>
#include <vector>

#include "statpupil/detect.hpp"
#include "statpupil/synth.hpp"
#include "statpupil/train.hpp"

namespace {

using namespace spup;

struct Fixture {
  PupilModel model;
  std::vector<GrayImage> frames;

  Fixture() {
    DatasetSpec train_spec;
    train_spec.frames = 2500;
    train_spec.seed = 11;
    MemorySource src(generate_samples(train_spec));
    model = train(src, TrainConfig{});
    DatasetSpec test_spec;
    test_spec.frames = 200;
    test_spec.seed = 9999;
    for (Sample& s : generate_samples(test_spec)) frames.push_back(std::move(s.image));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_DetectOracle(benchmark::State& state) {
  const Fixture& f = fixture();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(detect_oracle(f.frames[i++ % f.frames.size()], f.model));
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_DetectIndexed(benchmark::State& state) {
  const Fixture& f = fixture();
  const Detector det(f.model);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(det.detect(f.frames[i++ % f.frames.size()]));
  state.SetItemsProcessed(state.iterations());
}

void BM_DetectSerialBatch(benchmark::State& state) {
  const Fixture& f = fixture();
  const Detector det(f.model);
  for (auto _ : state) benchmark::DoNotOptimize(detect_serial(det, f.frames));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.frames.size()));
}

void BM_DetectOpenMPBatch(benchmark::State& state) {
  const Fixture& f = fixture();
  const Detector det(f.model);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(detect_batch(det, f.frames, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.frames.size()));
  state.counters["threads"] = threads;
}

void thread_counts(benchmark::internal::Benchmark* b) {
  const int max = omp_get_max_threads();
  for (int t = 1; t < max; t *= 2) b->Arg(t);
  b->Arg(max);
}

BENCHMARK(BM_DetectOracle)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DetectIndexed)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DetectSerialBatch)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DetectOpenMPBatch)->Apply(thread_counts)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

int main(int argc, char** argv) {
  // results must agree before timing means anything
  const Fixture& f = fixture();
  const Detector det(f.model);
  const auto serial = detect_serial(det, f.frames);
  if (detect_batch(det, f.frames) != serial) {
    std::cerr << "OpenMP batch disagrees with the serial loop\n";
    return EXIT_FAILURE;
  }
  for (std::size_t i = 0; i < f.frames.size(); ++i) {
    if (detect_oracle(f.frames[i], f.model) != serial[i]) {
      std::cerr << "indexed detector disagrees with the reference on frame " << i << '\n';
      return EXIT_FAILURE;
    }
  }
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return EXIT_FAILURE;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return EXIT_SUCCESS;
}
