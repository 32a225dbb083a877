#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "statpupil/error.hpp"
#include "statpupil/features.hpp"
#include "statpupil/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace spup {
namespace {

using testing::add_offset;

RawShapeCounts counts_of(const std::vector<Ellipse>& es) { return pass1_shapes(es); }

double total_probability(const ShapeDistribution& d) {
  double p = 0.0;
  for (const auto& [pos, list] : d.entries) {
    for (const ShapeEntry& e : list) p += e.probability;
  }
  return p;
}

TEST(Pass1, SingleEllipse) {
  const RawShapeCounts raw = counts_of({{20.2, 30.7, 6, 4, 0.5}});
  ASSERT_EQ(raw.shapes.size(), 1u);
  EXPECT_EQ(raw.shapes.begin()->second.count, 1);
  EXPECT_EQ(raw.shapes.begin()->first.position, (Position{20, 31}));
  const ShapeDistribution d = reduce_shapes(raw, {});
  ASSERT_EQ(d.entry_count(), 1u);
  EXPECT_EQ(d.entries.begin()->second[0].probability, 1.0);
}

TEST(Pass1, RepeatedEllipseCountsUp) {
  const RawShapeCounts raw = counts_of(std::vector<Ellipse>(10, {20.2, 30.7, 6, 4, 0.5}));
  ASSERT_EQ(raw.shapes.size(), 1u);
  EXPECT_EQ(raw.shapes.begin()->second.count, 10);
}

TEST(Pass1, DistinctShapesDistinctKeys) {
  const RawShapeCounts raw = counts_of({{20, 30, 6, 6, 0}, {20, 30, 11, 11, 0}});
  EXPECT_EQ(raw.shapes.size(), 2u);
  EXPECT_EQ(reduce_shapes(raw, {}).entry_count(), 2u);
}

TEST(Pass1, RejectsSubPixelAxes) {
  const RawShapeCounts raw = counts_of({{20, 30, 0.5, 0.4, 0}, {20, 30, 3, 0.9, 0}, {20, 30, 3, 2, 0}});
  EXPECT_EQ(raw.skipped, 2);
  EXPECT_EQ(raw.accepted, 1);
}

TEST(Pass1, RejectsCentersOutsideTheFrame) {
  RawShapeCounts raw;
  raw.add({-1.0, 10, 5, 5, 0}, 64, 48);
  raw.add({64.0, 10, 5, 5, 0}, 64, 48);
  raw.add({63.9, 47.9, 5, 5, 0}, 64, 48);
  EXPECT_EQ(raw.skipped, 2);
  EXPECT_EQ(raw.accepted, 1);
}

TEST(Reduce, OffByOneEverywhereMerges) {
  // radius 10 -> (10,0),(7,7),...; radius 11 -> (11,0),(8,8),... : every landmark moves by exactly 1
  const std::vector<Ellipse> es{{30, 30, 10, 10, 0}, {30, 30, 11, 11, 0}};
  const LandmarkSet l0 = ellipse_landmarks(es[0]);
  const LandmarkSet l1 = ellipse_landmarks(es[1]);
  ASSERT_EQ(landmark_distance(l0, l1), 1);
  const ShapeDistribution d = reduce_shapes(counts_of(es), {});
  ASSERT_EQ(d.entry_count(), 1u);
  const ShapeEntry& e = d.entries.begin()->second[0];
  EXPECT_EQ(e.count, 2);
  EXPECT_DOUBLE_EQ(e.ellipse.a, 10.5);
}

TEST(Reduce, OneLandmarkOffByTwoStaysSeparate) {
  const std::vector<Ellipse> es{{30, 30, 10, 8, 0}, {30, 30, 12, 8, 0}};
  ASSERT_EQ(landmark_distance(ellipse_landmarks(es[0]), ellipse_landmarks(es[1])), 2);
  EXPECT_EQ(reduce_shapes(counts_of(es), {}).entry_count(), 2u);
}

TEST(Reduce, EmptyInputRejected) { EXPECT_THROW(reduce_shapes(RawShapeCounts{}, {}), InvalidArgument); }

TEST(Reduce, HeavierShapeAbsorbsLighterNeighbour) {
  std::vector<Ellipse> es(3, Ellipse{30, 30, 10, 10, 0});
  es.push_back({30, 30, 11, 11, 0});
  const ShapeDistribution d = reduce_shapes(counts_of(es), {});
  ASSERT_EQ(d.entry_count(), 1u);
  const ShapeEntry& e = d.entries.begin()->second[0];
  EXPECT_EQ(e.landmarks, ellipse_landmarks(es[0]));
  EXPECT_DOUBLE_EQ(e.ellipse.a, (3 * 10.0 + 11.0) / 4);
}

TEST(Reduce, MinCountDropsAndRenormalizes) {
  std::vector<Ellipse> es(3, Ellipse{30, 30, 10, 10, 0});
  es.push_back({50, 30, 6, 6, 0});
  TrainConfig cfg;
  cfg.min_count = 2;
  const ShapeDistribution d = reduce_shapes(counts_of(es), cfg);
  ASSERT_EQ(d.entry_count(), 1u);
  EXPECT_EQ(d.total_count, 3);
  EXPECT_EQ(d.entries.begin()->second[0].probability, 1.0);
}

TEST(Reduce, ThreeSeparatedClustersGiveThreeEntries) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> jitter(0.0, 0.12);
  const double radii[3][2] = {{8, 6}, {14, 11}, {22, 17}};
  std::vector<Ellipse> es;
  for (int i = 0; i < 1000; ++i) {
    const auto& r = radii[i % 3];
    es.push_back(canonical({40.1, 40.2, r[0] + jitter(rng), r[1] + jitter(rng), 0.3 + jitter(rng) * 0.1}));
  }
  const RawShapeCounts raw = counts_of(es);
  std::vector<LandmarkSet> distinct;
  for (const auto& [key, s] : raw.shapes) distinct.push_back(s.landmarks);
  const std::size_t oracle = oracle::merge_components(distinct, 1);
  ASSERT_EQ(oracle, 3u);
  const ShapeDistribution d = reduce_shapes(raw, {});
  EXPECT_EQ(d.entry_count(), oracle);
  EXPECT_NEAR(total_probability(d), 1.0, 1e-12);
}

TEST(Reduce, OutputIsMergeClosedAndConsistent) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> c(20.0, 26.0);
  std::uniform_real_distribution<double> ax(4.0, 12.0);
  std::uniform_real_distribution<double> th(0.0, 3.14);
  std::vector<Ellipse> es;
  for (int i = 0; i < 3000; ++i) es.push_back(canonical({c(rng), c(rng), ax(rng), ax(rng), th(rng)}));
  const ShapeDistribution d = reduce_shapes(counts_of(es), {});
  std::int64_t total = 0;
  for (const auto& [pos, list] : d.entries) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      EXPECT_EQ(quantize_center(list[i].ellipse), pos);
      EXPECT_EQ(list[i].id, static_cast<int>(i));
      total += list[i].count;
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        EXPECT_GT(landmark_distance(list[i].landmarks, list[j].landmarks), 1);
      }
    }
  }
  EXPECT_EQ(total, 3000);
  EXPECT_NEAR(total_probability(d), 1.0, 1e-9);
}

TEST(Reduce, ThetaAveragedForNearbyOrientations) {
  const std::vector<Ellipse> es{{30, 30, 10, 6, 0.10}, {30, 30, 10, 6, 0.14}};
  const ShapeDistribution d = reduce_shapes(counts_of(es), {});
  ASSERT_EQ(d.entry_count(), 1u);
  EXPECT_NEAR(d.entries.begin()->second[0].ellipse.theta, 0.12, 1e-9);
}

TEST(Reduce, OrientationsAcrossTheWrapKeepSeparateLandmarkOrder) {
  // theta near 0 and near pi are one shape, but landmark k of one is landmark k + 4 of the other
  const std::vector<Ellipse> es{{30, 30, 10, 6, 0.02}, {30, 30, 10, 6, 3.14159265358979 - 0.02}};
  const LandmarkSet l0 = ellipse_landmarks(es[0]);
  const LandmarkSet l1 = ellipse_landmarks(es[1]);
  for (int k = 0; k < kLandmarkCount; ++k) {
    const Point& q = l0.points[(k + 4) % 8];
    EXPECT_LE(std::max(std::abs(l1.points[k].x - q.x), std::abs(l1.points[k].y - q.y)), 1);
  }
  EXPECT_EQ(reduce_shapes(counts_of(es), {}).entry_count(), 2u);
}

TEST(MeanShift, SingleObservation) {
  const std::vector<DiffValues> obs{{1, -2, 3, -4, 5, -6, 7, -8}};
  const auto p = mean_shift(obs, 10.0);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].values, obs[0]);
  EXPECT_EQ(p[0].members, 1);
}

TEST(MeanShift, FarApartPointsStaySeparate) {
  const std::vector<DiffValues> obs{{0, 0, 0, 0, 0, 0, 0, 0}, {30, 0, 0, 0, 0, 0, 0, 0}};
  const auto p = mean_shift(obs, 10.0);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].values, obs[0]);
  EXPECT_EQ(p[1].values, obs[1]);
}

TEST(MeanShift, RejectsBadBandwidth) {
  const std::vector<DiffValues> obs{{}};
  EXPECT_THROW(mean_shift(obs, 0.0), InvalidArgument);
  EXPECT_THROW(mean_shift(obs, -1.0), InvalidArgument);
  EXPECT_THROW(mean_shift({}, 1.0), InvalidArgument);
}

TEST(MeanShift, KeepsFiveLargestSortedByMembers) {
  std::vector<DiffValues> obs;
  for (int m = 0; m < 8; ++m) {
    for (int i = 0; i <= m; ++i) obs.push_back({m * 100, 0, 0, 0, 0, 0, 0, i % 2});
  }
  const auto p = mean_shift(obs, 5.0);
  ASSERT_EQ(p.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(p[i].members, 8 - i);
    EXPECT_EQ(p[i].values[0], (7 - i) * 100);
  }
}

TEST(MeanShift, EqualMembersTieBreakLexicographic) {
  const std::vector<DiffValues> obs{{50, 0, 0, 0, 0, 0, 0, 0}, {-50, 0, 0, 0, 0, 0, 0, 0}};
  const auto p = mean_shift(obs, 5.0);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].values[0], -50);
}

TEST(MeanShift, RecoversPlantedModes) {
  const double bw = 40.0;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> noise(0.0, bw / 4.0);
  std::vector<std::array<double, 8>> modes(3);
  for (int m = 0; m < 3; ++m) {
    for (int k = 0; k < 8; ++k) modes[m][k] = (k == m ? 10.0 * bw : 0.0) - 300.0;
  }
  std::vector<DiffValues> pts;
  for (int i = 0; i < 500; ++i) {
    const auto& m = modes[i % 3];
    DiffValues v;
    for (int k = 0; k < 8; ++k) v[k] = static_cast<std::int32_t>(std::lround(m[k] + noise(rng)));
    pts.push_back(v);
  }
  // local subsets keep the 8-D grid search affordable
  const auto protos = mean_shift(pts, bw);
  ASSERT_EQ(protos.size(), 3u);
  for (const auto& m : modes) {
    std::vector<DiffValues> near;
    for (const auto& p : pts) {
      if (oracle::l2(m, p) < 3 * bw) near.push_back(p);
    }
    const auto mode = oracle::grid_mode(near, m, bw);
    auto closest = std::min_element(protos.begin(), protos.end(), [&](const auto& l, const auto& r) {
      return oracle::l2(mode, l.values) < oracle::l2(mode, r.values);
    });
    EXPECT_LT(oracle::l2(m, closest->values), bw);
    EXPECT_LT(oracle::l2(mode, closest->values), bw);
  }
}

TEST(Weights, AllAgreeIsUniform) {
  const WeightVector w = finalize_weights({5, 5, 5, 5, 5, 5, 5, 5}, {});
  for (double v : w) EXPECT_NEAR(v, 0.125, 1e-15);
}

TEST(Weights, NoSamplesIsUniform) {
  const WeightVector w = finalize_weights({}, {});
  for (double v : w) EXPECT_NEAR(v, 0.125, 1e-15);
}

TEST(Weights, AlwaysWrongLandmarkNearZero) {
  const WeightVector w = finalize_weights({-40, 40, 40, 40, 40, 40, 40, 40}, {});
  EXPECT_LT(w[0], 2e-4);
  EXPECT_GE(w[0], 1e-3 / 8);
  for (int k = 1; k < 8; ++k) EXPECT_NEAR(w[k], 1.0 / 7, 1e-3);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
}

TEST(Weights, SignRuleZeroMatchesOnlyZero) {
  SignAccumulator acc{};
  const std::array<bool, 8> valid{true, true, true, true, true, true, true, false};
  accumulate_signs(acc, {0, 0, 5, -5, 5, -5, 0, 9}, {0, 3, 2, -1, -2, 4, -7, -9}, valid);
  EXPECT_EQ(acc, (SignAccumulator{1, -1, 1, 1, -1, -1, -1, 0}));
}

TEST(Weights, NearestPrototypeIgnoresInvalid) {
  const std::vector<DifferenceSet> protos{{{0, 0, 0, 0, 0, 0, 0, 1000}, 1}, {{10, 10, 10, 10, 10, 10, 10, 0}, 1}};
  std::array<bool, 8> valid{};
  valid.fill(true);
  EXPECT_EQ(nearest_prototype(protos, {1, 1, 1, 1, 1, 1, 1, 0}, valid), 1);
  valid[7] = false;
  EXPECT_EQ(nearest_prototype(protos, {1, 1, 1, 1, 1, 1, 1, 0}, valid), 0);
}

// --- passes over rendered frames --------------------------------------------

SceneParams fixed_scene() {
  SceneParams p;
  p.pupil = {96.3, 71.8, 16.0, 14.0, 0.4};
  p.pupil_intensity = 20;
  p.iris_intensity = 120;
  p.sclera_intensity = 200;
  p.iris_cx = 96;
  p.iris_cy = 72;
  return p;
}

std::vector<Sample> repeated(const RenderedFrame& f, int n) { return std::vector<Sample>(n, {f.image, f.truth}); }

TEST(Pass2, OneSampleOneObservation) {
  const RenderedFrame f = render(fixed_scene());
  MemorySource src(repeated(f, 1));
  const ShapeDistribution d = reduce_shapes(counts_of({f.truth}), {});
  const DiffObservations obs = pass2_diffs(src, d, {});
  ASSERT_EQ(obs.buckets.size(), 1u);
  EXPECT_EQ(obs.buckets.begin()->second.size(), 1u);
}

TEST(Pass2, UnresolvedSampleSkipped) {
  const RenderedFrame f = render(fixed_scene());
  const ShapeDistribution d = reduce_shapes(counts_of({{40, 40, 10, 10, 0}}), {});
  MemorySource src(repeated(f, 1));
  const DiffObservations obs = pass2_diffs(src, d, {});
  EXPECT_EQ(obs.skipped_unresolved, 1);
  EXPECT_TRUE(obs.buckets.empty());
}

TEST(Pass2, PartialLandmarksSkipped) {
  SceneParams p = fixed_scene();
  p.pupil.cx = 2.0;
  const RenderedFrame f = render(p);
  const ShapeDistribution d = reduce_shapes(counts_of({f.truth}), {});
  MemorySource src(repeated(f, 1));
  EXPECT_EQ(pass2_diffs(src, d, {}).skipped_partial, 1);
}

TEST(Pass2, AdditiveOffsetsGiveIdenticalObservations) {
  const RenderedFrame f = render(fixed_scene());
  std::vector<Sample> s;
  for (int c = 0; c < 100; ++c) s.push_back({add_offset(f.image, c / 2), f.truth});
  ASSERT_LE(testing::max_pixel(s.back().image), 255);
  MemorySource src(s);
  const ShapeDistribution d = reduce_shapes(counts_of({f.truth}), {});
  const DiffObservations obs = pass2_diffs(src, d, {});
  ASSERT_EQ(obs.buckets.size(), 1u);
  const auto& list = obs.buckets.begin()->second;
  ASSERT_EQ(list.size(), 100u);
  for (const auto& v : list) EXPECT_EQ(v, list.front());
}

TEST(Pass3, CorruptedLandmarkGetsLowerWeight) {
  const RenderedFrame f = render(fixed_scene());
  const LandmarkSet l = ellipse_landmarks(f.truth);
  const Position pos = quantize_center(f.truth);
  // brighten the inner block of landmark 3 so its difference flips sign
  const SamplePair sp = sample_blocks(as_point(pos), l.points[3], l.normals[3], 2, 1);
  GrayImage corrupted = f.image;
  for (int y = sp.inner.y * 2; y < sp.inner.y * 2 + 2; ++y) {
    for (int x = sp.inner.x * 2; x < sp.inner.x * 2 + 2; ++x) corrupted.at(x, y) = 255;
  }
  std::vector<Sample> s;
  for (int i = 0; i < 40; ++i) s.push_back({i % 2 ? corrupted : f.image, f.truth});
  MemorySource src(s);
  TrainConfig cfg;
  cfg.mean_shift_bandwidth = 1.0;
  cfg.max_clusters = 1;
  const ShapeDistribution d = reduce_shapes(counts_of({f.truth}), cfg);
  const DifferenceSets ds = cluster_differences(pass2_diffs(src, d, cfg), cfg);
  const FeatureWeights w = pass3_weights(src, d, ds, cfg);
  const WeightVector& v = w.begin()->second[0];
  double others = 0.0;
  for (int k = 0; k < 8; ++k) {
    if (k != 3) others += v[k];
  }
  EXPECT_LT(v[3], others / 7);
}

TEST(Train, FixedSceneGivesSingleEntry) {
  const RenderedFrame f = render(fixed_scene());
  MemorySource src(repeated(f, 500));
  const PupilModel m = train(src, {});
  ASSERT_EQ(m.shapes.entry_count(), 1u);
  ASSERT_EQ(m.diffsets.begin()->second.size(), 1u);
  EXPECT_EQ(m.diffsets.begin()->second[0].members, 500);
  for (double v : m.weights.begin()->second[0]) EXPECT_NEAR(v, 0.125, 1e-12);
}

TEST(Train, DeterministicAndThreadIndependent) {
  MemorySource src(testing::corpus(700, 5));
  TrainConfig one;
  one.threads = 1;
  TrainConfig many;
  many.threads = 4;
  const PupilModel a = train(src, one);
  EXPECT_EQ(train(src, one), a);
  EXPECT_EQ(train(src, many), a);
}

TEST(Train, ReadsEverySampleThreeTimes) {
  MemorySource inner(testing::corpus(300, 8));
  CountingSource src(inner);
  train(src, {});
  EXPECT_EQ(src.reads(), 900u);
}

TEST(Train, InvariantsHold) {
  const PupilModel& m = testing::shared_model();
  EXPECT_NO_THROW(validate(m));
  EXPECT_NEAR(total_probability(m.shapes), 1.0, 1e-9);
  for (const auto& [key, ws] : m.weights) {
    for (const WeightVector& w : ws) {
      EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-9);
      for (double v : w) EXPECT_GE(v, 1e-3 / 8 * (1 - 1e-12));
    }
  }
  for (const auto& [key, ps] : m.diffsets) {
    EXPECT_GE(ps.size(), 1u);
    EXPECT_LE(ps.size(), 5u);
  }
}

TEST(Train, RejectsBadInput) {
  MemorySource empty;
  EXPECT_THROW(train(empty, {}), InvalidArgument);

  std::vector<Sample> mixed = testing::corpus(2, 1);
  mixed.push_back({GrayImage(100, 100, 50), {50, 50, 10, 10, 0}});
  MemorySource src(mixed);
  EXPECT_THROW(train(src, {}), DataError);

  MemorySource ok(testing::corpus(2, 1));
  TrainConfig bad;
  bad.downscale_factor = 0;
  EXPECT_THROW(train(ok, bad), InvalidArgument);
  bad = {};
  bad.max_clusters = 6;
  EXPECT_THROW(train(ok, bad), InvalidArgument);
}

TEST(Train, ReportAccountsForSamples) {
  MemorySource src(testing::corpus(300, 3));
  TrainReport r;
  const PupilModel m = train(src, {}, &r);
  EXPECT_EQ(r.samples, 300u);
  EXPECT_EQ(static_cast<std::int64_t>(r.observations) + r.pass2_skipped_partial + r.pass2_skipped_unresolved,
            300 - r.pass1_skipped);
  EXPECT_EQ(r.entries, m.shapes.entry_count());
  EXPECT_EQ(r.frame_width, 192);
}

}  // namespace
}  // namespace spup
