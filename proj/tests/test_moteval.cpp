#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "disptrack/moteval.hpp"

namespace disptrack {
namespace {

Box3D car(double x, double y, int id) {
  Box3D b;
  b.center = Vec3(x, y, 0.0);
  b.size = Vec3(4.0, 1.6, 1.5);
  b.track_id = id;
  return b;
}

// One object driving along x at 1 m/frame.
std::vector<FrameLabel> straight(int frames, int id = 0, double y = 0.0) {
  std::vector<FrameLabel> out;
  for (int f = 0; f < frames; ++f) out.push_back({f, {car(f, y, id)}});
  return out;
}

std::vector<FrameLabel> merge(const std::vector<FrameLabel>& a, const std::vector<FrameLabel>& b) {
  std::map<int, FrameLabel> frames;
  for (const auto* src : {&a, &b}) {
    for (const FrameLabel& f : *src) {
      FrameLabel& dst = frames[f.frame_index];
      dst.frame_index = f.frame_index;
      dst.boxes.insert(dst.boxes.end(), f.boxes.begin(), f.boxes.end());
    }
  }
  std::vector<FrameLabel> out;
  for (auto& [_, f] : frames) out.push_back(f);
  return out;
}

// ---------------------------------------------------------------------------
// evaluate on hand-built sequences

TEST(Evaluate, PerfectTracking) {
  const auto gt = merge(straight(10, 0), straight(10, 1, 10.0));
  const MotReport r = evaluate(gt, gt);
  EXPECT_EQ(r.mota, 1.0);
  EXPECT_NEAR(r.motp, 1.0, 1e-12);
  EXPECT_EQ(r.mt, 1.0);
  EXPECT_EQ(r.ml, 0.0);
  EXPECT_EQ(r.ids, 0u);
  EXPECT_EQ(r.frag, 0u);
  EXPECT_EQ(r.gt_count, 20u);
  EXPECT_EQ(r.matches_per_frame.size(), 10u);
}

TEST(Evaluate, OneMissOutOfTen) {
  const auto gt = merge(straight(5, 0), straight(5, 1, 10.0));
  auto hyp = gt;
  hyp[2].boxes.erase(hyp[2].boxes.begin());
  const MotReport r = evaluate(gt, hyp);
  EXPECT_EQ(r.gt_count, 10u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_EQ(r.fp, 0u);
  EXPECT_EQ(r.ids, 0u);
  EXPECT_DOUBLE_EQ(r.mota, 0.9);
  EXPECT_EQ(r.frag, 1u);  // tracked, lost, tracked again
  EXPECT_EQ(r.matches_per_frame[2].fn, 1u);
}

TEST(Evaluate, MissAtTrajectoryEndIsNotFragmentation) {
  const auto gt = straight(10);
  auto hyp = gt;
  hyp[9].boxes.clear();
  const MotReport r = evaluate(gt, hyp);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_EQ(r.frag, 0u);
}

TEST(Evaluate, OneIdSwitch) {
  const auto gt = straight(10);
  auto hyp = gt;
  for (int f = 5; f < 10; ++f) hyp[static_cast<std::size_t>(f)].boxes[0].track_id = 7;
  const MotReport r = evaluate(gt, hyp);
  EXPECT_EQ(r.ids, 1u);
  EXPECT_DOUBLE_EQ(r.mota, 0.9);
  EXPECT_EQ(r.frag, 0u);
  EXPECT_EQ(r.matches_per_frame[5].ids, 1u);
}

TEST(Evaluate, CrossedIdentitiesCountTwice) {
  const auto gt = merge(straight(6, 0), straight(6, 1, 10.0));
  auto hyp = gt;
  for (int f = 3; f < 6; ++f) {
    for (Box3D& b : hyp[static_cast<std::size_t>(f)].boxes) b.track_id = 1 - *b.track_id;
  }
  EXPECT_EQ(evaluate(gt, hyp).ids, 2u);
}

TEST(Evaluate, IdSwitchAcrossGapStillCounts) {
  const auto gt = straight(6);
  auto hyp = gt;
  hyp[2].boxes.clear();
  for (int f = 3; f < 6; ++f) hyp[static_cast<std::size_t>(f)].boxes[0].track_id = 4;
  const MotReport r = evaluate(gt, hyp);
  EXPECT_EQ(r.ids, 1u);
  EXPECT_EQ(r.frag, 1u);
  EXPECT_EQ(r.fn, 1u);
}

TEST(Evaluate, FalsePositiveAndThreshold) {
  const auto gt = straight(4);
  auto hyp = gt;
  hyp[1].boxes.push_back(car(50, 50, 9));
  MotReport r = evaluate(gt, hyp);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_DOUBLE_EQ(r.mota, 0.75);

  // Offset of 2.5 m: IoU = 1.5 / 6.5 < 0.25, so the pair is not a match.
  hyp = gt;
  hyp[0].boxes[0].center.x() += 2.5;
  r = evaluate(gt, hyp);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 1u);
  // Offset of 2 m: IoU = 2 / 6, a match.
  hyp[0].boxes[0].center.x() -= 0.5;
  r = evaluate(gt, hyp);
  EXPECT_EQ(r.fp, 0u);
  EXPECT_EQ(r.fn, 0u);
  EXPECT_NEAR(r.motp, (3.0 + 2.0 / 6.0) / 4.0, 1e-12);
}

TEST(Evaluate, CarryOverBeatsBetterOverlap) {
  // Hypothesis 1 drifts but stays above threshold, hypothesis 2 sits exactly
  // on the object from frame 1 on. The established pairing is kept.
  const auto gt = straight(4);
  std::vector<FrameLabel> hyp;
  for (int f = 0; f < 4; ++f) {
    FrameLabel fl{f, {car(f + (f > 0 ? 1.0 : 0.0), 0, 1)}};
    if (f > 0) fl.boxes.push_back(car(f, 0, 2));
    hyp.push_back(fl);
  }
  const MotReport r = evaluate(gt, hyp);
  EXPECT_EQ(r.ids, 0u);
  EXPECT_EQ(r.fp, 3u);
  EXPECT_NEAR(r.motp, (1.0 + 3 * 0.6) / 4.0, 1e-12);
}

TEST(Evaluate, MostlyTrackedAndLost) {
  const auto a = straight(10, 0);
  const auto b = straight(10, 1, 10.0);
  const auto c = straight(10, 2, 20.0);
  const auto gt = merge(merge(a, b), c);
  std::vector<FrameLabel> hyp;
  for (int f = 0; f < 10; ++f) {
    FrameLabel fl{f, {}};
    if (f < 8) fl.boxes.push_back(car(f, 0, 0));         // 80%
    if (f < 2) fl.boxes.push_back(car(f, 10, 1));        // 20%
    if (f < 5) fl.boxes.push_back(car(f, 20, 2));        // 50%
    hyp.push_back(fl);
  }
  const MotReport r = evaluate(gt, hyp);
  EXPECT_EQ(r.trajectories, 3u);
  EXPECT_EQ(r.mostly_tracked, 1u);
  EXPECT_EQ(r.mostly_lost, 1u);
  EXPECT_DOUBLE_EQ(r.mt, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.ml, 1.0 / 3.0);
}

TEST(Evaluate, HypothesisFramesOutsideGroundTruth) {
  const auto gt = straight(3);
  auto hyp = straight(4);
  const MotReport r = evaluate(gt, hyp);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.matches_per_frame.size(), 4u);
}

TEST(Evaluate, RejectsBadInput) {
  const auto gt = straight(3);
  EXPECT_THROW(evaluate(std::vector<FrameLabel>{}, gt), std::invalid_argument);
  EXPECT_THROW(evaluate(gt, gt, EvalParams{0.0}), std::invalid_argument);
  EXPECT_THROW(evaluate(gt, gt, EvalParams{1.0}), std::invalid_argument);
  auto no_id = gt;
  no_id[0].boxes[0].track_id.reset();
  EXPECT_THROW(evaluate(gt, no_id), std::invalid_argument);
  auto dup = gt;
  dup[0].boxes.push_back(dup[0].boxes[0]);
  EXPECT_THROW(evaluate(gt, dup), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// evaluate properties

TEST(EvaluateProperty, InjectedErrorsLowerMota) {
  const auto gt = merge(straight(8, 0), straight(8, 1, 10.0));
  const double perfect = evaluate(gt, gt).mota;
  auto with_fp = gt;
  with_fp[3].boxes.push_back(car(40, 40, 5));
  auto with_fn = gt;
  with_fn[3].boxes.pop_back();
  auto with_ids = gt;
  for (std::size_t f = 4; f < 8; ++f) with_ids[f].boxes[0].track_id = 6;
  for (const auto* h : {&with_fp, &with_fn, &with_ids}) {
    EXPECT_LT(evaluate(gt, *h).mota, perfect);
  }
  // Stacking errors keeps lowering it.
  auto both = with_fp;
  both[5].boxes.pop_back();
  EXPECT_LT(evaluate(gt, both).mota, evaluate(gt, with_fp).mota);
}

TEST(EvaluateProperty, InvariantToHypothesisRelabeling) {
  SceneConfig sc;
  sc.frames = 20;
  sc.objects = 4;
  const Sequence seq = synthesize_sequence(sc, 3);
  const KalmanTracker kalman;
  const Sequence jumped =
      apply_displacement_augmentation(seq, {1.5, DisplacementMode::kFixed, true}, 4);
  auto hyp = kalman.run(jumped, 0);
  const MotReport base = evaluate(jumped.labels(), hyp);
  EXPECT_GT(base.ids, 0u);  // a non-trivial hypothesis
  for (FrameLabel& f : hyp) {
    for (Box3D& b : f.boxes) b.track_id = 1000 - 3 * *b.track_id;
  }
  const MotReport relabeled = evaluate(jumped.labels(), hyp);
  EXPECT_EQ(relabeled.mota, base.mota);
  EXPECT_EQ(relabeled.ids, base.ids);
  EXPECT_EQ(relabeled.frag, base.frag);
  EXPECT_EQ(relabeled.motp, base.motp);
  EXPECT_EQ(evaluate(jumped.labels(), hyp).mota, relabeled.mota);
}

TEST(EvaluateProperty, MetricBounds) {
  const auto gt = merge(straight(8, 0), straight(8, 1, 10.0));
  auto hyp = gt;
  for (FrameLabel& f : hyp) f.boxes.push_back(car(f.frame_index, -30, 9));
  hyp[2].boxes.erase(hyp[2].boxes.begin());
  const MotReport r = evaluate(gt, hyp);
  EXPECT_LE(r.mota, 1.0);
  EXPECT_GE(r.motp, 0.0);
  EXPECT_LE(r.motp, 1.0);
  EXPECT_LE(r.mt + r.ml, 1.0);
}

// ---------------------------------------------------------------------------
// combine and output

TEST(Combine, PoolsCounts) {
  const auto gt = straight(10);
  auto hyp = gt;
  hyp[4].boxes.clear();
  const MotReport a = evaluate(gt, gt);
  const MotReport b = evaluate(gt, hyp);
  const std::vector<MotReport> both{a, b};
  const MotReport c = combine(both);
  EXPECT_EQ(c.gt_count, 20u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.frag, 1u);
  EXPECT_DOUBLE_EQ(c.mota, 0.95);
  EXPECT_EQ(c.trajectories, 2u);
  EXPECT_EQ(c.matches_per_frame.size(), 20u);
  EXPECT_THROW(combine(std::vector<MotReport>{}), std::invalid_argument);
}

TEST(Output, ReportCsv) {
  const auto gt = straight(10);
  auto hyp = gt;
  hyp[4].boxes.clear();
  const std::string csv = report_csv(evaluate(gt, hyp));
  EXPECT_EQ(csv.rfind("metric,value\nmota,0.9\n", 0), 0u) << csv;
  EXPECT_NE(csv.find("fn,1\n"), std::string::npos);
  EXPECT_NE(csv.find("gt_count,10\n"), std::string::npos);
  const std::string table = report_table(evaluate(gt, hyp));
  EXPECT_NE(table.find("MOTA"), std::string::npos);
  EXPECT_NE(table.find("0.9000"), std::string::npos);
}

// ---------------------------------------------------------------------------
// trackers and sweeps

std::vector<Sequence> small_base(int count = 2) {
  SceneConfig sc;
  sc.frames = 20;
  sc.objects = 5;
  std::vector<Sequence> out;
  for (int s = 0; s < count; ++s) out.push_back(synthesize_sequence(sc, 50 + s));
  return out;
}

TEST(Trackers, BothPerfectWithoutDisplacement) {
  const Sequence seq = small_base(1)[0];
  const DisplacementTracker disp(PipelineConfig{}, TrackerParams{});
  const KalmanTracker kalman;
  const MotReport d = evaluate(seq.labels(), disp.run(seq, 0));
  const MotReport k = evaluate(seq.labels(), kalman.run(seq, 0));
  EXPECT_GE(d.mota, 0.98);
  EXPECT_GE(k.mota, 0.98);
  EXPECT_LE(std::abs(d.mota - k.mota), 0.02);
}

TEST(Trackers, OracleDisplacementTrackerHasNoIdSwitches) {
  const DisplacementTracker disp(PipelineConfig{}, TrackerParams{});
  for (double m : {0.0, 1.0, 2.0}) {
    for (int s = 0; s < 2; ++s) {
      const Sequence seq = apply_displacement_augmentation(
          small_base(1)[0], {m, DisplacementMode::kFixed, true}, static_cast<std::uint64_t>(s));
      const MotReport r = evaluate(seq.labels(), disp.run(seq, 0));
      EXPECT_EQ(r.ids, 0u) << "magnitude " << m;
      EXPECT_EQ(r.frag, 0u) << "magnitude " << m;
    }
  }
}

TEST(Trackers, RunsAreRepeatable) {
  const Sequence seq = apply_displacement_augmentation(
      small_base(1)[0], {1.0, DisplacementMode::kUniformRandom, true}, 2);
  DetectorNoise noise;
  noise.center_sigma = 0.1;
  noise.dropout = 0.1;
  const DisplacementTracker disp(PipelineConfig{}, TrackerParams{}, noise);
  const KalmanTracker kalman(SortParams{}, noise);
  for (const SequenceTracker* t : {static_cast<const SequenceTracker*>(&disp),
                                   static_cast<const SequenceTracker*>(&kalman)}) {
    const auto a = t->run(seq, 11);
    const auto b = t->run(seq, 11);
    EXPECT_EQ(serialize_kitti_labels(a), serialize_kitti_labels(b)) << t->name();
  }
}

TEST(Sweep, RowOrderAndThreadIndependence) {
  const auto base = small_base();
  const DisplacementTracker disp(PipelineConfig{}, TrackerParams{});
  const KalmanTracker kalman;
  const SequenceTracker* trackers[] = {&disp, &kalman};
  SweepOptions options;
  options.magnitudes = {0.0, 1.0, 2.0};
  options.mode = DisplacementMode::kFixed;
  options.seed = 7;
  const auto serial = sweep_displacement(trackers, base, options);
  options.threads = 3;
  const auto parallel = sweep_displacement(trackers, base, options);
  ASSERT_EQ(serial.size(), 6u);
  EXPECT_EQ(serial[0].tracker, "displacement");
  EXPECT_EQ(serial[1].tracker, "kalman");
  EXPECT_EQ(serial[4].magnitude, 2.0);
  EXPECT_EQ(sweep_csv(serial), sweep_csv(parallel));
  // Jumps of 2 m hurt the constant-velocity baseline, not the oracle field.
  EXPECT_EQ(serial[4].report.mota, 1.0);
  EXPECT_LT(serial[5].report.mota, serial[1].report.mota - 0.2);
}

TEST(Sweep, CsvLayout) {
  const auto base = small_base(1);
  const KalmanTracker kalman;
  const SequenceTracker* trackers[] = {&kalman};
  SweepOptions options;
  options.magnitudes = {0.0, 0.5};
  const std::string csv = sweep_csv(sweep_displacement(trackers, base, options));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "tracker,magnitude,metric,value");
  std::getline(in, line);
  EXPECT_EQ(line, "kalman,0,mota,1");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 16);
}

TEST(Sweep, RejectsBadInput) {
  const auto base = small_base(1);
  const KalmanTracker kalman;
  const SequenceTracker* trackers[] = {&kalman};
  SweepOptions options;
  options.magnitudes = {-0.5};
  EXPECT_THROW(sweep_displacement(trackers, base, options), std::invalid_argument);
  options.magnitudes = {0.0};
  EXPECT_THROW(sweep_displacement(trackers, std::vector<Sequence>{}, options),
               std::invalid_argument);
}

}  // namespace
}  // namespace disptrack
