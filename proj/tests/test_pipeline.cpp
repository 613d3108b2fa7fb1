#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "disptrack/pipeline.hpp"

namespace disptrack {
namespace {

using micronet::DenseParams;

Sequence small_scene(std::uint64_t seed, int frames = 3, int objects = 3) {
  SceneConfig cfg;
  cfg.frames = frames;
  cfg.objects = objects;
  return synthesize_sequence(cfg, seed);
}

Detections exact(const Frame& f) { return oracle_detector(f.cloud, f.label, DetectorNoise{}, 0); }

std::vector<bool> foreground_of(const Frame& f) {
  std::vector<bool> fg(f.cloud.size(), false);
  for (std::size_t i = 0; i < f.cloud.size(); ++i) {
    for (const Box3D& b : f.label.boxes) fg[i] = fg[i] || point_in_box(f.cloud.points[i], b);
  }
  return fg;
}

// ---------------------------------------------------------------------------
// Probability filter

TEST(ProbabilityFilter, Examples) {
  PointCloud c;
  c.points.assign(3, Vec3::Zero());
  EXPECT_EQ(probability_filter(c, std::vector<double>{0.9, 0.1, 0.8}, 2),
            (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(probability_filter(c, std::vector<double>{0.9, 0.1, 0.8}, 5),
            (std::vector<std::size_t>{0, 1, 2}));
  c.points.assign(6, Vec3::Zero());
  EXPECT_EQ(probability_filter(c, std::vector<double>(6, 0.4), 3),
            (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(probability_filter(c, std::vector<double>(5, 0.4), 3), std::invalid_argument);
}

TEST(ProbabilityFilter, InvariantToPermutation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud c;
  std::vector<double> probs(200);
  for (double& p : probs) p = u(rng);
  c.points.assign(200, Vec3::Zero());
  const auto base = probability_filter(c, probs, 50);
  std::set<double> chosen;
  for (std::size_t i : base) chosen.insert(probs[i]);

  std::vector<std::size_t> perm(200);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> shuffled(200);
  for (std::size_t i = 0; i < 200; ++i) shuffled[i] = probs[perm[i]];
  std::set<double> chosen_shuffled;
  for (std::size_t i : probability_filter(c, shuffled, 50)) chosen_shuffled.insert(shuffled[i]);
  EXPECT_EQ(chosen, chosen_shuffled);
  EXPECT_TRUE(std::is_sorted(base.begin(), base.end()));
}

TEST(ProbabilityFilter, KeepsAtLeastAsMuchForegroundAsFps) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Sequence seq = small_scene(seed, 1, 2);
    const Frame& f = seq.frames[0];
    const auto fg = foreground_of(f);
    const Detections det = exact(f);
    const std::size_t budget = 256;
    std::size_t filtered_fg = 0, fps_fg = 0;
    for (std::size_t i : probability_filter(f.cloud, det.point_mask_probs, budget)) filtered_fg += fg[i];
    for (std::size_t i : farthest_point_sample(f.cloud.points, budget, 0)) fps_fg += fg[i];
    EXPECT_GE(filtered_fg, fps_fg) << seed;
  }
}

// ---------------------------------------------------------------------------
// Oracle detector

TEST(OracleDetector, ZeroNoiseReproducesLabels) {
  const Sequence seq = small_scene(2, 1);
  const Frame& f = seq.frames[0];
  const Detections det = exact(f);
  ASSERT_EQ(det.boxes.size(), f.label.boxes.size());
  for (std::size_t i = 0; i < det.boxes.size(); ++i) {
    EXPECT_EQ(det.boxes[i].center, f.label.boxes[i].center);
    EXPECT_EQ(det.boxes[i].size, f.label.boxes[i].size);
    EXPECT_EQ(det.boxes[i].yaw, f.label.boxes[i].yaw);
    EXPECT_FALSE(det.boxes[i].track_id.has_value());
    EXPECT_GE(det.boxes[i].score, 0.0);
    EXPECT_LE(det.boxes[i].score, 1.0);
  }
  const auto fg = foreground_of(f);
  for (std::size_t i = 0; i < fg.size(); ++i) EXPECT_EQ(det.point_mask_probs[i], fg[i] ? 1.0 : 0.0);
}

TEST(OracleDetector, FullDropoutRemovesEverything) {
  const Sequence seq = small_scene(3, 1);
  DetectorNoise noise;
  noise.dropout = 1.0;
  const Detections det = oracle_detector(seq.frames[0].cloud, seq.frames[0].label, noise, 4);
  EXPECT_TRUE(det.boxes.empty());
  for (double p : det.point_mask_probs) EXPECT_EQ(p, 0.0);
}

TEST(OracleDetector, CenterNoiseStatistics) {
  const Sequence seq = small_scene(4, 1, 1);
  DetectorNoise noise;
  noise.center_sigma = 0.1;
  const Vec3 truth = seq.frames[0].label.boxes[0].center;
  Vec3 abs_sum = Vec3::Zero();
  double norm_sum = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const Detections det = oracle_detector(seq.frames[0].cloud, seq.frames[0].label, noise, t);
    const Vec3 e = det.boxes[0].center - truth;
    abs_sum += e.cwiseAbs();
    norm_sum += e.norm();
  }
  // Per axis: E|N(0, s^2)| = s sqrt(2/pi). Norm: s * 2 sqrt(2/pi).
  const double axis = 0.1 * std::sqrt(2.0 / kPi);
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(abs_sum[a] / trials, axis, 0.1 * axis);
  EXPECT_NEAR(norm_sum / trials, 2.0 * axis, 0.05 * 2.0 * axis);
}

TEST(OracleDetector, FalsePositivesAndDeterminism) {
  const Sequence seq = small_scene(5, 1, 5);
  DetectorNoise noise;
  noise.false_positive_rate = 1.0;
  noise.center_sigma = 0.2;
  const Detections a = oracle_detector(seq.frames[0].cloud, seq.frames[0].label, noise, 9);
  const Detections b = oracle_detector(seq.frames[0].cloud, seq.frames[0].label, noise, 9);
  ASSERT_EQ(a.boxes.size(), 10u);
  for (std::size_t i = 0; i < a.boxes.size(); ++i) EXPECT_EQ(a.boxes[i].center, b.boxes[i].center);
  EXPECT_EQ(a.boxes[7].score, 0.5);

  DetectorNoise bad;
  bad.dropout = 1.5;
  EXPECT_THROW(oracle_detector(seq.frames[0].cloud, seq.frames[0].label, bad, 0),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Mask classifier

MaskNetConfig small_mask_config() {
  MaskNetConfig c;
  c.n_input = 512;
  c.sa1.samples = 64;
  c.sa2.samples = 16;
  return c;
}

TEST(MaskClassifier, ShapeRangeAndDeterminism) {
  const Sequence seq = small_scene(6, 1);
  const MaskNet net = MaskNet::init(small_mask_config(), 1);
  const auto p = micro_mask_classifier(seq.frames[0].cloud, net);
  ASSERT_EQ(p.size(), seq.frames[0].cloud.size());
  for (double v : p) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(micro_mask_classifier(seq.frames[0].cloud, MaskNet::init(small_mask_config(), 1)), p);
  EXPECT_TRUE(micro_mask_classifier(PointCloud{}, net).empty());
}

TEST(MaskClassifier, TrainingSeparatesForeground) {
  SceneConfig sc;
  sc.frames = 4;
  sc.objects = 3;
  sc.points_per_object = 60;
  sc.background_points = 250;
  sc.ground_points = 120;
  std::vector<Sequence> train;
  for (std::uint64_t s = 0; s < 4; ++s) train.push_back(synthesize_sequence(sc, 40 + s));
  MaskNet net = MaskNet::init(small_mask_config(), 2);
  const MaskTrainReport report = train_mask_net(net, train, 8);
  ASSERT_EQ(report.epoch_loss.size(), 8u);
  EXPECT_LT(report.epoch_loss.back(), report.epoch_loss.front());

  double fg_sum = 0.0, bg_sum = 0.0;
  std::size_t fg_n = 0, bg_n = 0;
  for (std::uint64_t s = 0; s < 2; ++s) {
    const Sequence held = synthesize_sequence(sc, 90 + s);
    for (const Frame& f : held.frames) {
      const auto probs = micro_mask_classifier(f.cloud, net);
      const auto fg = foreground_of(f);
      for (std::size_t i = 0; i < probs.size(); ++i) {
        (fg[i] ? fg_sum : bg_sum) += probs[i];
        (fg[i] ? fg_n : bg_n) += 1;
      }
    }
  }
  EXPECT_GT(fg_sum / static_cast<double>(fg_n), bg_sum / static_cast<double>(bg_n));
}

// ---------------------------------------------------------------------------
// Displacement network

PipelineConfig small_config() {
  PipelineConfig c;
  c.n_filtered = 256;
  c.sa1.samples = 128;
  c.sa2.samples = 32;
  c.sa3.samples = 8;
  c.k = 8;
  return c;
}

TEST(PipelineConfig, KeyValueRoundTripAndValidation) {
  PipelineConfig c;
  c.fusion = micronet::Fusion::kCosineDistance;
  c.k = 12;
  c.sa2.radius = 1.25;
  c.fp2_widths = {8, 9};
  c.alpha = 2.0;
  const PipelineConfig back =
      PipelineConfig::from_config(KeyValueConfig::parse(c.to_config().to_text()));
  EXPECT_EQ(back.to_config().to_text(), c.to_config().to_text());
  EXPECT_EQ(back.fusion, micronet::Fusion::kCosineDistance);
  EXPECT_EQ(back.fp2_widths, (std::vector<int>{8, 9}));

  PipelineConfig bad;
  bad.n_filtered = bad.n_input + 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = PipelineConfig{};
  bad.k = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = PipelineConfig{};
  bad.head_widths = {16, 2};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(PipelineConfig::from_config(KeyValueConfig::parse("unknown.key = 3\n")),
               ConfigError);
}

TEST(Displacements, ShapeContractAndStatelessness) {
  const Sequence seq = small_scene(7, 2);
  const PipelineConfig cfg = small_config();
  const AssociationModel model = AssociationModel::init(cfg, 3);
  const Frame& a = seq.frames[0];
  const Frame& b = seq.frames[1];
  const Detections da = exact(a);
  const Detections db = exact(b);
  const DisplacementField field = predict_displacements(a.cloud, b.cloud, da, db, model, cfg);
  EXPECT_EQ(field.point_indices.size(), std::min(cfg.n_filtered, a.cloud.size()));
  EXPECT_EQ(field.vectors.size(), field.point_indices.size());
  const auto allowed = probability_filter(a.cloud, da.point_mask_probs, cfg.n_filtered);
  EXPECT_EQ(field.point_indices, allowed);
  EXPECT_EQ(std::set<std::size_t>(field.point_indices.begin(), field.point_indices.end()).size(),
            field.point_indices.size());

  // An unrelated call in between must not change the result.
  predict_displacements(b.cloud, a.cloud, db, da, model, cfg);
  const DisplacementField again = predict_displacements(a.cloud, b.cloud, da, db, model, cfg);
  EXPECT_EQ(again.vectors, field.vectors);
}

TEST(Displacements, KAboveFrameBPointsSuggestsLoweringK) {
  const Sequence seq = small_scene(8, 2);
  PipelineConfig cfg = small_config();
  cfg.k = cfg.sa2.samples + 1;
  const AssociationModel model = AssociationModel::init(cfg, 3);
  try {
    predict_displacements(seq.frames[0].cloud, seq.frames[1].cloud, exact(seq.frames[0]),
                          exact(seq.frames[1]), model, cfg);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("lower k"), std::string::npos);
  }
}

TEST(Displacements, OracleFieldMatchesLabels) {
  SceneConfig sc;
  sc.frames = 2;
  sc.objects = 2;
  sc.velocities = {Vec3(1, 0, 0), Vec3(0, 0.5, 0)};
  const Sequence seq = synthesize_sequence(sc, 1);
  const PipelineConfig cfg = small_config();
  const Detections da = exact(seq.frames[0]);
  const DisplacementField f =
      oracle_field(seq.frames[0].cloud, seq.frames[0].label, seq.frames[1].label, da, cfg);
  for (std::size_t r = 0; r < f.point_indices.size(); ++r) {
    const Vec3& p = seq.frames[0].cloud.points[f.point_indices[r]];
    Vec3 expected = Vec3::Zero();
    if (point_in_box(p, seq.frames[0].label.boxes[0])) expected = Vec3(1, 0, 0);
    if (point_in_box(p, seq.frames[0].label.boxes[1])) expected = Vec3(0, 0.5, 0);
    EXPECT_EQ(f.vectors[r], expected);
  }
}

micronet::GradientCheckReport check_pipeline(micronet::Fusion fusion,
                                            std::uint64_t seed) {
  const Sequence seq = small_scene(9 + seed, 2);
  PipelineConfig cfg = small_config();
  cfg.fusion = fusion;
  cfg.seed = seed;
  const auto pairs = build_training_pairs(std::span<const Sequence>(&seq, 1), cfg);
  const AssociationModel model = AssociationModel::init(cfg, 5 + seed);
  return pipeline_gradient_check(model, cfg, pairs.at(0), 120, 1e-5, 17 + seed);
}

TEST(Displacements, FullPipelineGradientCheckConcat) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto report = check_pipeline(micronet::Fusion::kConcat, seed);
    EXPECT_TRUE(report.finite);
    EXPECT_EQ(report.probes, 120u);
    EXPECT_LT(report.max_relative_error, 1e-4) << seed;
  }
}

// Product and cosine fusions leave near-ties in the pooling layers within
// epsilon of the probe point; one such tie bends the loss along every
// upstream parameter. The analytic value must still agree with one side.
TEST(Displacements, FullPipelineGradientCheckOtherFusions) {
  for (micronet::Fusion fusion : {micronet::Fusion::kElementwiseProduct,
                                  micronet::Fusion::kCosineDistance,
                                  micronet::Fusion::kDotProduct}) {
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      const auto report = check_pipeline(fusion, seed);
      EXPECT_TRUE(report.finite);
      EXPECT_LT(report.max_kink_tolerant_error, 1e-4) << micronet::to_string(fusion) << seed;
      EXPECT_LT(report.kinks, report.probes / 4);
    }
  }
}

TEST(Checkpoint, ModelRoundTripPreservesPredictions) {
  const Sequence seq = small_scene(10, 2);
  PipelineConfig cfg = small_config();
  cfg.fusion = micronet::Fusion::kElementwiseProduct;
  const AssociationModel model = AssociationModel::init(cfg, 6);
  const std::string text = micronet::serialize_checkpoint(model.to_checkpoint(cfg));
  const auto [back, back_cfg] =
      AssociationModel::from_checkpoint(micronet::parse_checkpoint(text));
  EXPECT_EQ(back_cfg.to_config().to_text(), cfg.to_config().to_text());
  const auto da = exact(seq.frames[0]);
  const auto db = exact(seq.frames[1]);
  EXPECT_EQ(predict_displacements(seq.frames[0].cloud, seq.frames[1].cloud, da, db, back, back_cfg)
                .vectors,
            predict_displacements(seq.frames[0].cloud, seq.frames[1].cloud, da, db, model, cfg)
                .vectors);
}

// ---------------------------------------------------------------------------
// Training

TEST(Training, ZeroEpochsReturnsInitialModel) {
  const Sequence seq = small_scene(11, 2);
  const PipelineConfig cfg = small_config();
  const TrainResult r = train_association(std::span<const Sequence>(&seq, 1), cfg, 0);
  EXPECT_TRUE(r.epoch_loss.empty());
  const AssociationModel init = AssociationModel::init(cfg, cfg.seed);
  const auto a = std::as_const(r.model).blocks();
  const auto b = std::as_const(init).blocks();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(micronet::flatten(std::span<const DenseParams>(a[i], 1)),
              micronet::flatten(std::span<const DenseParams>(b[i], 1)));
  }
}

TEST(Training, RejectsEmptyDataset) {
  const PipelineConfig cfg = small_config();
  EXPECT_THROW(train_association({}, cfg, 1), std::invalid_argument);
  const Sequence one_frame = small_scene(12, 1);
  EXPECT_THROW(train_association(std::span<const Sequence>(&one_frame, 1), cfg, 1),
               std::invalid_argument);
}

TEST(Training, DeterministicFiniteAndFollowsClr) {
  std::vector<Sequence> seqs{small_scene(13, 3), small_scene(14, 2)};  // 3 pairs
  PipelineConfig cfg = small_config();
  cfg.clr_cycle_epochs = 4;
  const TrainResult a = train_association(seqs, cfg, 6);
  const TrainResult b = train_association(seqs, cfg, 6);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  ASSERT_EQ(a.epoch_lr.size(), 6u);
  for (std::size_t e = 0; e < 6; ++e) {
    EXPECT_TRUE(std::isfinite(a.epoch_loss[e]));
    EXPECT_DOUBLE_EQ(a.epoch_lr[e], micronet::clr_schedule(3 * e, 3 * 4, cfg.lr_low, cfg.lr_high));
  }
  EXPECT_DOUBLE_EQ(a.epoch_lr[0], 1e-4);
  EXPECT_DOUBLE_EQ(a.epoch_lr[2], 1e-3);
  for (const DenseParams* p : std::as_const(a.model).blocks()) EXPECT_TRUE(p->all_finite());

  cfg.seed = 1;
  EXPECT_NE(train_association(seqs, cfg, 1).epoch_loss, std::vector<double>(a.epoch_loss.begin(), a.epoch_loss.begin() + 1));
}

// One toy training run shared by the behavioural checks below.
class ToyTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SceneConfig sc;
    sc.objects = 3;
    sc.frames = 21;
    sc.velocity_max = 1.5;
    for (std::uint64_t s = 0; s < 10; ++s) data_.push_back(synthesize_sequence(sc, 300 + s));
    result_ = new TrainResult(train_association(data_, config_, 24));
    for (std::uint64_t s = 0; s < 3; ++s) held_out_.push_back(synthesize_sequence(sc, 700 + s));
  }
  static void TearDownTestSuite() {
    delete result_;
    result_ = nullptr;
  }
  static inline PipelineConfig config_{};
  static inline std::vector<Sequence> data_;
  static inline std::vector<Sequence> held_out_;
  static inline TrainResult* result_ = nullptr;
};

TEST_F(ToyTraining, LossFallsBelowFifthOfFirstEpoch) {
  EXPECT_EQ(build_training_pairs(data_, config_).size(), 200u);
  ASSERT_EQ(result_->epoch_loss.size(), 24u);
  EXPECT_LT(result_->epoch_loss.back(), 0.2 * result_->epoch_loss.front());
}

TEST_F(ToyTraining, IdenticalFramesGiveSmallVectors) {
  const FieldError heldout =
      evaluate_field_error(result_->model, config_, build_training_pairs(held_out_, config_));
  EXPECT_LT(heldout.mean_error, 0.15);
  const Frame& f = held_out_[0].frames[5];
  const Detections det = exact(f);
  const DisplacementField field =
      predict_displacements(f.cloud, f.cloud, det, det, result_->model, config_);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < field.point_indices.size(); ++r) {
    if (det.point_mask_probs[field.point_indices[r]] < 1.0) continue;
    total += field.vectors[r].norm();
    ++n;
  }
  ASSERT_GT(n, 0u);
  EXPECT_LT(total / static_cast<double>(n), std::max(heldout.mean_error, 0.05) * 2.0);
}

TEST_F(ToyTraining, GlobalShiftIsRecovered) {
  const Frame& a = held_out_[1].frames[3];
  Frame b = a;
  for (Vec3& p : b.cloud.points) p += Vec3(1, 0, 0);
  for (Box3D& box : b.label.boxes) box.center += Vec3(1, 0, 0);
  const Detections da = exact(a);
  const Detections db = exact(b);
  const DisplacementField field =
      predict_displacements(a.cloud, b.cloud, da, db, result_->model, config_);
  Vec3 mean = Vec3::Zero();
  std::size_t n = 0;
  for (std::size_t r = 0; r < field.point_indices.size(); ++r) {
    if (da.point_mask_probs[field.point_indices[r]] < 1.0) continue;
    mean += field.vectors[r];
    ++n;
  }
  ASSERT_GT(n, 0u);
  mean /= static_cast<double>(n);
  EXPECT_LT((mean - Vec3(1, 0, 0)).norm(), 0.1);
}

}  // namespace
}  // namespace disptrack
