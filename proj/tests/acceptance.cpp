// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>

#include "disptrack/moteval.hpp"
#include "disptrack/micronet/losses.hpp"
#include "test_support.hpp"

namespace disptrack {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

const std::vector<double> kMagnitudes{0.0, 0.5, 1.0, 1.5, 2.0};

// Jump-style sequences: 5 objects, 50 frames, fixed-norm shifts per object.
std::vector<Sequence> robustness_base() {
  SceneConfig sc;
  sc.frames = 50;
  sc.objects = 5;
  std::vector<Sequence> base;
  for (std::uint64_t s = 0; s < 3; ++s) base.push_back(synthesize_sequence(sc, 100 + s));
  return base;
}

SweepOptions robustness_options() {
  SweepOptions o;
  o.magnitudes = kMagnitudes;
  o.mode = DisplacementMode::kFixed;
  o.per_object = true;
  o.seed = 7;
  return o;
}

std::map<std::string, std::vector<MotReport>> by_tracker(const std::vector<SweepRow>& rows) {
  std::map<std::string, std::vector<MotReport>> out;
  for (const SweepRow& r : rows) out[r.tracker].push_back(r.report);
  return out;
}

// Shared between criteria 1, 2 and 8.
std::vector<SweepRow> g_oracle_rows;

Outcome criterion_robustness() {
  const auto t0 = Clock::now();
  const auto base = robustness_base();
  const DisplacementTracker disp(PipelineConfig{}, TrackerParams{});
  const KalmanTracker kalman;
  const SequenceTracker* trackers[] = {&disp, &kalman};
  g_oracle_rows = sweep_displacement(trackers, base, robustness_options());
  const double elapsed = seconds_since(t0);
  auto rows = by_tracker(g_oracle_rows);

  double lo = 1.0, hi = -1.0;
  for (const MotReport& r : rows["displacement"]) {
    lo = std::min(lo, r.mota);
    hi = std::max(hi, r.mota);
  }
  const double k0 = rows["kalman"].front().mota;
  const double k2 = rows["kalman"].back().mota;
  const bool pass = lo >= 0.95 && hi - lo < 0.05 && k0 - k2 >= 0.2 && elapsed < 120.0;
  return {pass, fmt("displacement MOTA min %.4f spread %.4f; kalman MOTA %.4f -> %.4f (drop "
                    "%.4f); %.1f s",
                    lo, hi - lo, k0, k2, k0 - k2, elapsed)};
}

Outcome criterion_learned_field() {
  const auto t0 = Clock::now();
  // Toy constant-velocity set; every second sequence also carries random
  // jumps so the network sees large motions.
  SceneConfig toy;
  toy.frames = 21;
  toy.objects = 5;
  toy.velocity_max = 1.5;
  std::vector<Sequence> train;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Sequence seq = synthesize_sequence(toy, 1000 + s);
    if (s % 2 == 1) {
      seq = apply_displacement_augmentation(seq, {2.0, DisplacementMode::kUniformRandom, true},
                                            1000 + s);
    }
    train.push_back(std::move(seq));
  }
  const PipelineConfig config;
  const std::size_t epochs = 24;
  const TrainResult trained = train_association(train, config, epochs);
  const double train_seconds = seconds_since(t0);

  const std::vector<Sequence> held{synthesize_sequence(toy, 5000), synthesize_sequence(toy, 5001)};
  const auto pairs = build_training_pairs(held, config);
  const FieldError err = evaluate_field_error(trained.model, config, pairs);

  const auto model = std::make_shared<const AssociationModel>(trained.model);
  const DisplacementTracker learned(config, TrackerParams{}, DetectorNoise{}, model);
  const SequenceTracker* trackers[] = {&learned};
  SweepOptions options = robustness_options();
  options.magnitudes = {kMagnitudes.back()};
  const auto rows = sweep_displacement(trackers, robustness_base(), options);
  const double learned_mota = rows.front().report.mota;
  const double oracle_mota = by_tracker(g_oracle_rows)["displacement"].back().mota;

  const bool pass = epochs <= 30 && train_seconds < 300.0 && err.mean_error < 0.15 &&
                    std::abs(learned_mota - oracle_mota) <= 0.05;
  return {pass, fmt("%zu epochs in %.1f s; held-out error %.4f m over %zu pairs; MOTA at 2.0 m "
                    "learned %.4f vs oracle %.4f",
                    epochs, train_seconds, err.mean_error, err.pairs, learned_mota,
                    oracle_mota)};
}

Outcome criterion_gradient() {
  const PipelineConfig config;  // default concat pipeline
  SceneConfig sc;
  sc.frames = 2;
  const Sequence seq = synthesize_sequence(sc, 0);
  const auto pairs = build_training_pairs(std::span<const Sequence>(&seq, 1), config);
  const AssociationModel model = AssociationModel::init(config, 0);
  const auto r = pipeline_gradient_check(model, config, pairs.at(0), 120, 1e-5, 0);
  return {r.finite && r.probes >= 100 && r.max_relative_error < 1e-4,
          fmt("%zu probes, eps 1e-5, max relative error %.3g", r.probes, r.max_relative_error)};
}

Outcome criterion_geometry() {
  std::mt19937_64 rng(4);
  std::mt19937_64 mc(5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto [a, b] = testing_support::random_overlapping_pair(rng);
    const double mc_iou = testing_support::monte_carlo_bev_iou(a, b, 1000000, mc);
    worst = std::max(worst, std::abs(box_iou(a, b, IouMode::kBev) - mc_iou));
  }
  Box3D c1, c2;
  c1.size = c2.size = Vec3::Ones();
  c2.center = Vec3(0.5, 0.0, 0.0);
  const double bev = box_iou(c1, c2, IouMode::kBev);
  const double full = box_iou(c1, c2, IouMode::k3d);
  const bool pass = worst <= 0.01 && std::abs(bev - 1.0 / 3.0) <= 1e-6 &&
                    std::abs(full - 1.0 / 3.0) <= 1e-6;
  return {pass, fmt("max |IoU - Monte-Carlo| %.4f over 100 pairs; unit cubes BEV %.9f 3D %.9f",
                    worst, bev, full)};
}

Outcome criterion_assignment() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_int_distribution<int> small(0, 3);
  std::uniform_real_distribution<double> real(0.0, 1.0);
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::MatrixXd cost(dim(rng), dim(rng));
    for (Eigen::Index i = 0; i < cost.size(); ++i) {
      cost.data()[i] = trial % 2 == 0 ? small(rng) : real(rng);
    }
    const auto want = testing_support::brute_force_assignment(cost);
    const Assignment got = hungarian(cost);
    if (got.row_to_col != want.row_to_col) ++mismatches;
  }
  return {mismatches == 0, fmt("%d of 500 assignments differ from brute force", mismatches)};
}

Box3D car(double x, double y, int id) {
  Box3D b;
  b.center = Vec3(x, y, 0.0);
  b.size = Vec3(4.0, 1.6, 1.5);
  b.track_id = id;
  return b;
}

Outcome criterion_metrics() {
  // Two objects over five frames: ten ground-truth boxes.
  std::vector<FrameLabel> two;
  for (int f = 0; f < 5; ++f) two.push_back({f, {car(f, 0, 0), car(f, 10, 1)}});
  const MotReport perfect = evaluate(two, two);

  auto one_fn = two;
  one_fn[2].boxes.erase(one_fn[2].boxes.begin());
  const MotReport fn = evaluate(two, one_fn);

  // One object over ten frames; the hypothesis id changes at frame 5.
  std::vector<FrameLabel> one, swapped;
  for (int f = 0; f < 10; ++f) {
    one.push_back({f, {car(f, 0, 0)}});
    swapped.push_back({f, {car(f, 0, f < 5 ? 0 : 1)}});
  }
  const MotReport ids = evaluate(one, swapped);

  const bool pass = perfect.mota == 1.0 && perfect.ids == 0 && perfect.frag == 0 &&
                    fn.mota == 0.9 && fn.fn == 1 && fn.ids == 0 && fn.frag == 1 &&
                    ids.mota == 0.9 && ids.ids == 1 && ids.frag == 0;
  return {pass, fmt("perfect MOTA %.17g; one-FN MOTA %.17g FRAG %zu; id swap MOTA %.17g IDS %zu",
                    perfect.mota, fn.mota, fn.frag, ids.mota, ids.ids)};
}

Outcome criterion_filter() {
  const PipelineConfig config;
  int violations = 0, sparse = 0, sparse_violations = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  for (std::uint64_t s = 0; s < 20; ++s) {
    SceneConfig sc;
    sc.frames = 1;
    if (s % 2 == 1) {  // sparse foreground
      sc.objects = 2;
      sc.points_per_object = 60;
      sc.background_points = 2000;
    }
    const Sequence seq = synthesize_sequence(sc, 300 + s);
    const Frame& f = seq.frames[0];
    const Detections det = oracle_detector(f.cloud, f.label, DetectorNoise{}, s);
    std::vector<bool> fg(f.cloud.size(), false);
    std::size_t fg_total = 0;
    for (std::size_t i = 0; i < f.cloud.size(); ++i) {
      for (const Box3D& b : f.label.boxes) {
        if (point_in_box(f.cloud.points[i], b)) {
          fg[i] = true;
          ++fg_total;
          break;
        }
      }
    }
    const std::size_t budget = std::min(config.n_filtered, f.cloud.size());
    std::size_t filtered = 0, fps = 0;
    for (std::size_t i : probability_filter(f.cloud, det.point_mask_probs, budget)) filtered += fg[i];
    for (std::size_t i : farthest_point_sample(f.cloud.points, budget, 0)) fps += fg[i];
    if (filtered < fps) ++violations;
    const double scene_fraction = static_cast<double>(fg_total) / static_cast<double>(f.cloud.size());
    if (scene_fraction <= 0.10) {
      ++sparse;
      const double ratio = fps ? static_cast<double>(filtered) / static_cast<double>(fps)
                               : std::numeric_limits<double>::infinity();
      min_ratio = std::min(min_ratio, ratio);
      if (ratio < 2.0) ++sparse_violations;
    }
  }
  const bool pass = violations == 0 && sparse > 0 && sparse_violations == 0;
  return {pass, fmt("filtered < FPS in %d of 20 scenes; %d sparse scenes, min ratio %.2f", violations,
                    sparse, min_ratio)};
}

Outcome criterion_determinism() {
  SceneConfig sc;
  sc.frames = 50;
  sc.objects = 5;
  const Sequence seq = apply_displacement_augmentation(
      synthesize_sequence(sc, 200), {1.0, DisplacementMode::kFixed, true}, 200);
  DetectorNoise noise;
  noise.dropout = 0.25;  // forces terminations and new tracks
  const DisplacementTracker tracker(PipelineConfig{}, TrackerParams{}, noise);
  const auto a = tracker.run_tracks(seq, 9);
  const auto b = tracker.run_tracks(seq, 9);
  const bool identical = export_kitti(a, true) == export_kitti(b, true) &&
                         export_csv(a, true) == export_csv(b, true);

  // Ids never repeat and grow with birth frame.
  bool hygiene = true;
  std::set<int> seen;
  int last_id = -1, last_birth = -1;
  std::vector<std::pair<int, int>> births;
  for (const Track& t : a) {
    if (!seen.insert(t.id).second) hygiene = false;
    births.emplace_back(t.history.front().frame_index, t.id);
    for (std::size_t i = 1; i < t.history.size(); ++i) {
      if (t.history[i].frame_index <= t.history[i - 1].frame_index) hygiene = false;
    }
  }
  std::sort(births.begin(), births.end(),
            [](const auto& x, const auto& y) { return x.second < y.second; });
  for (const auto& [birth, id] : births) {
    if (birth < last_birth || id <= last_id) hygiene = false;
    last_birth = birth;
    last_id = id;
  }

  std::size_t oracle_ids = 0;
  for (const SweepRow& r : g_oracle_rows) {
    if (r.tracker == "displacement") oracle_ids += r.report.ids;
  }
  const bool pass = identical && hygiene && oracle_ids == 0 && a.size() > 5;
  return {pass, fmt("repeat identical: %s; %zu tracks, ids unique and ordered: %s; oracle IDS "
                    "over all magnitudes %zu",
                    identical ? "yes" : "no", a.size(), hygiene ? "yes" : "no", oracle_ids)};
}

Outcome criterion_losses() {
  const double half[] = {0.5};
  const double ninety[] = {0.9};
  const double ce = micronet::focal_loss(half, 0.0).loss;
  const double focal = micronet::focal_loss(ninety, 2.0).loss;
  const double focal_hand = (1.0 - 0.9) * (1.0 - 0.9) * -std::log(0.9);
  const std::vector<Vec3> pred{Vec3(1, 0, 0), Vec3(0, 1, 0)};
  const std::vector<Vec3> target{Vec3::Zero(), Vec3::Zero()};
  const double track = micronet::tracking_loss(pred, target, {true, false}, 1.0, 0.5).loss;
  const bool pass = std::abs(ce - std::log(2.0)) <= 1e-9 && std::abs(focal - focal_hand) <= 1e-9 &&
                    std::abs(track - 3.0) <= 1e-9;
  return {pass, fmt("focal(0.5, 0) %.12f; focal(0.9, 2) %.6e; tracking %.12f", ce, focal, track)};
}

}  // namespace
}  // namespace disptrack

int main() {
  using namespace disptrack;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"displacement robustness (oracle field)", criterion_robustness},
      {"learned displacement field", criterion_learned_field},
      {"gradient correctness", criterion_gradient},
      {"geometry oracles", criterion_geometry},
      {"assignment oracle", criterion_assignment},
      {"metric exactness", criterion_metrics},
      {"probability filter", criterion_filter},
      {"determinism and id hygiene", criterion_determinism},
      {"loss unit values", criterion_losses},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
