#ifndef DISPTRACK_MOTEVAL_HPP_
#define DISPTRACK_MOTEVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "disptrack/baseline.hpp"
#include "disptrack/ingest.hpp"
#include "disptrack/pipeline.hpp"
#include "disptrack/trajectory.hpp"

namespace disptrack {

struct EvalParams {
  double iou_threshold = 0.25;
  IouMode iou_mode = IouMode::kBev;
};

struct FrameMatches {
  int frame_index = 0;
  std::size_t gt = 0;
  std::size_t hyp = 0;
  std::size_t matches = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t ids = 0;
};

struct MotReport {
  double mota = 0.0;
  double motp = 0.0;  // mean IoU over matches
  double mt = 0.0;
  double ml = 0.0;
  std::size_t ids = 0;
  std::size_t frag = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t gt_count = 0;
  // Raw tallies behind the ratios, used when combining sequences.
  std::size_t matches = 0;
  double iou_sum = 0.0;
  std::size_t trajectories = 0;
  std::size_t mostly_tracked = 0;
  std::size_t mostly_lost = 0;
  std::vector<FrameMatches> matches_per_frame;
};

/// CLEAR-MOT over frames aligned by frame_index. Ground-truth and hypothesis
/// boxes need track ids.
MotReport evaluate(std::span<const FrameLabel> gt, std::span<const FrameLabel> hyp,
                   const EvalParams& params = {});

/// Pools counts of several sequences; per-frame details are concatenated.
MotReport combine(std::span<const MotReport> reports);

std::string report_csv(const MotReport& report);
std::string report_table(const MotReport& report);

// ---------------------------------------------------------------------------
// Trackers run over whole sequences
// ---------------------------------------------------------------------------

class SequenceTracker {
 public:
  virtual ~SequenceTracker() = default;
  virtual std::string name() const = 0;
  /// Hypothesis boxes (track ids set) per frame.
  virtual std::vector<FrameLabel> run(const Sequence& seq, std::uint64_t seed) const = 0;
};

/// Displacement tracking on oracle detections. Without a model the field
/// is the exact label motion of the filtered points.
class DisplacementTracker : public SequenceTracker {
 public:
  DisplacementTracker(PipelineConfig config, TrackerParams params, DetectorNoise noise = {},
                      std::shared_ptr<const AssociationModel> model = nullptr);
  std::string name() const override { return "displacement"; }
  std::vector<FrameLabel> run(const Sequence& seq, std::uint64_t seed) const override;
  /// Tracks of the last run's state, for export.
  std::vector<Track> run_tracks(const Sequence& seq, std::uint64_t seed) const;

 private:
  PipelineConfig config_;
  TrackerParams params_;
  DetectorNoise noise_;
  std::shared_ptr<const AssociationModel> model_;
};

class KalmanTracker : public SequenceTracker {
 public:
  explicit KalmanTracker(SortParams params = {}, DetectorNoise noise = {});
  std::string name() const override { return "kalman"; }
  std::vector<FrameLabel> run(const Sequence& seq, std::uint64_t seed) const override;

 private:
  SortParams params_;
  DetectorNoise noise_;
};

// ---------------------------------------------------------------------------
// Displacement sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  std::string tracker;
  double magnitude = 0.0;
  MotReport report;
};

struct SweepOptions {
  std::vector<double> magnitudes{0.0, 0.5, 1.0, 1.5, 2.0};
  DisplacementMode mode = DisplacementMode::kUniformRandom;
  bool per_object = true;
  std::uint64_t seed = 0;
  EvalParams eval;
  std::size_t threads = 1;
};

/// Rows ordered by magnitude, then tracker order, whatever the thread count.
std::vector<SweepRow> sweep_displacement(std::span<const SequenceTracker* const> trackers,
                                         std::span<const Sequence> base,
                                         const SweepOptions& options);

/// Tidy CSV: tracker,magnitude,metric,value.
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace disptrack

#endif  // DISPTRACK_MOTEVAL_HPP_
