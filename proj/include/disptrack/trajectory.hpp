#ifndef DISPTRACK_TRAJECTORY_HPP_
#define DISPTRACK_TRAJECTORY_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "disptrack/geom.hpp"
#include "disptrack/ingest.hpp"
#include "disptrack/pipeline.hpp"

namespace disptrack {

enum class TrackState { kActive, kCoasting, kTerminated };

struct TrackEntry {
  int frame_index = 0;
  Box3D box;
  bool is_virtual = false;  // coasted prediction, not a detection
};

struct Track {
  int id = 0;
  std::vector<TrackEntry> history;
  TrackState state = TrackState::kActive;
  int misses = 0;
};

struct TrackerParams {
  double tau = 0.1;
  int max_age = 2;
  IouMode iou_mode = IouMode::kBev;
  void validate() const;
};

struct TrackerState {
  std::vector<Track> tracks;
  int next_id = 0;
  std::optional<int> frame_cursor;
  TrackerParams params;
};

struct MatchPair {
  std::size_t prev = 0;
  std::size_t curr = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> unmatched_prev;
  std::vector<std::size_t> unmatched_curr;
};

struct MeanDisplacement {
  Vec3 vector = Vec3::Zero();
  std::size_t count = 0;
  bool no_support = true;
};

/// Mean of the field vectors whose frame-A points fall inside `box`.
MeanDisplacement mean_box_displacement(const Box3D& box, const PointCloud& cloud_prev,
                                       const DisplacementField& field);

/// Moves each prev box by its mean displacement, then greedily accepts pairs
/// in descending IoU (ties: lower prev, then lower curr) while IoU > tau.
MatchResult match_frame(std::span<const Box3D> prev_boxes, std::span<const Box3D> curr_boxes,
                        const PointCloud& cloud_prev, const DisplacementField& field,
                        double tau, IouMode iou_mode = IouMode::kBev);

/// One frame of association. The first call initializes a track per
/// detection and ignores cloud_prev and field.
MatchResult step_tracker(TrackerState& state, int frame_index,
                         std::span<const Box3D> curr_detections, const PointCloud& cloud_prev,
                         const DisplacementField& field);

/// All tracks ordered by id.
std::vector<Track> finalize(const TrackerState& state);

/// Per-frame hypothesis boxes (track_id set) for frames [first, last].
/// Virtual boxes are left out unless include_virtual is set.
std::vector<FrameLabel> to_hypotheses(std::span<const Track> tracks,
                                      bool include_virtual = false);

/// KITTI tracking label text of the hypotheses.
std::string export_kitti(std::span<const Track> tracks, bool include_virtual = false);

inline constexpr const char* kTrackCsvHeader =
    "frame,track_id,class_id,x,y,z,l,w,h,yaw,score,virtual";

std::string export_csv(std::span<const Track> tracks, bool include_virtual = false);

}  // namespace disptrack

#endif  // DISPTRACK_TRAJECTORY_HPP_
