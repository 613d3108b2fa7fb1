#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>

#include "disptrack/trajectory.hpp"

namespace disptrack {

void TrackerParams::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0, 1)");
  if (max_age < 0) throw std::invalid_argument("max_age must be >= 0");
}

MeanDisplacement mean_box_displacement(const Box3D& box, const PointCloud& cloud_prev,
                                       const DisplacementField& field) {
  if (field.point_indices.size() != field.vectors.size()) {
    throw std::invalid_argument("displacement field: index/vector counts differ");
  }
  MeanDisplacement out;
  Vec3 sum = Vec3::Zero();
  for (std::size_t j = 0; j < field.point_indices.size(); ++j) {
    const std::size_t i = field.point_indices[j];
    if (i >= cloud_prev.size()) {
      throw std::invalid_argument("displacement field index outside the previous cloud");
    }
    if (!point_in_box(cloud_prev.points[i], box)) continue;
    sum += field.vectors[j];
    ++out.count;
  }
  if (out.count > 0) {
    out.vector = sum / static_cast<double>(out.count);
    out.no_support = false;
  }
  return out;
}

MatchResult match_frame(std::span<const Box3D> prev_boxes, std::span<const Box3D> curr_boxes,
                        const PointCloud& cloud_prev, const DisplacementField& field,
                        double tau, IouMode iou_mode) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0, 1)");
  std::vector<Box3D> moved(prev_boxes.begin(), prev_boxes.end());
  for (Box3D& box : moved) box.center += mean_box_displacement(box, cloud_prev, field).vector;

  std::vector<MatchPair> candidates;
  for (std::size_t p = 0; p < moved.size(); ++p) {
    for (std::size_t c = 0; c < curr_boxes.size(); ++c) {
      const double iou = box_iou(moved[p], curr_boxes[c], iou_mode);
      if (iou > tau) candidates.push_back({p, c, iou});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const MatchPair& a, const MatchPair& b) {
    return std::make_tuple(-a.iou, a.prev, a.curr) < std::make_tuple(-b.iou, b.prev, b.curr);
  });

  MatchResult result;
  std::vector<bool> prev_used(moved.size(), false), curr_used(curr_boxes.size(), false);
  for (const MatchPair& m : candidates) {
    if (prev_used[m.prev] || curr_used[m.curr]) continue;
    prev_used[m.prev] = curr_used[m.curr] = true;
    result.pairs.push_back(m);
  }
  for (std::size_t p = 0; p < moved.size(); ++p) {
    if (!prev_used[p]) result.unmatched_prev.push_back(p);
  }
  for (std::size_t c = 0; c < curr_boxes.size(); ++c) {
    if (!curr_used[c]) result.unmatched_curr.push_back(c);
  }
  return result;
}

namespace {

void start_track(TrackerState& state, int frame_index, const Box3D& detection) {
  Track track;
  track.id = state.next_id++;
  Box3D box = detection;
  box.track_id = track.id;
  track.history.push_back({frame_index, box, false});
  state.tracks.push_back(std::move(track));
}

}  // namespace

MatchResult step_tracker(TrackerState& state, int frame_index,
                         std::span<const Box3D> curr_detections, const PointCloud& cloud_prev,
                         const DisplacementField& field) {
  state.params.validate();
  if (state.frame_cursor && frame_index <= *state.frame_cursor) {
    throw std::invalid_argument("step_tracker: frame " + std::to_string(frame_index) +
                                " does not follow frame " + std::to_string(*state.frame_cursor));
  }
  for (const Box3D& det : curr_detections) det.validate();

  MatchResult result;
  if (!state.frame_cursor) {
    for (std::size_t c = 0; c < curr_detections.size(); ++c) {
      start_track(state, frame_index, curr_detections[c]);
      result.unmatched_curr.push_back(c);
    }
    state.frame_cursor = frame_index;
    return result;
  }

  std::vector<std::size_t> live;
  std::vector<Box3D> prev_boxes;
  for (std::size_t t = 0; t < state.tracks.size(); ++t) {
    if (state.tracks[t].state == TrackState::kTerminated) continue;
    live.push_back(t);
    prev_boxes.push_back(state.tracks[t].history.back().box);
  }

  result = match_frame(prev_boxes, curr_detections, cloud_prev, field, state.params.tau,
                       state.params.iou_mode);

  for (const MatchPair& m : result.pairs) {
    Track& track = state.tracks[live[m.prev]];
    Box3D box = curr_detections[m.curr];
    box.track_id = track.id;
    track.history.push_back({frame_index, box, false});
    track.misses = 0;
    track.state = TrackState::kActive;
  }
  for (std::size_t p : result.unmatched_prev) {
    Track& track = state.tracks[live[p]];
    ++track.misses;
    if (track.misses > state.params.max_age) {
      track.state = TrackState::kTerminated;
      continue;
    }
    track.state = TrackState::kCoasting;
    Box3D predicted = prev_boxes[p];
    predicted.center += mean_box_displacement(prev_boxes[p], cloud_prev, field).vector;
    track.history.push_back({frame_index, predicted, true});
  }
  for (std::size_t c : result.unmatched_curr) start_track(state, frame_index, curr_detections[c]);

  state.frame_cursor = frame_index;
  return result;
}

std::vector<Track> finalize(const TrackerState& state) {
  std::vector<Track> tracks = state.tracks;
  std::sort(tracks.begin(), tracks.end(),
            [](const Track& a, const Track& b) { return a.id < b.id; });
  return tracks;
}

std::vector<FrameLabel> to_hypotheses(std::span<const Track> tracks, bool include_virtual) {
  std::map<int, std::vector<Box3D>> by_frame;
  for (const Track& track : tracks) {
    for (const TrackEntry& e : track.history) {
      if (e.is_virtual && !include_virtual) continue;
      Box3D box = e.box;
      box.track_id = track.id;
      by_frame[e.frame_index].push_back(box);
    }
  }
  std::vector<FrameLabel> out;
  for (auto& [frame, boxes] : by_frame) {
    std::sort(boxes.begin(), boxes.end(),
              [](const Box3D& a, const Box3D& b) { return *a.track_id < *b.track_id; });
    out.push_back({frame, std::move(boxes)});
  }
  return out;
}

}  // namespace disptrack
