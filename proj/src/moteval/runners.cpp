#include "disptrack/moteval.hpp"

namespace disptrack {

DisplacementTracker::DisplacementTracker(PipelineConfig config, TrackerParams params,
                                         DetectorNoise noise,
                                         std::shared_ptr<const AssociationModel> model)
    : config_(std::move(config)), params_(params), noise_(noise), model_(std::move(model)) {
  config_.validate();
  params_.validate();
  noise_.validate();
}

std::vector<Track> DisplacementTracker::run_tracks(const Sequence& seq,
                                                   std::uint64_t seed) const {
  TrackerState state;
  state.params = params_;
  const PointCloud empty_cloud;
  const DisplacementField empty_field;
  Detections prev_det;
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const Frame& frame = seq.frames[t];
    Detections det = oracle_detector(frame.cloud, frame.label, noise_, seed + t);
    if (t == 0) {
      step_tracker(state, frame.label.frame_index, det.boxes, empty_cloud, empty_field);
    } else {
      const Frame& prev = seq.frames[t - 1];
      const DisplacementField field =
          model_ ? predict_displacements(prev.cloud, frame.cloud, prev_det, det, *model_, config_)
                 : oracle_field(prev.cloud, prev.label, frame.label, prev_det, config_);
      step_tracker(state, frame.label.frame_index, det.boxes, prev.cloud, field);
    }
    prev_det = std::move(det);
  }
  return finalize(state);
}

std::vector<FrameLabel> DisplacementTracker::run(const Sequence& seq, std::uint64_t seed) const {
  const std::vector<Track> tracks = run_tracks(seq, seed);
  return to_hypotheses(tracks);
}

KalmanTracker::KalmanTracker(SortParams params, DetectorNoise noise)
    : params_(params), noise_(noise) {
  params_.validate();
  noise_.validate();
}

std::vector<FrameLabel> KalmanTracker::run(const Sequence& seq, std::uint64_t seed) const {
  SortTracker tracker(params_);
  std::vector<FrameLabel> out;
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const Frame& frame = seq.frames[t];
    const Detections det = oracle_detector(frame.cloud, frame.label, noise_, seed + t);
    out.push_back({frame.label.frame_index, tracker.step(det.boxes, 1.0)});
  }
  return out;
}

}  // namespace disptrack
