#include <stdexcept>

#include "disptrack/baseline.hpp"

namespace disptrack {
namespace {
constexpr double kGatedCost = 1e3;
}  // namespace

void SortParams::validate() const {
  if (!(gate_iou > 0.0 && gate_iou <= 1.0)) throw std::invalid_argument("gate_iou must be in (0, 1]");
  if (max_age < 0) throw std::invalid_argument("max_age must be >= 0");
  if (!(initial_velocity_variance > 0.0)) {
    throw std::invalid_argument("initial_velocity_variance must be > 0");
  }
}

SortTracker::SortTracker(SortParams params) : params_(params) { params_.validate(); }

std::vector<Box3D> SortTracker::step(std::span<const Box3D> detections, double dt) {
  std::vector<KalmanTrack> predicted;
  predicted.reserve(tracks_.size());
  for (const KalmanTrack& t : tracks_) {
    predicted.push_back(kalman_step(t, dt, std::nullopt, params_.noise));
  }

  Eigen::MatrixXd cost(static_cast<Eigen::Index>(predicted.size()),
                       static_cast<Eigen::Index>(detections.size()));
  Eigen::MatrixXd iou(cost.rows(), cost.cols());
  for (std::size_t r = 0; r < predicted.size(); ++r) {
    const Box3D pbox = predicted[r].box();
    for (std::size_t c = 0; c < detections.size(); ++c) {
      const double v = box_iou(pbox, detections[c], params_.iou_mode);
      iou(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      cost(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          v >= params_.gate_iou ? 1.0 - v : kGatedCost;
    }
  }
  const Assignment assignment = hungarian(cost);

  std::vector<bool> det_used(detections.size(), false);
  std::vector<KalmanTrack> next;
  std::vector<Box3D> output;
  for (std::size_t r = 0; r < tracks_.size(); ++r) {
    const int c = assignment.row_to_col[r];
    const bool matched =
        c >= 0 && iou(static_cast<Eigen::Index>(r), c) >= params_.gate_iou;
    if (matched) {
      const Box3D& det = detections[static_cast<std::size_t>(c)];
      KalmanTrack t = kalman_step(tracks_[r], dt, det.center, params_.noise);
      t.size = det.size;
      t.yaw = det.yaw;
      t.class_id = det.class_id;
      t.misses = 0;
      ++t.age;
      det_used[static_cast<std::size_t>(c)] = true;
      Box3D out = t.box();
      out.score = det.score;
      output.push_back(out);
      next.push_back(std::move(t));
    } else {
      KalmanTrack t = predicted[r];
      ++t.misses;
      ++t.age;
      if (t.misses <= params_.max_age) next.push_back(std::move(t));
    }
  }
  for (std::size_t c = 0; c < detections.size(); ++c) {
    if (det_used[c]) continue;
    KalmanTrack t = KalmanTrack::from_detection(detections[c], next_id_++, params_.noise,
                                                params_.initial_velocity_variance);
    Box3D out = t.box();
    out.score = detections[c].score;
    output.push_back(out);
    next.push_back(std::move(t));
  }
  tracks_ = std::move(next);
  return output;
}

}  // namespace disptrack
