#ifndef DISPTRACK_BASELINE_HPP_
#define DISPTRACK_BASELINE_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "disptrack/geom.hpp"

namespace disptrack {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct KalmanNoise {
  double q = 0.01;  // process
  double r = 0.1;   // measurement
};

/// Constant-velocity state (x, y, z, vx, vy, vz). Size, yaw and class are
/// carried from the latest matched detection.
struct KalmanTrack {
  Vec6 mean = Vec6::Zero();
  Mat6 covariance = Mat6::Identity();
  Vec3 size{1.0, 1.0, 1.0};
  double yaw = 0.0;
  int class_id = 0;
  int id = 0;
  int misses = 0;
  int age = 0;

  /// Zero velocity, covariance diag(r, r, r, v, v, v).
  static KalmanTrack from_detection(const Box3D& box, int id, const KalmanNoise& noise,
                                    double initial_velocity_variance = 10.0);
  Box3D box() const;
};

/// Predict by dt, then update with the measured position when present.
KalmanTrack kalman_step(const KalmanTrack& track, double dt,
                        const std::optional<Vec3>& measurement, const KalmanNoise& noise);

struct Assignment {
  std::vector<int> row_to_col;  // -1 when unassigned
  double total_cost = 0.0;
};

/// Minimum-cost assignment on the zero-padded square matrix. Among optimal
/// assignments the lexicographically smallest row_to_col is returned.
Assignment hungarian(const Eigen::MatrixXd& cost);

struct SortParams {
  KalmanNoise noise;
  double gate_iou = 0.1;
  int max_age = 2;
  double initial_velocity_variance = 10.0;
  IouMode iou_mode = IouMode::kBev;
  void validate() const;
};

class SortTracker {
 public:
  explicit SortTracker(SortParams params = {});

  /// Returns matched and newborn boxes with their track ids.
  std::vector<Box3D> step(std::span<const Box3D> detections, double dt = 1.0);

  const std::vector<KalmanTrack>& tracks() const { return tracks_; }
  int next_id() const { return next_id_; }

 private:
  SortParams params_;
  std::vector<KalmanTrack> tracks_;
  int next_id_ = 0;
};

}  // namespace disptrack

#endif  // DISPTRACK_BASELINE_HPP_
