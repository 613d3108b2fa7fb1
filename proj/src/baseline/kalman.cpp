#include <Eigen/Dense>
#include <stdexcept>

#include "disptrack/baseline.hpp"

namespace disptrack {

KalmanTrack KalmanTrack::from_detection(const Box3D& box, int id, const KalmanNoise& noise,
                                        double initial_velocity_variance) {
  KalmanTrack t;
  t.mean.head<3>() = box.center;
  t.covariance.setZero();
  t.covariance.diagonal() << noise.r, noise.r, noise.r, initial_velocity_variance,
      initial_velocity_variance, initial_velocity_variance;
  t.size = box.size;
  t.yaw = box.yaw;
  t.class_id = box.class_id;
  t.id = id;
  t.age = 1;
  return t;
}

Box3D KalmanTrack::box() const {
  Box3D b;
  b.center = mean.head<3>();
  b.size = size;
  b.yaw = yaw;
  b.class_id = class_id;
  b.track_id = id;
  return b;
}

KalmanTrack kalman_step(const KalmanTrack& track, double dt,
                        const std::optional<Vec3>& measurement, const KalmanNoise& noise) {
  if (!std::isfinite(dt) || !(dt > 0.0)) throw std::invalid_argument("kalman_step: dt must be > 0");
  if (!std::isfinite(noise.q) || !std::isfinite(noise.r) || !(noise.q > 0.0) ||
      !(noise.r > 0.0)) {
    throw std::invalid_argument("kalman_step: noise must be finite and > 0");
  }
  if (!track.mean.allFinite() || !track.covariance.allFinite() ||
      (measurement && !measurement->allFinite())) {
    throw std::invalid_argument("kalman_step: non-finite input");
  }
  Mat6 f = Mat6::Identity();
  f.topRightCorner<3, 3>() = dt * Eigen::Matrix3d::Identity();

  KalmanTrack out = track;
  out.mean = f * track.mean;
  out.covariance = f * track.covariance * f.transpose() + noise.q * Mat6::Identity();

  if (measurement) {
    Eigen::Matrix<double, 3, 6> h = Eigen::Matrix<double, 3, 6>::Zero();
    h.leftCols<3>().setIdentity();
    const Eigen::Matrix3d r = noise.r * Eigen::Matrix3d::Identity();
    const Vec3 innovation = *measurement - h * out.mean;
    const Eigen::Matrix3d s = h * out.covariance * h.transpose() + r;
    const Eigen::Matrix<double, 6, 3> gain =
        out.covariance * h.transpose() * s.ldlt().solve(Eigen::Matrix3d::Identity());
    out.mean += gain * innovation;
    // Joseph form keeps the covariance symmetric positive-definite.
    const Mat6 ikh = Mat6::Identity() - gain * h;
    out.covariance = ikh * out.covariance * ikh.transpose() + gain * r * gain.transpose();
  }
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

}  // namespace disptrack
