#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "disptrack/pipeline.hpp"

namespace disptrack {

std::vector<std::size_t> probability_filter(const PointCloud& cloud,
                                            std::span<const double> probs,
                                            std::size_t n_filtered) {
  if (probs.size() != cloud.size()) {
    throw std::invalid_argument("probability_filter: one probability per point required");
  }
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t keep = std::min(n_filtered, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (probs[a] != probs[b]) return probs[a] > probs[b];
                      return a < b;
                    });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

void DetectorNoise::validate() const {
  if (center_sigma < 0.0 || yaw_sigma < 0.0) {
    throw std::invalid_argument("detector noise: sigmas must be >= 0");
  }
  if (dropout < 0.0 || dropout > 1.0 || false_positive_rate < 0.0 ||
      false_positive_rate > 1.0) {
    throw std::invalid_argument("detector noise: rates must be in [0, 1]");
  }
}

Detections oracle_detector(const PointCloud& frame, const FrameLabel& labels,
                           const DetectorNoise& noise, std::uint64_t seed) {
  noise.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Detections det;
  det.point_mask_probs.assign(frame.size(), 0.0);
  for (const Box3D& gt : labels.boxes) {
    // Draw every variate so the stream does not depend on which branch runs.
    const double drop = unit(rng);
    const Vec3 jitter(gauss(rng), gauss(rng), gauss(rng));
    const double yaw_jitter = gauss(rng);
    if (drop < noise.dropout) continue;

    for (std::size_t i = 0; i < frame.size(); ++i) {
      if (point_in_box(frame.points[i], gt)) det.point_mask_probs[i] = 1.0;
    }
    Box3D box = gt;
    box.track_id.reset();
    box.center += noise.center_sigma * jitter;
    box.yaw = wrap_angle(box.yaw + noise.yaw_sigma * yaw_jitter);
    box.score = 1.0;
    det.boxes.push_back(box);
  }

  if (noise.false_positive_rate > 0.0 && !frame.empty()) {
    Vec3 lo = frame.points.front();
    Vec3 hi = lo;
    for (const Vec3& p : frame.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const BoxCodec codec;
    for (std::size_t b = 0; b < labels.boxes.size(); ++b) {
      if (unit(rng) >= noise.false_positive_rate) continue;
      Box3D fp;
      fp.center = Vec3(lo.x() + unit(rng) * (hi.x() - lo.x()),
                       lo.y() + unit(rng) * (hi.y() - lo.y()),
                       lo.z() + unit(rng) * (hi.z() - lo.z()));
      fp.size = codec.size_templates.front();
      fp.yaw = wrap_angle((2.0 * unit(rng) - 1.0) * kPi);
      fp.class_id = 0;
      fp.score = 0.5;
      det.boxes.push_back(fp);
    }
  }
  return det;
}

}  // namespace disptrack
