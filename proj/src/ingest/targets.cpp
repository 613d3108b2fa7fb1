#include "disptrack/ingest.hpp"

namespace disptrack {

TrainingTargets label_targets(const PointCloud& cloud_prev,
                              const FrameLabel& labels_prev,
                              const FrameLabel& labels_curr,
                              const BoxCodec& codec) {
  const std::size_t n = cloud_prev.size();
  TrainingTargets targets;
  targets.foreground.assign(n, false);
  targets.excluded.assign(n, false);
  targets.displacement.assign(n, Vec3::Zero());
  targets.box_targets.assign(n, std::nullopt);

  // Per prev box: rigid motion to the same track in the current frame.
  std::vector<std::optional<Vec3>> motion(labels_prev.boxes.size());
  for (std::size_t b = 0; b < labels_prev.boxes.size(); ++b) {
    const Box3D& prev = labels_prev.boxes[b];
    for (const Box3D& curr : labels_curr.boxes) {
      if (prev.track_id && curr.track_id == prev.track_id) {
        motion[b] = curr.center - prev.center;
        break;
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = cloud_prev.points[i];
    for (std::size_t b = 0; b < labels_prev.boxes.size(); ++b) {
      if (!point_in_box(p, labels_prev.boxes[b])) continue;
      targets.foreground[i] = true;
      if (motion[b]) {
        targets.displacement[i] = *motion[b];
      } else {
        targets.excluded[i] = true;
      }
      targets.box_targets[i] = encode_box(labels_prev.boxes[b], codec, p);
      break;
    }
  }
  return targets;
}

}  // namespace disptrack
