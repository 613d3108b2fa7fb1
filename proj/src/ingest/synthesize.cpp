#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "disptrack/ingest.hpp"

namespace disptrack {
namespace {

struct ObjectState {
  Vec3 center;
  Vec3 size;
  double yaw = 0.0;
  Vec3 velocity;
  double direction = 1.0;
};

// Uniform sample on the top and four side faces of the box (LiDAR never sees
// the underside), jittered by sensor noise and clamped back into the box.
Vec3 sample_surface_point(const Box3D& box, double sigma, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  const Vec3 half = 0.5 * box.size;
  const double margin = std::min(3.0 * sigma, 0.25 * box.size.minCoeff());
  const Vec3 inner = (half.array() - margin).max(1e-3).matrix();

  const double top = box.size.x() * box.size.y();
  const double front = box.size.y() * box.size.z();
  const double side = box.size.x() * box.size.z();
  const double total = top + 2.0 * front + 2.0 * side;
  const double pick = unit(rng) * total;
  const double u = 2.0 * unit(rng) - 1.0;
  const double v = 2.0 * unit(rng) - 1.0;

  Vec3 local;
  if (pick < top) {
    local = Vec3(u * inner.x(), v * inner.y(), inner.z());
  } else if (pick < top + 2.0 * front) {
    const double sx = pick < top + front ? 1.0 : -1.0;
    local = Vec3(sx * inner.x(), u * inner.y(), v * inner.z());
  } else {
    const double sy = pick < top + 2.0 * front + side ? 1.0 : -1.0;
    local = Vec3(u * inner.x(), sy * inner.y(), v * inner.z());
  }
  if (sigma > 0.0) {
    local += Vec3(noise(rng), noise(rng), noise(rng));
  }
  local = local.cwiseMax(-half).cwiseMin(half);
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  return box.center + Vec3(c * local.x() - s * local.y(),
                           s * local.x() + c * local.y(), local.z());
}

bool inside_any(const Vec3& p, const std::vector<Box3D>& boxes, double margin) {
  for (const Box3D& b : boxes) {
    Box3D grown = b;
    grown.size.array() += 2.0 * margin;
    if (point_in_box(p, grown)) return true;
  }
  return false;
}

}  // namespace

void SceneConfig::validate() const {
  if (frames <= 0 || objects <= 0 || points_per_object <= 0 ||
      background_points < 0 || ground_points < 0) {
    throw std::invalid_argument("SceneConfig: frame/object/point counts must be positive");
  }
  if (velocity_min < 0.0 || velocity_max < velocity_min) {
    throw std::invalid_argument("SceneConfig: need 0 <= velocity_min <= velocity_max");
  }
  if (noise_sigma < 0.0 || lane_spacing <= 0.0 || area_half_extent <= 0.0 ||
      frame_period <= 0.0) {
    throw std::invalid_argument("SceneConfig: non-positive geometry parameter");
  }
  if (!(size_min.array() > 0.0).all() || !(size_max.array() >= size_min.array()).all()) {
    throw std::invalid_argument("SceneConfig: invalid size range");
  }
  if (speed_change_probability < 0.0 || speed_change_probability > 1.0) {
    throw std::invalid_argument("SceneConfig: speed_change_probability outside [0, 1]");
  }
}

SceneConfig SceneConfig::from_config(const KeyValueConfig& cfg) {
  cfg.require_known({"frames", "objects", "velocity_min", "velocity_max",
                     "points_per_object", "background_points", "ground_points",
                     "noise_sigma", "seed", "lane_spacing", "area_half_extent",
                     "size_min", "size_max", "ground_z", "speed_change_probability",
                     "frame_period"});
  SceneConfig c;
  c.frames = static_cast<int>(cfg.get_int("frames", c.frames));
  c.objects = static_cast<int>(cfg.get_int("objects", c.objects));
  c.velocity_min = cfg.get_double("velocity_min", c.velocity_min);
  c.velocity_max = cfg.get_double("velocity_max", c.velocity_max);
  c.points_per_object = static_cast<int>(cfg.get_int("points_per_object", c.points_per_object));
  c.background_points = static_cast<int>(cfg.get_int("background_points", c.background_points));
  c.ground_points = static_cast<int>(cfg.get_int("ground_points", c.ground_points));
  c.noise_sigma = cfg.get_double("noise_sigma", c.noise_sigma);
  c.seed = cfg.get_uint("seed", c.seed);
  c.lane_spacing = cfg.get_double("lane_spacing", c.lane_spacing);
  c.area_half_extent = cfg.get_double("area_half_extent", c.area_half_extent);
  auto vec3 = [&](const char* key, const Vec3& fallback) {
    const auto v = cfg.get_doubles(key, {fallback.x(), fallback.y(), fallback.z()});
    if (v.size() != 3) throw ConfigError(std::string("config key '") + key + "': need 3 values");
    return Vec3(v[0], v[1], v[2]);
  };
  c.size_min = vec3("size_min", c.size_min);
  c.size_max = vec3("size_max", c.size_max);
  c.ground_z = cfg.get_double("ground_z", c.ground_z);
  c.speed_change_probability =
      cfg.get_double("speed_change_probability", c.speed_change_probability);
  c.frame_period = cfg.get_double("frame_period", c.frame_period);
  c.validate();
  return c;
}

KeyValueConfig SceneConfig::to_config() const {
  KeyValueConfig cfg;
  auto vec3 = [](const Vec3& v) {
    return format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z());
  };
  cfg.set("frames", std::to_string(frames));
  cfg.set("objects", std::to_string(objects));
  cfg.set("velocity_min", format_double(velocity_min));
  cfg.set("velocity_max", format_double(velocity_max));
  cfg.set("points_per_object", std::to_string(points_per_object));
  cfg.set("background_points", std::to_string(background_points));
  cfg.set("ground_points", std::to_string(ground_points));
  cfg.set("noise_sigma", format_double(noise_sigma));
  cfg.set("seed", std::to_string(seed));
  cfg.set("lane_spacing", format_double(lane_spacing));
  cfg.set("area_half_extent", format_double(area_half_extent));
  cfg.set("size_min", vec3(size_min));
  cfg.set("size_max", vec3(size_max));
  cfg.set("ground_z", format_double(ground_z));
  cfg.set("speed_change_probability", format_double(speed_change_probability));
  cfg.set("frame_period", format_double(frame_period));
  return cfg;
}

Sequence synthesize_sequence(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double half = config.area_half_extent;

  std::vector<ObjectState> objects(static_cast<std::size_t>(config.objects));
  for (std::size_t i = 0; i < objects.size(); ++i) {
    ObjectState& o = objects[i];
    for (int a = 0; a < 3; ++a) o.size[a] = uniform(config.size_min[a], config.size_max[a]);
    const double lane =
        (static_cast<double>(i) - 0.5 * (config.objects - 1)) * config.lane_spacing;
    o.center = Vec3(uniform(-half, half), lane + uniform(-1.0, 1.0),
                    config.ground_z + 0.5 * o.size.z());
    o.direction = unit(rng) < 0.5 ? 1.0 : -1.0;
    const double speed = uniform(config.velocity_min, config.velocity_max);
    if (i < config.velocities.size()) {
      o.velocity = config.velocities[i];
      o.yaw = o.velocity.head<2>().norm() > 0.0
                  ? wrap_angle(std::atan2(o.velocity.y(), o.velocity.x()))
                  : 0.0;
    } else {
      o.velocity = Vec3(o.direction * speed, 0.0, 0.0);
      o.yaw = o.direction > 0.0 ? 0.0 : -kPi;
    }
  }

  std::vector<Vec3> clutter(static_cast<std::size_t>(config.background_points));
  std::vector<double> clutter_intensity(clutter.size());
  for (std::size_t i = 0; i < clutter.size(); ++i) {
    clutter[i] = Vec3(uniform(-half, half), uniform(-half, half),
                      uniform(config.ground_z + 0.3, config.ground_z + 3.0));
    clutter_intensity[i] = uniform(0.05, 0.4);
  }
  std::vector<Vec3> ground(static_cast<std::size_t>(config.ground_points));
  for (Vec3& g : ground) g = Vec3(uniform(-half, half), uniform(-half, half), config.ground_z);

  Sequence seq;
  seq.name = "synthetic-" + std::to_string(seed);
  seq.frame_period = config.frame_period;
  for (int t = 0; t < config.frames; ++t) {
    if (t > 0) {
      for (std::size_t i = 0; i < objects.size(); ++i) {
        ObjectState& o = objects[i];
        if (i >= config.velocities.size() && config.speed_change_probability > 0.0 &&
            unit(rng) < config.speed_change_probability) {
          o.velocity = Vec3(o.direction * uniform(config.velocity_min, config.velocity_max),
                            0.0, 0.0);
        }
        o.center += o.velocity;
      }
    }
    Frame frame;
    frame.label.frame_index = t;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      Box3D box;
      box.center = objects[i].center;
      box.size = objects[i].size;
      box.yaw = objects[i].yaw;
      box.class_id = 0;
      box.track_id = static_cast<int>(i);
      frame.label.boxes.push_back(box);
    }

    PointCloud& cloud = frame.cloud;
    const double sigma = config.noise_sigma;
    for (const Vec3& g : ground) {
      const Vec3 p = g + Vec3(0.0, 0.0, sigma * gauss(rng));
      if (inside_any(p, frame.label.boxes, 0.0)) continue;  // occluded by the object
      cloud.points.push_back(p);
      cloud.intensity.push_back(uniform(0.0, 0.15));
    }
    for (std::size_t i = 0; i < clutter.size(); ++i) {
      const Vec3 p = clutter[i] + sigma * Vec3(gauss(rng), gauss(rng), gauss(rng));
      if (inside_any(p, frame.label.boxes, 0.3)) continue;
      cloud.points.push_back(p);
      cloud.intensity.push_back(clutter_intensity[i]);
    }
    for (const Box3D& box : frame.label.boxes) {
      for (int k = 0; k < config.points_per_object; ++k) {
        cloud.points.push_back(sample_surface_point(box, sigma, rng));
        cloud.intensity.push_back(uniform(0.5, 0.9));
      }
    }
    // Shuffle so point order carries no label information.
    for (std::size_t i = cloud.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      const std::size_t j = pick(rng);
      std::swap(cloud.points[i - 1], cloud.points[j]);
      std::swap(cloud.intensity[i - 1], cloud.intensity[j]);
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

Sequence apply_displacement_augmentation(const Sequence& seq,
                                         const AugmentationOptions& options,
                                         std::uint64_t seed) {
  if (options.magnitude < 0.0) {
    throw std::invalid_argument("augmentation magnitude must be non-negative");
  }
  Sequence out = seq;
  if (options.magnitude == 0.0) return out;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw_shift = [&]() {
    const double norm = options.mode == DisplacementMode::kFixed
                            ? options.magnitude
                            : options.magnitude * unit(rng);
    const double theta = 2.0 * kPi * unit(rng);
    return Vec3(norm * std::cos(theta), norm * std::sin(theta), 0.0);
  };

  // Footprints closer than this count as a collision.
  constexpr double kClearance = 0.5;
  constexpr int kAttempts = 32;
  auto collides = [&](const Box3D& a, const Box3D& b) {
    Box3D ga = a, gb = b;
    ga.size += Vec3(2 * kClearance, 2 * kClearance, 0.0);
    gb.size += Vec3(2 * kClearance, 2 * kClearance, 0.0);
    return box_iou(ga, gb, IouMode::kBev) > 0.0;
  };

  std::map<int, Vec3> offsets;
  for (std::size_t t = 1; t < out.frames.size(); ++t) {
    Frame& frame = out.frames[t];
    std::vector<std::size_t> order(frame.label.boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return *frame.label.boxes[a].track_id < *frame.label.boxes[b].track_id;
    });
    for (const Box3D& b : frame.label.boxes) offsets.try_emplace(*b.track_id, Vec3::Zero());
    if (!options.per_object) {
      const Vec3 shared = draw_shift();
      for (const Box3D& b : frame.label.boxes) offsets.at(*b.track_id) += shared;
    } else {
      // Objects jump one after another. A jump that would run into another
      // object (at its newest position) is redrawn; the least crowded draw
      // wins if every attempt collides.
      auto placed = [&](std::size_t b) {
        Box3D box = frame.label.boxes[b];
        box.center += offsets.at(*box.track_id);
        return box;
      };
      for (std::size_t b : order) {
        const int id = *frame.label.boxes[b].track_id;
        Vec3 best = Vec3::Zero();
        int best_hits = std::numeric_limits<int>::max();
        for (int attempt = 0; attempt < kAttempts && best_hits > 0; ++attempt) {
          const Vec3 shift = draw_shift();
          Box3D moved = placed(b);
          moved.center += shift;
          int hits = 0;
          for (std::size_t o = 0; o < frame.label.boxes.size(); ++o) {
            if (o != b && collides(moved, placed(o))) ++hits;
          }
          if (hits < best_hits) {
            best_hits = hits;
            best = shift;
          }
        }
        offsets.at(id) += best;
      }
    }

    // Membership uses the boxes before they move.
    std::vector<Vec3> box_offset;
    for (const Box3D& b : frame.label.boxes) box_offset.push_back(offsets.at(*b.track_id));
    for (Vec3& p : frame.cloud.points) {
      for (std::size_t b = 0; b < frame.label.boxes.size(); ++b) {
        if (point_in_box(p, frame.label.boxes[b])) {
          p += box_offset[b];
          break;
        }
      }
    }
    for (std::size_t b = 0; b < frame.label.boxes.size(); ++b) {
      frame.label.boxes[b].center += box_offset[b];
    }
  }
  return out;
}

}  // namespace disptrack
