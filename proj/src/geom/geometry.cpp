#include "disptrack/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace disptrack {

void PointCloud::validate() const {
  if (!intensity.empty() && intensity.size() != points.size()) {
    throw std::invalid_argument("PointCloud: intensity length " +
                                std::to_string(intensity.size()) +
                                " != point count " +
                                std::to_string(points.size()));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw std::invalid_argument("PointCloud: non-finite point at index " +
                                  std::to_string(i));
    }
  }
}

void Box3D::validate() const {
  if (!center.allFinite() || !std::isfinite(yaw)) {
    throw std::invalid_argument("Box3D: non-finite center or yaw");
  }
  if (!(size.array() > 0.0).all()) {
    throw std::invalid_argument("Box3D: size components must be positive");
  }
  if (yaw < -kPi || yaw >= kPi) {
    throw std::invalid_argument("Box3D: yaw outside [-pi, pi)");
  }
  if (score && (*score < 0.0 || *score > 1.0)) {
    throw std::invalid_argument("Box3D: score outside [0, 1]");
  }
}

double wrap_angle(double angle) {
  const double two_pi = 2.0 * kPi;
  double wrapped = angle - two_pi * std::floor((angle + kPi) / two_pi);
  if (wrapped >= kPi) wrapped -= two_pi;
  if (wrapped < -kPi) wrapped += two_pi;
  return wrapped;
}

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points,
                                               std::size_t count,
                                               std::size_t start_index) {
  if (points.empty()) {
    throw std::invalid_argument("farthest_point_sample: empty cloud");
  }
  if (count < 1 || count > points.size()) {
    throw std::invalid_argument("farthest_point_sample: count " +
                                std::to_string(count) + " not in [1, " +
                                std::to_string(points.size()) + "]");
  }
  if (start_index >= points.size()) {
    throw std::invalid_argument("farthest_point_sample: start index out of range");
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  // -1 marks already-chosen points so duplicates are still reachable.
  std::vector<double> min_dist(points.size(),
                               std::numeric_limits<double>::infinity());
  std::size_t current = start_index;
  for (std::size_t step = 0; step < count; ++step) {
    chosen.push_back(current);
    min_dist[current] = -1.0;
    if (step + 1 == count) break;
    const Vec3& c = points[current];
    std::size_t best = points.size();
    double best_dist = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (min_dist[i] < 0.0) continue;
      const double d = (points[i] - c).squaredNorm();
      if (d < min_dist[i]) min_dist[i] = d;
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    current = best;
  }
  return chosen;
}

namespace {

struct Ranked {
  double dist;
  std::size_t index;
  bool operator<(const Ranked& o) const {
    return dist < o.dist || (dist == o.dist && index < o.index);
  }
};

}  // namespace

KnnResult knn(const Vec3& query, std::span<const Vec3> points, std::size_t k) {
  if (k < 1 || k > points.size()) {
    throw std::invalid_argument("knn: k=" + std::to_string(k) +
                                " not in [1, " + std::to_string(points.size()) +
                                "]");
  }
  std::vector<Ranked> ranked(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    ranked[i] = {(points[i] - query).squaredNorm(), i};
  }
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<long>(k),
                    ranked.end());
  KnnResult out;
  out.indices.reserve(k);
  out.distances.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.indices.push_back(ranked[i].index);
    out.distances.push_back(std::sqrt(ranked[i].dist));
  }
  return out;
}

std::vector<std::size_t> ball_query(const Vec3& center, double radius,
                                    std::span<const Vec3> points,
                                    std::size_t max_count) {
  if (!(radius > 0.0)) {
    throw std::invalid_argument("ball_query: radius must be positive");
  }
  const double r2 = radius * radius;
  std::vector<Ranked> hits;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = (points[i] - center).squaredNorm();
    if (d <= r2) hits.push_back({d, i});
  }
  const std::size_t keep = std::min(max_count, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<long>(keep),
                    hits.end());
  std::vector<std::size_t> out(keep);
  for (std::size_t i = 0; i < keep; ++i) out[i] = hits[i].index;
  return out;
}

bool point_in_box(const Vec3& point, const Box3D& box) {
  // Absorbs rounding from the rotation so boundary points stay inside.
  constexpr double kTol = 1e-9;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const Vec3 d = point - box.center;
  const double local_x = c * d.x() + s * d.y();
  const double local_y = -s * d.x() + c * d.y();
  return std::abs(local_x) <= 0.5 * box.size.x() + kTol &&
         std::abs(local_y) <= 0.5 * box.size.y() + kTol &&
         std::abs(d.z()) <= 0.5 * box.size.z() + kTol;
}

std::vector<bool> points_in_box(std::span<const Vec3> points,
                                const Box3D& box) {
  std::vector<bool> mask(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    mask[i] = point_in_box(points[i], box);
  }
  return mask;
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace disptrack
