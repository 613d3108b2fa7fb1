#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "disptrack/geom.hpp"

namespace disptrack {
namespace {

using Vec2 = Eigen::Vector2d;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// >= 0 when p is left of (or on) the directed edge a->b.
double side(const Vec2& a, const Vec2& b, const Vec2& p) {
  return cross(b - a, p - a);
}

Vec2 line_intersection(const Vec2& p, const Vec2& q, const Vec2& a,
                       const Vec2& b) {
  const Vec2 r = q - p;
  const Vec2 s = b - a;
  const double denom = cross(r, s);
  if (std::abs(denom) < 1e-300) return p;
  const double t = cross(a - p, s) / denom;
  return p + t * r;
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    twice += cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * std::abs(twice);
}

// Canonical argument order keeps the floating-point result symmetric.
bool box_less(const Box3D& a, const Box3D& b) {
  return std::tie(a.center.x(), a.center.y(), a.center.z(), a.size.x(),
                  a.size.y(), a.size.z(), a.yaw) <
         std::tie(b.center.x(), b.center.y(), b.center.z(), b.size.x(),
                  b.size.y(), b.size.z(), b.yaw);
}

}  // namespace

std::array<Vec2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.size.x();
  const double hw = 0.5 * box.size.y();
  const Vec2 center(box.center.x(), box.center.y());
  const Vec2 ax(c, s);
  const Vec2 ay(-s, c);
  return {center - hl * ax - hw * ay, center + hl * ax - hw * ay,
          center + hl * ax + hw * ay, center - hl * ax + hw * ay};
}

// Sutherland-Hodgman: clip `subject` successively against each edge of the
// convex `clip` polygon.
double convex_intersection_area(std::span<const Vec2> subject,
                                std::span<const Vec2> clip) {
  std::vector<Vec2> output(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    std::vector<Vec2> input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2& cur = input[i];
      const Vec2& prev = input[(i + input.size() - 1) % input.size()];
      const bool cur_in = side(a, b, cur) >= 0.0;
      const bool prev_in = side(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(line_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(line_intersection(prev, cur, a, b));
      }
    }
  }
  return polygon_area(output);
}

double box_iou(const Box3D& a_in, const Box3D& b_in, IouMode mode) {
  const bool swap = box_less(b_in, a_in);
  const Box3D& a = swap ? b_in : a_in;
  const Box3D& b = swap ? a_in : b_in;

  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double inter_bev = convex_intersection_area(ca, cb);
  const double area_a = a.size.x() * a.size.y();
  const double area_b = b.size.x() * b.size.y();

  double iou = 0.0;
  if (mode == IouMode::kBev) {
    const double uni = area_a + area_b - inter_bev;
    iou = uni > 0.0 ? inter_bev / uni : 0.0;
  } else {
    const double top = std::min(a.center.z() + 0.5 * a.size.z(),
                                b.center.z() + 0.5 * b.size.z());
    const double bottom = std::max(a.center.z() - 0.5 * a.size.z(),
                                   b.center.z() - 0.5 * b.size.z());
    const double inter = inter_bev * std::max(0.0, top - bottom);
    const double uni = area_a * a.size.z() + area_b * b.size.z() - inter;
    iou = uni > 0.0 ? inter / uni : 0.0;
  }
  return std::clamp(iou, 0.0, 1.0);
}

}  // namespace disptrack
