#ifndef DISPTRACK_GEOM_HPP_
#define DISPTRACK_GEOM_HPP_

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace disptrack {

using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

/// A frame of 3-D points in meters with optional per-point intensity.
struct PointCloud {
  std::vector<Vec3> points;
  // Empty, or one value in [0, 1] per point.
  std::vector<double> intensity;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_intensity() const noexcept { return !intensity.empty(); }

  /// Throws std::invalid_argument on non-finite coordinates or an intensity
  /// array whose length differs from the point count.
  void validate() const;
};

/// Oriented box. size = (length, width, height); length runs along the yaw
/// heading in the x-y plane, height along z.
struct Box3D {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double yaw = 0.0;
  int class_id = 0;
  std::optional<int> track_id;
  std::optional<double> score;

  void validate() const;
};

enum class IouMode { kBev, k3d };

/// Wraps an angle into [-pi, pi).
double wrap_angle(double angle);

// ---------------------------------------------------------------------------
// Point-set kernels. All ties break to the lowest index.
// ---------------------------------------------------------------------------

/// Farthest point sampling. The first returned index is start_index; each
/// following index maximizes the minimum distance to the points chosen so far.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points,
                                               std::size_t count,
                                               std::size_t start_index);

struct KnnResult {
  std::vector<std::size_t> indices;
  std::vector<double> distances;
};

/// k nearest neighbours of `query`, ascending by distance.
KnnResult knn(const Vec3& query, std::span<const Vec3> points, std::size_t k);

/// Indices within `radius` of `center` (inclusive), nearest first, truncated
/// to max_count. May be empty.
std::vector<std::size_t> ball_query(const Vec3& center, double radius,
                                    std::span<const Vec3> points,
                                    std::size_t max_count);

/// Membership mask; points on the box boundary count as inside.
std::vector<bool> points_in_box(std::span<const Vec3> points, const Box3D& box);
bool point_in_box(const Vec3& point, const Box3D& box);

/// Bird's-eye-view corners, counter-clockwise.
std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box);

/// Area of the intersection of two convex counter-clockwise polygons.
double convex_intersection_area(std::span<const Eigen::Vector2d> subject,
                                std::span<const Eigen::Vector2d> clip);

double box_iou(const Box3D& a, const Box3D& b, IouMode mode);

// ---------------------------------------------------------------------------
// Box parameterization: objectness, center residual, heading bins with
// residuals, size templates with residuals, semantic class.
// ---------------------------------------------------------------------------

struct BoxCodec {
  int num_heading_bins = 12;
  std::vector<Vec3> size_templates = {Vec3(3.9, 1.6, 1.56)};
  int num_classes = 1;

  int num_size_bins() const noexcept {
    return static_cast<int>(size_templates.size());
  }
  std::size_t encoding_length() const noexcept {
    return 2 + 3 + 2 * static_cast<std::size_t>(num_heading_bins) +
           4 * size_templates.size() + static_cast<std::size_t>(num_classes);
  }
  void validate() const;
};

struct BoxEncoding {
  std::array<double, 2> objectness{0.0, 0.0};
  Vec3 center = Vec3::Zero();
  std::vector<double> heading_bin_logits;
  std::vector<double> heading_residuals;
  std::vector<double> size_bin_logits;
  std::vector<Vec3> size_residuals;
  std::vector<double> class_logits;

  std::size_t length() const noexcept;
  std::vector<double> flatten() const;
  static BoxEncoding unflatten(std::span<const double> values,
                               const BoxCodec& codec);
};

struct HeadingBin {
  int bin = 0;
  double residual = 0.0;
};

HeadingBin heading_to_bin(double yaw, int num_heading_bins);
double bin_to_heading(int bin, double residual, int num_heading_bins);

/// Target encoding: one-hot logits, residuals filled at the true bins only.
/// The center residual is taken relative to `anchor`.
BoxEncoding encode_box(const Box3D& box, const BoxCodec& codec,
                       const Vec3& anchor = Vec3::Zero());

/// Argmax bins (lowest index on ties) plus their residuals.
Box3D decode_box(const BoxEncoding& encoding, const BoxCodec& codec,
                 const Vec3& anchor = Vec3::Zero());

std::size_t argmax_lowest(std::span<const double> values);

}  // namespace disptrack

#endif  // DISPTRACK_GEOM_HPP_
