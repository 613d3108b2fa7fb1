#ifndef DISPTRACK_MICRONET_POINT_LAYERS_HPP_
#define DISPTRACK_MICRONET_POINT_LAYERS_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "disptrack/geom.hpp"
#include "disptrack/micronet/dense.hpp"

namespace disptrack::micronet {

/// Per-group MLP followed by channel-wise max over the group's rows. Shared by
/// set abstraction and the association head.
struct GroupPoolTape {
  DenseTape dense;
  std::vector<std::size_t> offsets;  // group g owns rows [offsets[g], offsets[g+1])
  Eigen::MatrixXi argmax;            // groups x channels -> stacked row
};

struct GroupPoolOutput {
  Matrix pooled;
  GroupPoolTape tape;
};

GroupPoolOutput group_mlp_max(const DenseParams& mlp, const Matrix& stacked,
                              std::span<const std::size_t> offsets, bool capture);

/// Returns dLoss/dStacked.
Matrix group_mlp_max_backward(const DenseParams& mlp, const GroupPoolTape& tape,
                              const Matrix& grad_pooled, DenseParams& grads);

// ---------------------------------------------------------------------------
// Set abstraction
// ---------------------------------------------------------------------------

struct SaLayerSpec {
  std::size_t sample_count = 1;
  double radius = 1.0;
  std::size_t neighbor_cap = 16;
  DenseParams mlp;  // input width = 3 + feature width
};

struct SaTape {
  std::size_t input_points = 0;
  std::vector<std::size_t> members;  // neighbour indices, grouped per centroid
  GroupPoolTape pool;
};

struct SaOutput {
  std::vector<std::size_t> sampled;  // centroid indices into the input points
  std::vector<Vec3> points;
  Matrix features;
  SaTape tape;
};

/// FPS centroids, ball-query grouping, per-neighbour (offset ++ feature) MLP,
/// max over the group. An empty group falls back to the centroid itself.
SaOutput sa_layer(const SaLayerSpec& spec, std::span<const Vec3> points,
                  const Matrix& features, std::size_t start_index, bool capture = false);

/// Returns dLoss/dFeatures for the layer input.
Matrix sa_backward(const SaLayerSpec& spec, const SaTape& tape,
                   const Matrix& grad_features, int input_feature_width,
                   DenseParams& grads);

// ---------------------------------------------------------------------------
// Feature propagation
// ---------------------------------------------------------------------------

struct Interpolation {
  // Up to three source neighbours per target with normalized weights.
  std::vector<std::array<std::size_t, 3>> neighbors;
  std::vector<std::array<double, 3>> weights;
  std::size_t count = 0;
};

Interpolation inverse_distance_weights(std::span<const Vec3> target,
                                       std::span<const Vec3> source);

Matrix interpolate(const Interpolation& interp, const Matrix& source_features);

struct FpTape {
  Interpolation interp;
  std::size_t source_points = 0;
  int source_width = 0;
  int skip_width = 0;
  DenseTape dense;
};

struct FpOutput {
  Matrix features;
  FpTape tape;
};

/// Interpolates source features onto the target points, concatenates
/// skip_features (when non-null), then applies the MLP.
FpOutput fp_layer(std::span<const Vec3> target, std::span<const Vec3> source,
                  const Matrix& source_features, const Matrix* skip_features,
                  const DenseParams& mlp, bool capture = false);

struct FpGradients {
  Matrix source;
  Matrix skip;
};

FpGradients fp_backward(const DenseParams& mlp, const FpTape& tape,
                        const Matrix& grad_features, DenseParams& grads);

// ---------------------------------------------------------------------------
// Cross-frame association head
// ---------------------------------------------------------------------------

enum class Fusion { kConcat, kElementwiseProduct, kCosineDistance, kDotProduct };

std::string to_string(Fusion fusion);
Fusion parse_fusion(std::string_view name);

/// Width of fuse(f_a, f_b) for features of width c.
int fused_width(Fusion fusion, int feature_width);

RowVector fuse_features(Fusion fusion, const RowVector& a, const RowVector& b);

struct AssociationSpec {
  std::size_t k = 16;
  Fusion fusion = Fusion::kConcat;
  DenseParams mlp;  // input width = fused_width + 3
};

struct AssociationTape {
  std::vector<std::size_t> neighbors;  // k per frame-A point
  GroupPoolTape pool;
};

struct AssociationOutput {
  Matrix features;
  AssociationTape tape;
};

/// For each frame-A point: its k nearest frame-B points, per-neighbour input
/// fuse(f_a, f_b) ++ (p_b - p_a), MLP, max over the k neighbours.
AssociationOutput association_head(const AssociationSpec& spec,
                                   std::span<const Vec3> points_a, const Matrix& features_a,
                                   std::span<const Vec3> points_b, const Matrix& features_b,
                                   bool capture = false);

struct AssociationGradients {
  Matrix features_a;
  Matrix features_b;
};

AssociationGradients association_backward(const AssociationSpec& spec,
                                          const AssociationTape& tape,
                                          const Matrix& features_a,
                                          const Matrix& features_b,
                                          const Matrix& grad_features,
                                          DenseParams& grads);

}  // namespace disptrack::micronet

#endif  // DISPTRACK_MICRONET_POINT_LAYERS_HPP_
