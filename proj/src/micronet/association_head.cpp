#include <stdexcept>
#include <string>

#include "disptrack/micronet/point_layers.hpp"

namespace disptrack::micronet {
namespace {

constexpr double kCosineEps = 1e-10;

using RowRef = Eigen::Ref<RowVector, 0, Eigen::InnerStride<>>;

// Accumulates dLoss/da and dLoss/db given dLoss/dFused.
void fuse_backward(Fusion fusion, const RowVector& a, const RowVector& b,
                   const RowVector& grad_fused, RowRef grad_a, RowRef grad_b) {
  const auto c = a.size();
  switch (fusion) {
    case Fusion::kConcat:
      grad_a += grad_fused.head(c);
      grad_b += grad_fused.tail(c);
      break;
    case Fusion::kElementwiseProduct:
      grad_a += grad_fused.cwiseProduct(b);
      grad_b += grad_fused.cwiseProduct(a);
      break;
    case Fusion::kDotProduct:
      grad_a += grad_fused(0) * b;
      grad_b += grad_fused(0) * a;
      break;
    case Fusion::kCosineDistance: {
      const double na = a.norm();
      const double nb = b.norm();
      const double denom = na * nb + kCosineEps;
      const double dot = a.dot(b);
      const double g = grad_fused(0);
      grad_a += g * (b / denom);
      grad_b += g * (a / denom);
      if (na > 0.0) grad_a -= g * (dot * nb / (denom * denom * na)) * a;
      if (nb > 0.0) grad_b -= g * (dot * na / (denom * denom * nb)) * b;
      break;
    }
  }
}

}  // namespace

std::string to_string(Fusion fusion) {
  switch (fusion) {
    case Fusion::kConcat: return "concat";
    case Fusion::kElementwiseProduct: return "elementwise_product";
    case Fusion::kCosineDistance: return "cosine_distance";
    case Fusion::kDotProduct: return "dot_product";
  }
  return "concat";
}

Fusion parse_fusion(std::string_view name) {
  if (name == "concat") return Fusion::kConcat;
  if (name == "elementwise_product") return Fusion::kElementwiseProduct;
  if (name == "cosine_distance") return Fusion::kCosineDistance;
  if (name == "dot_product") return Fusion::kDotProduct;
  throw std::invalid_argument("unknown fusion method '" + std::string(name) + "'");
}

int fused_width(Fusion fusion, int feature_width) {
  switch (fusion) {
    case Fusion::kConcat: return 2 * feature_width;
    case Fusion::kElementwiseProduct: return feature_width;
    case Fusion::kCosineDistance:
    case Fusion::kDotProduct: return 1;
  }
  return 0;
}

RowVector fuse_features(Fusion fusion, const RowVector& a, const RowVector& b) {
  switch (fusion) {
    case Fusion::kConcat: {
      RowVector out(a.size() + b.size());
      out << a, b;
      return out;
    }
    case Fusion::kElementwiseProduct:
      return a.cwiseProduct(b);
    case Fusion::kDotProduct:
      return RowVector::Constant(1, a.dot(b));
    case Fusion::kCosineDistance:
      return RowVector::Constant(1, a.dot(b) / (a.norm() * b.norm() + kCosineEps));
  }
  return {};
}

AssociationOutput association_head(const AssociationSpec& spec,
                                   std::span<const Vec3> points_a, const Matrix& features_a,
                                   std::span<const Vec3> points_b, const Matrix& features_b,
                                   bool capture) {
  if (spec.k < 1 || spec.k > points_b.size()) {
    throw std::invalid_argument("association_head: k=" + std::to_string(spec.k) +
                                " exceeds the " + std::to_string(points_b.size()) +
                                " frame-B points");
  }
  if (features_a.cols() != features_b.cols()) {
    throw std::invalid_argument("association_head: feature widths differ");
  }
  if (static_cast<std::size_t>(features_a.rows()) != points_a.size() ||
      static_cast<std::size_t>(features_b.rows()) != points_b.size()) {
    throw std::invalid_argument("association_head: feature rows != point count");
  }
  const int fw = fused_width(spec.fusion, static_cast<int>(features_a.cols()));
  if (spec.mlp.input_width() != fw + 3) {
    throw std::invalid_argument("association_head: mlp input width must be " +
                                std::to_string(fw + 3));
  }

  const std::size_t k = spec.k;
  std::vector<std::size_t> neighbors;
  neighbors.reserve(points_a.size() * k);
  Matrix stacked(static_cast<Eigen::Index>(points_a.size() * k), fw + 3);
  std::vector<std::size_t> offsets{0};
  for (std::size_t i = 0; i < points_a.size(); ++i) {
    const KnnResult nn = knn(points_a[i], points_b, k);
    const RowVector fa = features_a.row(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t b = nn.indices[j];
      const auto row = static_cast<Eigen::Index>(i * k + j);
      stacked.row(row).head(fw) =
          fuse_features(spec.fusion, fa, features_b.row(static_cast<Eigen::Index>(b)));
      stacked.row(row).tail<3>() = (points_b[b] - points_a[i]).transpose();
      neighbors.push_back(b);
    }
    offsets.push_back(neighbors.size());
  }

  GroupPoolOutput pooled = group_mlp_max(spec.mlp, stacked, offsets, capture);
  AssociationOutput out;
  out.features = std::move(pooled.pooled);
  if (capture) {
    out.tape.neighbors = std::move(neighbors);
    out.tape.pool = std::move(pooled.tape);
  }
  return out;
}

AssociationGradients association_backward(const AssociationSpec& spec,
                                          const AssociationTape& tape,
                                          const Matrix& features_a,
                                          const Matrix& features_b,
                                          const Matrix& grad_features,
                                          DenseParams& grads) {
  const Matrix grad_rows = group_mlp_max_backward(spec.mlp, tape.pool, grad_features, grads);
  const int fw = fused_width(spec.fusion, static_cast<int>(features_a.cols()));
  AssociationGradients out;
  out.features_a = Matrix::Zero(features_a.rows(), features_a.cols());
  out.features_b = Matrix::Zero(features_b.rows(), features_b.cols());
  const std::size_t k = spec.k;
  for (std::size_t r = 0; r < tape.neighbors.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r / k);
    const auto b = static_cast<Eigen::Index>(tape.neighbors[r]);
    const RowVector g = grad_rows.row(static_cast<Eigen::Index>(r)).head(fw);
    fuse_backward(spec.fusion, features_a.row(i), features_b.row(b), g,
                  out.features_a.row(i), out.features_b.row(b));
  }
  return out;
}

}  // namespace disptrack::micronet
