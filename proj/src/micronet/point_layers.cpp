#include "disptrack/micronet/point_layers.hpp"

#include <stdexcept>
#include <string>

namespace disptrack::micronet {

GroupPoolOutput group_mlp_max(const DenseParams& mlp, const Matrix& stacked,
                              std::span<const std::size_t> offsets, bool capture) {
  DenseOutput dense = dense_apply(mlp, stacked, capture);
  const Eigen::Index groups = static_cast<Eigen::Index>(offsets.size()) - 1;
  const Eigen::Index channels = dense.output.cols();
  GroupPoolOutput out;
  out.pooled.resize(groups, channels);
  out.tape.argmax.resize(groups, channels);
  for (Eigen::Index g = 0; g < groups; ++g) {
    const auto begin = static_cast<Eigen::Index>(offsets[static_cast<std::size_t>(g)]);
    const auto end = static_cast<Eigen::Index>(offsets[static_cast<std::size_t>(g) + 1]);
    if (end <= begin) throw std::logic_error("group_mlp_max: empty group");
    for (Eigen::Index c = 0; c < channels; ++c) {
      Eigen::Index best = begin;
      for (Eigen::Index r = begin + 1; r < end; ++r) {
        if (dense.output(r, c) > dense.output(best, c)) best = r;
      }
      out.pooled(g, c) = dense.output(best, c);
      out.tape.argmax(g, c) = static_cast<int>(best);
    }
  }
  if (capture) {
    out.tape.dense = std::move(dense.tape);
    out.tape.offsets.assign(offsets.begin(), offsets.end());
  }
  return out;
}

Matrix group_mlp_max_backward(const DenseParams& mlp, const GroupPoolTape& tape,
                              const Matrix& grad_pooled, DenseParams& grads) {
  const Eigen::Index rows = static_cast<Eigen::Index>(tape.offsets.back());
  Matrix grad_rows = Matrix::Zero(rows, grad_pooled.cols());
  for (Eigen::Index g = 0; g < grad_pooled.rows(); ++g) {
    for (Eigen::Index c = 0; c < grad_pooled.cols(); ++c) {
      grad_rows(tape.argmax(g, c), c) += grad_pooled(g, c);
    }
  }
  return dense_backward(mlp, tape.dense, grad_rows, grads);
}

SaOutput sa_layer(const SaLayerSpec& spec, std::span<const Vec3> points,
                  const Matrix& features, std::size_t start_index, bool capture) {
  if (spec.sample_count < 1 || spec.sample_count > points.size()) {
    throw std::invalid_argument("sa_layer: sample_count " + std::to_string(spec.sample_count) +
                                " not in [1, " + std::to_string(points.size()) + "]");
  }
  if (static_cast<std::size_t>(features.rows()) != points.size()) {
    throw std::invalid_argument("sa_layer: feature rows != point count");
  }
  const auto feat_width = features.cols();
  if (spec.mlp.input_width() != 3 + feat_width) {
    throw std::invalid_argument("sa_layer: mlp input width must be 3 + feature width");
  }

  SaOutput out;
  out.sampled = farthest_point_sample(points, spec.sample_count, start_index);
  std::vector<std::size_t> members;
  std::vector<std::size_t> offsets{0};
  for (std::size_t centroid : out.sampled) {
    auto group = ball_query(points[centroid], spec.radius, points, spec.neighbor_cap);
    if (group.empty()) group.push_back(centroid);
    members.insert(members.end(), group.begin(), group.end());
    offsets.push_back(members.size());
  }

  Matrix stacked(static_cast<Eigen::Index>(members.size()), 3 + feat_width);
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    const Vec3& c = points[out.sampled[g]];
    for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      const std::size_t j = members[r];
      stacked.row(row).head<3>() = (points[j] - c).transpose();
      if (feat_width > 0) {
        stacked.row(row).tail(feat_width) = features.row(static_cast<Eigen::Index>(j));
      }
    }
  }

  GroupPoolOutput pooled = group_mlp_max(spec.mlp, stacked, offsets, capture);
  out.features = std::move(pooled.pooled);
  out.points.reserve(out.sampled.size());
  for (std::size_t idx : out.sampled) out.points.push_back(points[idx]);
  if (capture) {
    out.tape.input_points = points.size();
    out.tape.members = std::move(members);
    out.tape.pool = std::move(pooled.tape);
  }
  return out;
}

Matrix sa_backward(const SaLayerSpec& spec, const SaTape& tape,
                   const Matrix& grad_features, int input_feature_width,
                   DenseParams& grads) {
  const Matrix grad_rows = group_mlp_max_backward(spec.mlp, tape.pool, grad_features, grads);
  Matrix grad_in = Matrix::Zero(static_cast<Eigen::Index>(tape.input_points), input_feature_width);
  if (input_feature_width == 0) return grad_in;
  for (std::size_t r = 0; r < tape.members.size(); ++r) {
    grad_in.row(static_cast<Eigen::Index>(tape.members[r])) +=
        grad_rows.row(static_cast<Eigen::Index>(r)).tail(input_feature_width);
  }
  return grad_in;
}

Interpolation inverse_distance_weights(std::span<const Vec3> target,
                                       std::span<const Vec3> source) {
  if (source.empty()) throw std::invalid_argument("fp_layer: empty source points");
  Interpolation interp;
  interp.count = std::min<std::size_t>(3, source.size());
  interp.neighbors.resize(target.size());
  interp.weights.resize(target.size());
  for (std::size_t t = 0; t < target.size(); ++t) {
    const KnnResult nn = knn(target[t], source, interp.count);
    double total = 0.0;
    std::array<double, 3> w{0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < interp.count; ++j) {
      w[j] = 1.0 / (nn.distances[j] + 1e-10);
      total += w[j];
      interp.neighbors[t][j] = nn.indices[j];
    }
    for (std::size_t j = 0; j < interp.count; ++j) w[j] /= total;
    interp.weights[t] = w;
  }
  return interp;
}

Matrix interpolate(const Interpolation& interp, const Matrix& source_features) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(interp.neighbors.size()),
                            source_features.cols());
  for (std::size_t t = 0; t < interp.neighbors.size(); ++t) {
    for (std::size_t j = 0; j < interp.count; ++j) {
      out.row(static_cast<Eigen::Index>(t)) +=
          interp.weights[t][j] *
          source_features.row(static_cast<Eigen::Index>(interp.neighbors[t][j]));
    }
  }
  return out;
}

FpOutput fp_layer(std::span<const Vec3> target, std::span<const Vec3> source,
                  const Matrix& source_features, const Matrix* skip_features,
                  const DenseParams& mlp, bool capture) {
  if (static_cast<std::size_t>(source_features.rows()) != source.size()) {
    throw std::invalid_argument("fp_layer: source feature rows != source point count");
  }
  if (skip_features && static_cast<std::size_t>(skip_features->rows()) != target.size()) {
    throw std::invalid_argument("fp_layer: skip feature rows != target point count");
  }
  const auto source_width = source_features.cols();
  const auto skip_width = skip_features ? skip_features->cols() : 0;
  if (mlp.input_width() != source_width + skip_width) {
    throw std::invalid_argument("fp_layer: mlp input width " + std::to_string(mlp.input_width()) +
                                " != " + std::to_string(source_width + skip_width));
  }
  Interpolation interp = inverse_distance_weights(target, source);
  Matrix input(static_cast<Eigen::Index>(target.size()), source_width + skip_width);
  input.leftCols(source_width) = interpolate(interp, source_features);
  if (skip_width > 0) input.rightCols(skip_width) = *skip_features;

  DenseOutput dense = dense_apply(mlp, input, capture);
  FpOutput out;
  out.features = std::move(dense.output);
  if (capture) {
    out.tape.interp = std::move(interp);
    out.tape.source_points = source.size();
    out.tape.source_width = static_cast<int>(source_width);
    out.tape.skip_width = static_cast<int>(skip_width);
    out.tape.dense = std::move(dense.tape);
  }
  return out;
}

FpGradients fp_backward(const DenseParams& mlp, const FpTape& tape,
                        const Matrix& grad_features, DenseParams& grads) {
  const Matrix grad_in = dense_backward(mlp, tape.dense, grad_features, grads);
  FpGradients out;
  out.source = Matrix::Zero(static_cast<Eigen::Index>(tape.source_points), tape.source_width);
  out.skip = grad_in.rightCols(tape.skip_width);
  const auto& interp = tape.interp;
  for (std::size_t t = 0; t < interp.neighbors.size(); ++t) {
    const auto g = grad_in.row(static_cast<Eigen::Index>(t)).head(tape.source_width);
    for (std::size_t j = 0; j < interp.count; ++j) {
      out.source.row(static_cast<Eigen::Index>(interp.neighbors[t][j])) +=
          interp.weights[t][j] * g;
    }
  }
  return out;
}

}  // namespace disptrack::micronet
