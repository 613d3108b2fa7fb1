#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "disptrack/micronet/losses.hpp"
#include "disptrack/pipeline.hpp"

namespace disptrack {

using micronet::DenseParams;
using micronet::Matrix;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t start_index(std::uint64_t seed, std::uint64_t salt, std::size_t n) {
  return static_cast<std::size_t>(splitmix(seed * 31 + salt) % n);
}

std::vector<int> chain(int input, const std::vector<int>& widths) {
  std::vector<int> out{input};
  out.insert(out.end(), widths.begin(), widths.end());
  return out;
}

micronet::SaLayerSpec sa_spec(const SaSettings& s, const DenseParams& mlp, std::size_t n) {
  micronet::SaLayerSpec spec;
  spec.sample_count = std::min(s.samples, n);
  spec.radius = s.radius;
  spec.neighbor_cap = s.neighbor_cap;
  spec.mlp = mlp;
  return spec;
}

// Seeded subsample to n_input (ascending), then the probability filter.
std::vector<std::size_t> select_points(const PointCloud& cloud, const Detections& det,
                                       const PipelineConfig& config, std::uint64_t salt) {
  if (det.point_mask_probs.size() != cloud.size()) {
    throw std::invalid_argument("detections must carry one mask probability per point");
  }
  std::vector<std::size_t> subset(cloud.size());
  std::iota(subset.begin(), subset.end(), std::size_t{0});
  if (cloud.size() > config.n_input) {
    std::mt19937_64 rng(splitmix(config.seed ^ (salt << 32)));
    std::vector<std::size_t> chosen;
    chosen.reserve(config.n_input);
    std::sample(subset.begin(), subset.end(), std::back_inserter(chosen), config.n_input, rng);
    subset = std::move(chosen);
  }
  PointCloud sub;
  std::vector<double> probs;
  sub.points.reserve(subset.size());
  for (std::size_t i : subset) {
    sub.points.push_back(cloud.points[i]);
    probs.push_back(det.point_mask_probs[i]);
  }
  std::vector<std::size_t> kept = probability_filter(sub, probs, config.n_filtered);
  for (std::size_t& i : kept) i = subset[i];
  return kept;
}

}  // namespace

struct ForwardTape {
  micronet::SaLayerSpec sa1_a, sa1_b, sa2_a, sa2_b, sa3;
  micronet::AssociationSpec assoc_spec;
  micronet::SaOutput a1, b1, a2, b2, s3;
  micronet::AssociationOutput assoc;
  micronet::FpOutput f1, f2, f3;
  micronet::DenseTape head;
};

AssociationModel AssociationModel::init(const PipelineConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  AssociationModel m;
  const int sa1_out = config.sa1.widths.back();
  const int sa2_out = config.sa2.widths.back();
  const int assoc_out = config.assoc_widths.back();
  m.sa1 = DenseParams::glorot(chain(3 + 1, config.sa1.widths), rng);
  m.sa2 = DenseParams::glorot(chain(3 + sa1_out, config.sa2.widths), rng);
  m.assoc = DenseParams::glorot(
      chain(micronet::fused_width(config.fusion, sa2_out) + 3, config.assoc_widths), rng);
  m.sa3 = DenseParams::glorot(chain(3 + assoc_out, config.sa3.widths), rng);
  m.fp1 = DenseParams::glorot(chain(config.sa3.widths.back() + assoc_out, config.fp1_widths), rng);
  m.fp2 = DenseParams::glorot(chain(config.fp1_widths.back() + sa1_out, config.fp2_widths), rng);
  m.fp3 = DenseParams::glorot(chain(config.fp2_widths.back(), config.fp3_widths), rng);
  m.head = DenseParams::glorot(chain(config.fp3_widths.back(), config.head_widths), rng);
  return m;
}

std::vector<DenseParams*> AssociationModel::blocks() {
  return {&sa1, &sa2, &assoc, &sa3, &fp1, &fp2, &fp3, &head};
}

std::vector<const DenseParams*> AssociationModel::blocks() const {
  return {&sa1, &sa2, &assoc, &sa3, &fp1, &fp2, &fp3, &head};
}

const std::vector<std::string>& AssociationModel::block_names() {
  static const std::vector<std::string> names{"sa1", "sa2", "assoc", "sa3",
                                              "fp1", "fp2", "fp3",   "head"};
  return names;
}

micronet::Checkpoint AssociationModel::to_checkpoint(const PipelineConfig& config) const {
  micronet::Checkpoint cp;
  cp.config = config.to_config();
  const auto params = blocks();
  for (std::size_t i = 0; i < params.size(); ++i) {
    cp.blocks.emplace_back(block_names()[i], *params[i]);
  }
  return cp;
}

std::pair<AssociationModel, PipelineConfig> AssociationModel::from_checkpoint(
    const micronet::Checkpoint& checkpoint) {
  PipelineConfig config = PipelineConfig::from_config(checkpoint.config);
  AssociationModel model = init(config, 0);
  auto params = model.blocks();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const DenseParams& stored = checkpoint.block(block_names()[i]);
    if (stored.widths() != params[i]->widths()) {
      throw micronet::CheckpointError("checkpoint block '" + block_names()[i] +
                                      "' does not match its config");
    }
    *params[i] = stored;
  }
  return {std::move(model), config};
}

PairInput prepare_pair(const PointCloud& frame_a, const PointCloud& frame_b,
                       const Detections& detections_a, const Detections& detections_b,
                       const PipelineConfig& config) {
  PairInput in;
  in.indices_a = select_points(frame_a, detections_a, config, 1);
  const std::vector<std::size_t> indices_b = select_points(frame_b, detections_b, config, 2);
  if (in.indices_a.empty() || indices_b.empty()) {
    throw std::invalid_argument("predict_displacements: a frame is empty after filtering");
  }
  in.features_a.resize(static_cast<Eigen::Index>(in.indices_a.size()), 1);
  for (std::size_t r = 0; r < in.indices_a.size(); ++r) {
    in.points_a.push_back(frame_a.points[in.indices_a[r]]);
    in.features_a(static_cast<Eigen::Index>(r), 0) =
        detections_a.point_mask_probs[in.indices_a[r]];
  }
  in.features_b.resize(static_cast<Eigen::Index>(indices_b.size()), 1);
  for (std::size_t r = 0; r < indices_b.size(); ++r) {
    in.points_b.push_back(frame_b.points[indices_b[r]]);
    in.features_b(static_cast<Eigen::Index>(r), 0) = detections_b.point_mask_probs[indices_b[r]];
  }
  return in;
}

ForwardResult forward_pair(const AssociationModel& model, const PipelineConfig& config,
                           const PairInput& input, bool capture) {
  auto tape = std::make_shared<ForwardTape>();
  ForwardTape& t = *tape;
  const std::uint64_t seed = config.seed;

  t.sa1_a = sa_spec(config.sa1, model.sa1, input.points_a.size());
  t.sa1_b = sa_spec(config.sa1, model.sa1, input.points_b.size());
  t.a1 = micronet::sa_layer(t.sa1_a, input.points_a, input.features_a,
                            start_index(seed, 11, input.points_a.size()), capture);
  t.b1 = micronet::sa_layer(t.sa1_b, input.points_b, input.features_b,
                            start_index(seed, 12, input.points_b.size()), capture);

  t.sa2_a = sa_spec(config.sa2, model.sa2, t.a1.points.size());
  t.sa2_b = sa_spec(config.sa2, model.sa2, t.b1.points.size());
  t.a2 = micronet::sa_layer(t.sa2_a, t.a1.points, t.a1.features,
                            start_index(seed, 21, t.a1.points.size()), capture);
  t.b2 = micronet::sa_layer(t.sa2_b, t.b1.points, t.b1.features,
                            start_index(seed, 22, t.b1.points.size()), capture);

  if (config.k > t.b2.points.size()) {
    throw std::invalid_argument("k=" + std::to_string(config.k) + " exceeds the " +
                                std::to_string(t.b2.points.size()) +
                                " frame-B points at the association level; lower k");
  }
  t.assoc_spec.k = config.k;
  t.assoc_spec.fusion = config.fusion;
  t.assoc_spec.mlp = model.assoc;
  t.assoc = micronet::association_head(t.assoc_spec, t.a2.points, t.a2.features, t.b2.points,
                                       t.b2.features, capture);

  t.sa3 = sa_spec(config.sa3, model.sa3, t.a2.points.size());
  t.s3 = micronet::sa_layer(t.sa3, t.a2.points, t.assoc.features,
                            start_index(seed, 31, t.a2.points.size()), capture);

  t.f1 = micronet::fp_layer(t.a2.points, t.s3.points, t.s3.features, &t.assoc.features,
                            model.fp1, capture);
  t.f2 = micronet::fp_layer(t.a1.points, t.a2.points, t.f1.features, &t.a1.features, model.fp2,
                            capture);
  t.f3 = micronet::fp_layer(input.points_a, t.a1.points, t.f2.features, nullptr, model.fp3,
                            capture);
  micronet::DenseOutput head = micronet::dense_apply(model.head, t.f3.features, capture);

  ForwardResult out;
  out.displacement = std::move(head.output);
  if (capture) {
    t.head = std::move(head.tape);
    out.tape = std::move(tape);
  }
  return out;
}

void backward_pair(const AssociationModel& model, const PipelineConfig& config,
                   const ForwardTape& t, const Matrix& grad_displacement,
                   std::vector<DenseParams>& grads) {
  (void)config;
  if (grads.size() != 8) throw std::invalid_argument("backward_pair: need 8 gradient blocks");
  const Matrix g_f3 = micronet::dense_backward(model.head, t.head, grad_displacement, grads[7]);
  const micronet::FpGradients g3 = micronet::fp_backward(model.fp3, t.f3.tape, g_f3, grads[6]);
  const micronet::FpGradients g2 = micronet::fp_backward(model.fp2, t.f2.tape, g3.source, grads[5]);
  const micronet::FpGradients g1 = micronet::fp_backward(model.fp1, t.f1.tape, g2.source, grads[4]);

  const int assoc_width = static_cast<int>(t.assoc.features.cols());
  Matrix g_assoc = g1.skip;
  g_assoc += micronet::sa_backward(t.sa3, t.s3.tape, g1.source, assoc_width, grads[3]);

  const micronet::AssociationGradients ga = micronet::association_backward(
      t.assoc_spec, t.assoc.tape, t.a2.features, t.b2.features, g_assoc, grads[2]);

  const int sa1_width = static_cast<int>(t.a1.features.cols());
  Matrix g_a1 = g2.skip;
  g_a1 += micronet::sa_backward(t.sa2_a, t.a2.tape, ga.features_a, sa1_width, grads[1]);
  const Matrix g_b1 = micronet::sa_backward(t.sa2_b, t.b2.tape, ga.features_b, sa1_width, grads[1]);

  micronet::sa_backward(t.sa1_a, t.a1.tape, g_a1, 1, grads[0]);
  micronet::sa_backward(t.sa1_b, t.b1.tape, g_b1, 1, grads[0]);
}

DisplacementField predict_displacements(const PointCloud& frame_a, const PointCloud& frame_b,
                                        const Detections& detections_a,
                                        const Detections& detections_b,
                                        const AssociationModel& model,
                                        const PipelineConfig& config) {
  const PairInput input = prepare_pair(frame_a, frame_b, detections_a, detections_b, config);
  const ForwardResult result = forward_pair(model, config, input, false);
  DisplacementField field;
  field.point_indices = input.indices_a;
  field.vectors.reserve(input.indices_a.size());
  for (Eigen::Index r = 0; r < result.displacement.rows(); ++r) {
    field.vectors.emplace_back(result.displacement(r, 0), result.displacement(r, 1),
                               result.displacement(r, 2));
  }
  return field;
}

double pair_loss(const AssociationModel& model, const PipelineConfig& config,
                 const PairInput& input, const TrainingTargets& targets,
                 std::vector<DenseParams>* grads) {
  const ForwardResult result = forward_pair(model, config, input, grads != nullptr);
  const std::size_t n = input.indices_a.size();
  std::vector<Vec3> pred(n), target(n);
  std::vector<bool> foreground(n), excluded(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = input.indices_a[r];
    const auto row = static_cast<Eigen::Index>(r);
    pred[r] = Vec3(result.displacement(row, 0), result.displacement(row, 1),
                   result.displacement(row, 2));
    target[r] = targets.displacement.at(i);
    foreground[r] = targets.foreground.at(i);
    excluded[r] = targets.excluded.at(i);
  }
  const micronet::TrackingLossResult loss =
      micronet::tracking_loss(pred, target, foreground, config.alpha, config.beta, excluded);
  if (grads) {
    Matrix grad(static_cast<Eigen::Index>(n), 3);
    for (std::size_t r = 0; r < n; ++r) grad.row(static_cast<Eigen::Index>(r)) = loss.grad[r].transpose();
    backward_pair(model, config, *result.tape, grad, *grads);
  }
  return loss.loss;
}

std::vector<TrainingPair> build_training_pairs(std::span<const Sequence> sequences,
                                               const PipelineConfig& config) {
  std::vector<TrainingPair> pairs;
  const DetectorNoise exact;
  for (const Sequence& seq : sequences) {
    for (std::size_t t = 1; t < seq.frames.size(); ++t) {
      const Frame& a = seq.frames[t - 1];
      const Frame& b = seq.frames[t];
      const Detections det_a = oracle_detector(a.cloud, a.label, exact, 0);
      const Detections det_b = oracle_detector(b.cloud, b.label, exact, 0);
      TrainingPair pair;
      pair.input = prepare_pair(a.cloud, b.cloud, det_a, det_b, config);
      pair.targets = label_targets(a.cloud, a.label, b.label);
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

FieldError evaluate_field_error(const AssociationModel& model, const PipelineConfig& config,
                                std::span<const TrainingPair> pairs) {
  FieldError err;
  double total = 0.0;
  for (const TrainingPair& pair : pairs) {
    const ForwardResult result = forward_pair(model, config, pair.input, false);
    for (std::size_t r = 0; r < pair.input.indices_a.size(); ++r) {
      const std::size_t i = pair.input.indices_a[r];
      if (!pair.targets.foreground[i] || pair.targets.excluded[i]) continue;
      const auto row = static_cast<Eigen::Index>(r);
      const Vec3 pred(result.displacement(row, 0), result.displacement(row, 1),
                      result.displacement(row, 2));
      total += (pred - pair.targets.displacement[i]).norm();
      ++err.points;
    }
    ++err.pairs;
  }
  if (err.points) err.mean_error = total / static_cast<double>(err.points);
  return err;
}

DisplacementField oracle_field(const PointCloud& frame_a, const FrameLabel& labels_a,
                               const FrameLabel& labels_b, const Detections& detections_a,
                               const PipelineConfig& config) {
  DisplacementField field;
  field.point_indices = select_points(frame_a, detections_a, config, 1);
  const TrainingTargets targets = label_targets(frame_a, labels_a, labels_b);
  for (std::size_t i : field.point_indices) field.vectors.push_back(targets.displacement[i]);
  return field;
}

}  // namespace disptrack
