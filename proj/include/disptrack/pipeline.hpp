#ifndef DISPTRACK_PIPELINE_HPP_
#define DISPTRACK_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <span>
#include <vector>

#include "disptrack/geom.hpp"
#include "disptrack/ingest.hpp"
#include "disptrack/kv_config.hpp"
#include "disptrack/micronet/checkpoint.hpp"
#include "disptrack/micronet/dense.hpp"
#include "disptrack/micronet/optim.hpp"
#include "disptrack/micronet/point_layers.hpp"

namespace disptrack {

struct Detections {
  std::vector<Box3D> boxes;
  std::vector<double> point_mask_probs;  // one per point of the frame
};

struct DisplacementField {
  std::vector<std::size_t> point_indices;  // into the frame-A cloud
  std::vector<Vec3> vectors;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SaSettings {
  std::size_t samples = 1;
  double radius = 1.0;
  std::size_t neighbor_cap = 16;
  std::vector<int> widths;  // output widths; the input width is implied
};

struct PipelineConfig {
  std::size_t n_input = 2048;
  std::size_t n_filtered = 512;
  std::size_t k = 16;
  micronet::Fusion fusion = micronet::Fusion::kConcat;
  double tau = 0.1;
  std::uint64_t seed = 0;

  SaSettings sa1{256, 0.5, 16, {8, 8, 16}};
  SaSettings sa2{64, 1.0, 16, {16, 16, 32}};
  std::vector<int> assoc_widths{32, 32};
  SaSettings sa3{16, 4.0, 16, {64, 64}};
  std::vector<int> fp1_widths{64, 64};
  std::vector<int> fp2_widths{32, 64, 64};
  std::vector<int> fp3_widths{64, 64};
  std::vector<int> head_widths{32, 3};

  // Training.
  double alpha = 1.0;
  double beta = 0.5;
  double gamma = 2.0;
  double lr_low = 1e-4;
  double lr_high = 1e-3;
  std::size_t clr_cycle_epochs = 8;
  std::size_t batch_size = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  static PipelineConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
};

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

/// Indices of the n highest probabilities (ties to the lower index), returned
/// in ascending index order.
std::vector<std::size_t> probability_filter(const PointCloud& cloud,
                                            std::span<const double> probs,
                                            std::size_t n_filtered);

struct DetectorNoise {
  double center_sigma = 0.0;
  double yaw_sigma = 0.0;
  double dropout = 0.0;
  double false_positive_rate = 0.0;  // expected spurious boxes per true box
  void validate() const;
};

/// Ground-truth boxes with optional perturbation. Mask probabilities are 1
/// inside surviving boxes (unperturbed geometry) and 0 elsewhere. Output
/// boxes carry no track id.
Detections oracle_detector(const PointCloud& frame, const FrameLabel& labels,
                           const DetectorNoise& noise, std::uint64_t seed);

struct MaskNetConfig {
  SaSettings sa1{128, 1.0, 16, {8, 8, 16}};
  SaSettings sa2{32, 2.0, 16, {16, 16, 32}};
  std::vector<int> fp1_widths{32, 32};
  std::vector<int> fp2_widths{32, 32};
  std::vector<int> head_widths{16, 2};
  std::size_t n_input = 2048;
  double gamma = 2.0;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Per-point foreground classifier: two SA levels, two FP levels, dense head,
/// softmax. Input feature is the point intensity (0 when absent).
struct MaskNet {
  MaskNetConfig config;
  micronet::DenseParams sa1, sa2, fp1, fp2, head;

  static MaskNet init(const MaskNetConfig& config, std::uint64_t seed);
  std::vector<micronet::DenseParams*> blocks();
};

/// Foreground probability per point. Clouds above config.n_input points are
/// classified on a seeded subsample and the rest take their nearest sampled
/// neighbour's probability.
std::vector<double> micro_mask_classifier(const PointCloud& frame, const MaskNet& model);

struct MaskTrainReport {
  std::vector<double> epoch_loss;
};

MaskTrainReport train_mask_net(MaskNet& model, std::span<const Sequence> sequences,
                               std::size_t epochs);

// ---------------------------------------------------------------------------
// Displacement network
// ---------------------------------------------------------------------------

struct AssociationModel {
  micronet::DenseParams sa1, sa2, assoc, sa3, fp1, fp2, fp3, head;

  static AssociationModel init(const PipelineConfig& config, std::uint64_t seed);
  std::vector<micronet::DenseParams*> blocks();
  std::vector<const micronet::DenseParams*> blocks() const;
  static const std::vector<std::string>& block_names();

  micronet::Checkpoint to_checkpoint(const PipelineConfig& config) const;
  /// Returns the model and the config stored with it.
  static std::pair<AssociationModel, PipelineConfig> from_checkpoint(
      const micronet::Checkpoint& checkpoint);
};

/// The filtered point sets fed to the network for one frame pair.
struct PairInput {
  std::vector<std::size_t> indices_a;  // into the original frame-A cloud
  std::vector<Vec3> points_a;
  micronet::Matrix features_a;  // mask probability, width 1
  std::vector<Vec3> points_b;
  micronet::Matrix features_b;
};

PairInput prepare_pair(const PointCloud& frame_a, const PointCloud& frame_b,
                       const Detections& detections_a, const Detections& detections_b,
                       const PipelineConfig& config);

struct ForwardTape;  // opaque; holds every intermediate needed by backward

struct ForwardResult {
  micronet::Matrix displacement;  // |points_a| x 3
  std::shared_ptr<ForwardTape> tape;
};

ForwardResult forward_pair(const AssociationModel& model, const PipelineConfig& config,
                           const PairInput& input, bool capture = false);

/// Accumulates into `grads` (same block order as model.blocks()).
void backward_pair(const AssociationModel& model, const PipelineConfig& config,
                   const ForwardTape& tape, const micronet::Matrix& grad_displacement,
                   std::vector<micronet::DenseParams>& grads);

DisplacementField predict_displacements(const PointCloud& frame_a, const PointCloud& frame_b,
                                        const Detections& detections_a,
                                        const Detections& detections_b,
                                        const AssociationModel& model,
                                        const PipelineConfig& config);

/// Tracking loss of one pair against label targets; fills `grads` when
/// non-null.
double pair_loss(const AssociationModel& model, const PipelineConfig& config,
                 const PairInput& input, const TrainingTargets& targets,
                 std::vector<micronet::DenseParams>* grads);

struct TrainingPair {
  PairInput input;
  TrainingTargets targets;  // on the original frame-A cloud
};

/// Every adjacent frame pair of every sequence, with zero-noise oracle
/// detections.
std::vector<TrainingPair> build_training_pairs(std::span<const Sequence> sequences,
                                               const PipelineConfig& config);

struct TrainResult {
  AssociationModel model;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;  // learning rate at each epoch's first step
};

using EpochCallback = std::function<void(std::size_t epoch, double loss, double lr)>;

TrainResult train_association(std::span<const Sequence> sequences, const PipelineConfig& config,
                              std::size_t epochs, const EpochCallback& on_epoch = {});

/// Finite-difference check of the tracking loss of one pair with respect to
/// every parameter of the model.
micronet::GradientCheckReport pipeline_gradient_check(const AssociationModel& model,
                                                      const PipelineConfig& config,
                                                      const TrainingPair& pair,
                                                      std::size_t probes, double epsilon,
                                                      std::uint64_t seed);

struct FieldError {
  double mean_error = 0.0;  // mean |pred - target| over scored points
  std::size_t points = 0;
  std::size_t pairs = 0;
};

/// Scores filtered foreground points that are not excluded.
FieldError evaluate_field_error(const AssociationModel& model, const PipelineConfig& config,
                                std::span<const TrainingPair> pairs);

/// Exact label displacement for the filtered frame-A points.
DisplacementField oracle_field(const PointCloud& frame_a, const FrameLabel& labels_a,
                               const FrameLabel& labels_b, const Detections& detections_a,
                               const PipelineConfig& config);

}  // namespace disptrack

#endif  // DISPTRACK_PIPELINE_HPP_
