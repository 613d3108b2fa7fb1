#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "disptrack/pipeline.hpp"

namespace disptrack {

TrainResult train_association(std::span<const Sequence> sequences, const PipelineConfig& config,
                              std::size_t epochs, const EpochCallback& on_epoch) {
  config.validate();
  if (config.clr_cycle_epochs % 2 != 0) {
    throw std::invalid_argument("clr_cycle_epochs must be even for a symmetric cycle");
  }
  std::vector<TrainingPair> pairs = build_training_pairs(sequences, config);
  if (pairs.empty()) throw std::invalid_argument("train_association: no adjacent frame pairs");

  TrainResult result;
  result.model = AssociationModel::init(config, config.seed);
  if (epochs == 0) return result;

  auto params = result.model.blocks();
  std::vector<micronet::DenseParams> grads;
  for (const auto* p : params) grads.push_back(p->zeros_like());

  micronet::OptState state;
  const micronet::AdamConfig adam{config.adam_beta1, config.adam_beta2, config.adam_epsilon};
  const std::size_t batch = config.batch_size;
  const std::size_t steps_per_epoch = (pairs.size() + batch - 1) / batch;
  const std::size_t steps_per_cycle = config.clr_cycle_epochs * steps_per_epoch;

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed ^ 0x5eedULL);
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    result.epoch_lr.push_back(
        micronet::clr_schedule(step, steps_per_cycle, config.lr_low, config.lr_high));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      for (auto& g : grads) g.set_zero();
      for (std::size_t j = start; j < end; ++j) {
        epoch_total += pair_loss(result.model, config, pairs[order[j]].input,
                                 pairs[order[j]].targets, &grads);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) {
        for (auto& w : g.weights) w *= inv;
        for (auto& b : g.biases) b *= inv;
      }
      const double lr =
          micronet::clr_schedule(step, steps_per_cycle, config.lr_low, config.lr_high);
      micronet::adam_step(std::span<micronet::DenseParams* const>(params), grads, state, lr,
                          adam);
      ++step;
    }
    const double mean_loss = epoch_total / static_cast<double>(pairs.size());
    for (const auto* p : params) {
      if (!p->all_finite()) throw std::runtime_error("training diverged: non-finite parameters");
    }
    result.epoch_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss, result.epoch_lr.back());
  }
  return result;
}

micronet::GradientCheckReport pipeline_gradient_check(const AssociationModel& model,
                                                      const PipelineConfig& config,
                                                      const TrainingPair& pair,
                                                      std::size_t probes, double epsilon,
                                                      std::uint64_t seed) {
  std::vector<micronet::DenseParams> blocks;
  for (const micronet::DenseParams* p : model.blocks()) blocks.push_back(*p);
  const std::vector<double> flat = micronet::flatten(blocks);

  micronet::LossWithGradient closure = [&](std::span<const double> values,
                                           std::vector<double>* grad) {
    AssociationModel m = model;
    std::vector<micronet::DenseParams*> ptrs = m.blocks();
    std::vector<micronet::DenseParams> staged = blocks;
    micronet::unflatten(values, staged);
    for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = staged[i];
    if (grad == nullptr) return pair_loss(m, config, pair.input, pair.targets, nullptr);
    std::vector<micronet::DenseParams> grads;
    for (const auto& b : staged) grads.push_back(b.zeros_like());
    const double loss = pair_loss(m, config, pair.input, pair.targets, &grads);
    *grad = micronet::flatten(grads);
    return loss;
  };
  return micronet::gradient_check(closure, flat, probes, epsilon, seed);
}

}  // namespace disptrack
