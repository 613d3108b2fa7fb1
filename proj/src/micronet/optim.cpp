#include <cmath>
#include <stdexcept>

#include "disptrack/micronet/optim.hpp"

namespace disptrack::micronet {

void adam_step(std::span<DenseParams> params, std::span<const DenseParams> grads,
               OptState& state, double lr, const AdamConfig& config) {
  std::vector<DenseParams*> ptrs;
  for (DenseParams& p : params) ptrs.push_back(&p);
  adam_step(std::span<DenseParams* const>(ptrs), grads, state, lr, config);
}

void adam_step(std::span<DenseParams* const> params, std::span<const DenseParams> grads,
               OptState& state, double lr, const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient block counts differ");
  }
  if (state.first_moment.empty()) {
    for (const DenseParams* p : params) {
      state.first_moment.push_back(p->zeros_like());
      state.second_moment.push_back(p->zeros_like());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);

  auto update = [&](auto& w, const auto& g, auto& m, auto& v) {
    if (w.rows() != g.rows() || w.cols() != g.cols()) {
      throw std::invalid_argument("adam_step: shape mismatch");
    }
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
  };

  for (std::size_t b = 0; b < params.size(); ++b) {
    DenseParams& p = *params[b];
    const DenseParams& g = grads[b];
    if (p.layer_count() != g.layer_count()) {
      throw std::invalid_argument("adam_step: layer count mismatch");
    }
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      update(p.weights[l], g.weights[l], state.first_moment[b].weights[l],
             state.second_moment[b].weights[l]);
      update(p.biases[l], g.biases[l], state.first_moment[b].biases[l],
             state.second_moment[b].biases[l]);
    }
  }
}

double clr_schedule(std::uint64_t step, std::uint64_t steps_per_cycle, double lr_low,
                    double lr_high) {
  if (steps_per_cycle == 0 || steps_per_cycle % 2 != 0) {
    throw std::invalid_argument("clr_schedule: steps_per_cycle must be even and positive");
  }
  const std::uint64_t half = steps_per_cycle / 2;
  const std::uint64_t phase = step % steps_per_cycle;
  const std::uint64_t rising = phase <= half ? phase : steps_per_cycle - phase;
  return lr_low + (lr_high - lr_low) * static_cast<double>(rising) / static_cast<double>(half);
}

}  // namespace disptrack::micronet
