#ifndef DISPTRACK_MICRONET_OPTIM_HPP_
#define DISPTRACK_MICRONET_OPTIM_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "disptrack/micronet/dense.hpp"

namespace disptrack::micronet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptState {
  std::vector<DenseParams> first_moment;
  std::vector<DenseParams> second_moment;
  std::uint64_t step = 0;
};

/// Lazily sizes `state` on the first call.
void adam_step(std::span<DenseParams> params, std::span<const DenseParams> grads,
               OptState& state, double lr, const AdamConfig& config = {});
void adam_step(std::span<DenseParams* const> params, std::span<const DenseParams> grads,
               OptState& state, double lr, const AdamConfig& config = {});

/// Triangular cyclical learning rate: lr_low at step 0, lr_high at half a
/// cycle, periodic in steps_per_cycle.
double clr_schedule(std::uint64_t step, std::uint64_t steps_per_cycle, double lr_low = 1e-4,
                    double lr_high = 1e-3);

/// Loss closure over a flat parameter vector; fills `grad` when non-null.
using LossWithGradient =
    std::function<double(std::span<const double> params, std::vector<double>* grad)>;

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;
  std::size_t probes = 0;
  bool finite = true;
  // Per probe, the smallest error against the central, forward and backward
  // differences. A ReLU or max-pool switch inside +-epsilon spoils the
  // central difference but leaves one side intact.
  double max_kink_tolerant_error = 0.0;
  // Probes whose central error exceeds 1e-4 while a one-sided difference
  // agrees within 1e-4.
  std::size_t kinks = 0;
};

/// Central differences on `probe_count` distinct parameters drawn with `seed`
/// (all parameters when probe_count >= size). Relative error is
/// |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
GradientCheckReport gradient_check(const LossWithGradient& loss, std::span<const double> params,
                                   std::size_t probe_count, double epsilon = 1e-5,
                                   std::uint64_t seed = 0);

}  // namespace disptrack::micronet

#endif  // DISPTRACK_MICRONET_OPTIM_HPP_
