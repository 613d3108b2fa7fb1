#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "disptrack/micronet/optim.hpp"

namespace disptrack::micronet {

GradientCheckReport gradient_check(const LossWithGradient& loss, std::span<const double> params,
                                   std::size_t probe_count, double epsilon,
                                   std::uint64_t seed) {
  GradientCheckReport report;
  std::vector<double> analytic;
  const double base = loss(params, &analytic);
  if (!std::isfinite(base) || analytic.size() != params.size()) {
    report.finite = false;
    report.max_relative_error = std::numeric_limits<double>::infinity();
    return report;
  }

  std::vector<std::size_t> order(params.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (probe_count < params.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(probe_count);
  }

  std::vector<double> work(params.begin(), params.end());
  for (std::size_t idx : order) {
    const double saved = work[idx];
    work[idx] = saved + epsilon;
    const double up = loss(work, nullptr);
    work[idx] = saved - epsilon;
    const double down = loss(work, nullptr);
    work[idx] = saved;
    ++report.probes;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      report.finite = false;
      report.max_relative_error = std::numeric_limits<double>::infinity();
      report.worst_parameter = idx;
      return report;
    }
    const double ga = analytic[idx];
    const auto rel_to = [ga](double numeric) {
      return std::abs(ga - numeric) / std::max({std::abs(ga), std::abs(numeric), 1e-8});
    };
    const double rel = rel_to((up - down) / (2.0 * epsilon));
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_parameter = idx;
    }
    const double one_sided = std::min(rel_to((up - base) / epsilon), rel_to((base - down) / epsilon));
    report.max_kink_tolerant_error =
        std::max(report.max_kink_tolerant_error, std::min(rel, one_sided));
    if (rel > 1e-4 && one_sided <= 1e-4) ++report.kinks;
  }
  return report;
}

}  // namespace disptrack::micronet
