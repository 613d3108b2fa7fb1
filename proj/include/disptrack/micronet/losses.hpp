#ifndef DISPTRACK_MICRONET_LOSSES_HPP_
#define DISPTRACK_MICRONET_LOSSES_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "disptrack/geom.hpp"

namespace disptrack::micronet {

struct FocalLossResult {
  double loss = 0.0;
  std::vector<double> grad;  // dLoss/dp_t per input
  bool clamped = false;      // some p_t <= 0 was raised to 1e-12
};

/// mean_i -(1 - p_i)^gamma * log(p_i).
FocalLossResult focal_loss(std::span<const double> prob_true_class, double gamma);

/// Huber-style smooth L1 with unit transition point.
double smooth_l1(double x);

std::vector<double> softmax(std::span<const double> logits);

struct BoxLossTerms {
  double center = 0.0;
  double heading_cls = 0.0;
  double heading_reg = 0.0;
  double size_cls = 0.0;
  double size_reg = 0.0;
  double total() const { return center + heading_cls + heading_reg + size_cls + size_reg; }
};

/// Center, heading and size terms for one prediction against a target built
/// by encode_box. Classification terms are focal losses on softmax
/// probabilities; residual terms only look at the true bin.
BoxLossTerms box_loss(const BoxEncoding& pred, const BoxEncoding& target,
                      double gamma = 2.0);

struct TrackingLossResult {
  double loss = 0.0;
  std::vector<Vec3> grad;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// alpha * N/N_pos * sum_pos |pred - gt|^2 + beta * N/N_neg * sum_neg |pred - gt|^2.
/// Excluded points count toward neither N nor the sums; an empty side drops
/// its term.
TrackingLossResult tracking_loss(std::span<const Vec3> pred, std::span<const Vec3> target,
                                 const std::vector<bool>& foreground, double alpha,
                                 double beta, const std::vector<bool>& excluded = {});

}  // namespace disptrack::micronet

#endif  // DISPTRACK_MICRONET_LOSSES_HPP_
