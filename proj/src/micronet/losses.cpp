#include "disptrack/micronet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace disptrack::micronet {

FocalLossResult focal_loss(std::span<const double> prob_true_class, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  FocalLossResult out;
  out.grad.resize(prob_true_class.size(), 0.0);
  if (prob_true_class.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(prob_true_class.size());
  for (std::size_t i = 0; i < prob_true_class.size(); ++i) {
    double p = prob_true_class[i];
    if (p <= 0.0) {
      p = 1e-12;
      out.clamped = true;
    }
    p = std::min(p, 1.0);
    const double q = 1.0 - p;
    const double log_p = std::log(p);
    const double weight = std::pow(q, gamma);
    out.loss -= weight * log_p;
    // d/dp [-(1-p)^g log p] = g (1-p)^(g-1) log p - (1-p)^g / p; the first
    // term vanishes at p = 1.
    const double first = (q > 0.0 && gamma > 0.0) ? gamma * std::pow(q, gamma - 1.0) * log_p : 0.0;
    out.grad[i] = (first - weight / p) * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

BoxLossTerms box_loss(const BoxEncoding& pred, const BoxEncoding& target, double gamma) {
  if (pred.heading_bin_logits.size() != target.heading_bin_logits.size() ||
      pred.heading_residuals.size() != target.heading_residuals.size() ||
      pred.size_bin_logits.size() != target.size_bin_logits.size() ||
      pred.size_residuals.size() != target.size_residuals.size() ||
      pred.class_logits.size() != target.class_logits.size() ||
      pred.heading_bin_logits.empty() || pred.size_bin_logits.empty()) {
    throw std::invalid_argument("box_loss: prediction and target shapes differ");
  }
  BoxLossTerms terms;
  for (int a = 0; a < 3; ++a) terms.center += smooth_l1(pred.center[a] - target.center[a]);

  const std::size_t hbin = argmax_lowest(target.heading_bin_logits);
  const double p_heading = softmax(pred.heading_bin_logits)[hbin];
  terms.heading_cls = focal_loss(std::span<const double>(&p_heading, 1), gamma).loss;
  terms.heading_reg =
      smooth_l1(pred.heading_residuals[hbin] - target.heading_residuals[hbin]);

  const std::size_t sbin = argmax_lowest(target.size_bin_logits);
  const double p_size = softmax(pred.size_bin_logits)[sbin];
  terms.size_cls = focal_loss(std::span<const double>(&p_size, 1), gamma).loss;
  for (int a = 0; a < 3; ++a) {
    terms.size_reg += smooth_l1(pred.size_residuals[sbin][a] - target.size_residuals[sbin][a]);
  }
  return terms;
}

TrackingLossResult tracking_loss(std::span<const Vec3> pred, std::span<const Vec3> target,
                                 const std::vector<bool>& foreground, double alpha,
                                 double beta, const std::vector<bool>& excluded) {
  if (pred.size() != target.size() || pred.size() != foreground.size() ||
      (!excluded.empty() && excluded.size() != pred.size())) {
    throw std::invalid_argument("tracking_loss: length mismatch");
  }
  if (pred.empty()) throw std::invalid_argument("tracking_loss: no points");
  TrackingLossResult out;
  out.grad.assign(pred.size(), Vec3::Zero());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!excluded.empty() && excluded[i]) continue;
    (foreground[i] ? out.positives : out.negatives) += 1;
  }
  const double n = static_cast<double>(out.positives + out.negatives);
  const double w_pos = out.positives ? alpha * n / static_cast<double>(out.positives) : 0.0;
  const double w_neg = out.negatives ? beta * n / static_cast<double>(out.negatives) : 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!excluded.empty() && excluded[i]) continue;
    const double w = foreground[i] ? w_pos : w_neg;
    const Vec3 err = pred[i] - target[i];
    out.loss += w * err.squaredNorm();
    out.grad[i] = 2.0 * w * err;
  }
  return out;
}

}  // namespace disptrack::micronet
