#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "disptrack/geom.hpp"

namespace disptrack {

void BoxCodec::validate() const {
  if (num_heading_bins < 1) {
    throw std::invalid_argument("BoxCodec: need at least one heading bin");
  }
  if (size_templates.empty()) {
    throw std::invalid_argument("BoxCodec: need at least one size template");
  }
  for (const Vec3& t : size_templates) {
    if (!(t.array() > 0.0).all()) {
      throw std::invalid_argument("BoxCodec: size templates must be positive");
    }
  }
  if (num_classes < 1) {
    throw std::invalid_argument("BoxCodec: need at least one class");
  }
}

std::size_t BoxEncoding::length() const noexcept {
  return 2 + 3 + heading_bin_logits.size() + heading_residuals.size() +
         size_bin_logits.size() + 3 * size_residuals.size() +
         class_logits.size();
}

std::vector<double> BoxEncoding::flatten() const {
  std::vector<double> out;
  out.reserve(length());
  out.insert(out.end(), objectness.begin(), objectness.end());
  out.insert(out.end(), {center.x(), center.y(), center.z()});
  out.insert(out.end(), heading_bin_logits.begin(), heading_bin_logits.end());
  out.insert(out.end(), heading_residuals.begin(), heading_residuals.end());
  out.insert(out.end(), size_bin_logits.begin(), size_bin_logits.end());
  for (const Vec3& r : size_residuals) out.insert(out.end(), {r.x(), r.y(), r.z()});
  out.insert(out.end(), class_logits.begin(), class_logits.end());
  return out;
}

BoxEncoding BoxEncoding::unflatten(std::span<const double> values,
                                   const BoxCodec& codec) {
  if (values.size() != codec.encoding_length()) {
    throw std::invalid_argument("BoxEncoding: expected " +
                                std::to_string(codec.encoding_length()) +
                                " values, got " + std::to_string(values.size()));
  }
  const auto nh = static_cast<std::size_t>(codec.num_heading_bins);
  const auto ns = codec.size_templates.size();
  const auto nc = static_cast<std::size_t>(codec.num_classes);
  BoxEncoding enc;
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    std::vector<double> v(values.begin() + static_cast<long>(at),
                          values.begin() + static_cast<long>(at + n));
    at += n;
    return v;
  };
  enc.objectness = {values[0], values[1]};
  enc.center = Vec3(values[2], values[3], values[4]);
  at = 5;
  enc.heading_bin_logits = take(nh);
  enc.heading_residuals = take(nh);
  enc.size_bin_logits = take(ns);
  const std::vector<double> sr = take(3 * ns);
  for (std::size_t j = 0; j < ns; ++j) {
    enc.size_residuals.emplace_back(sr[3 * j], sr[3 * j + 1], sr[3 * j + 2]);
  }
  enc.class_logits = take(nc);
  return enc;
}

HeadingBin heading_to_bin(double yaw, int num_heading_bins) {
  const double step = 2.0 * kPi / num_heading_bins;
  double positive = std::fmod(yaw, 2.0 * kPi);
  if (positive < 0.0) positive += 2.0 * kPi;
  int bin = static_cast<int>(std::floor(positive / step));
  if (bin >= num_heading_bins) bin = num_heading_bins - 1;
  return {bin, positive - (bin + 0.5) * step};
}

double bin_to_heading(int bin, double residual, int num_heading_bins) {
  const double step = 2.0 * kPi / num_heading_bins;
  return wrap_angle((bin + 0.5) * step + residual);
}

BoxEncoding encode_box(const Box3D& box, const BoxCodec& codec,
                       const Vec3& anchor) {
  codec.validate();
  const auto nh = static_cast<std::size_t>(codec.num_heading_bins);
  const auto ns = codec.size_templates.size();

  BoxEncoding enc;
  enc.objectness = {0.0, 1.0};
  enc.center = box.center - anchor;

  const HeadingBin hb = heading_to_bin(box.yaw, codec.num_heading_bins);
  enc.heading_bin_logits.assign(nh, 0.0);
  enc.heading_residuals.assign(nh, 0.0);
  enc.heading_bin_logits[static_cast<std::size_t>(hb.bin)] = 1.0;
  enc.heading_residuals[static_cast<std::size_t>(hb.bin)] = hb.residual;

  std::size_t size_bin = 0;
  double best = (box.size - codec.size_templates[0]).norm();
  for (std::size_t j = 1; j < ns; ++j) {
    const double d = (box.size - codec.size_templates[j]).norm();
    if (d < best) {
      best = d;
      size_bin = j;
    }
  }
  enc.size_bin_logits.assign(ns, 0.0);
  enc.size_residuals.assign(ns, Vec3::Zero());
  enc.size_bin_logits[size_bin] = 1.0;
  const Vec3& tmpl = codec.size_templates[size_bin];
  enc.size_residuals[size_bin] = (box.size - tmpl).cwiseQuotient(tmpl);

  enc.class_logits.assign(static_cast<std::size_t>(codec.num_classes), 0.0);
  if (box.class_id >= 0 && box.class_id < codec.num_classes) {
    enc.class_logits[static_cast<std::size_t>(box.class_id)] = 1.0;
  }
  return enc;
}

Box3D decode_box(const BoxEncoding& enc, const BoxCodec& codec,
                 const Vec3& anchor) {
  codec.validate();
  const auto nh = static_cast<std::size_t>(codec.num_heading_bins);
  const auto ns = codec.size_templates.size();
  if (enc.heading_bin_logits.size() != nh || enc.heading_residuals.size() != nh ||
      enc.size_bin_logits.size() != ns || enc.size_residuals.size() != ns ||
      enc.class_logits.size() != static_cast<std::size_t>(codec.num_classes)) {
    throw std::invalid_argument("decode_box: encoding shape does not match codec");
  }
  Box3D box;
  box.center = anchor + enc.center;
  const std::size_t hbin = argmax_lowest(enc.heading_bin_logits);
  box.yaw = bin_to_heading(static_cast<int>(hbin), enc.heading_residuals[hbin],
                           codec.num_heading_bins);
  const std::size_t sbin = argmax_lowest(enc.size_bin_logits);
  const Vec3& tmpl = codec.size_templates[sbin];
  box.size = tmpl + enc.size_residuals[sbin].cwiseProduct(tmpl);
  box.class_id = static_cast<int>(argmax_lowest(enc.class_logits));
  const double m = std::max(enc.objectness[0], enc.objectness[1]);
  const double e0 = std::exp(enc.objectness[0] - m);
  const double e1 = std::exp(enc.objectness[1] - m);
  box.score = e1 / (e0 + e1);
  return box;
}

}  // namespace disptrack
