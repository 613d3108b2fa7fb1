#include "disptrack/micronet/dense.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace disptrack::micronet {

std::vector<int> DenseParams::widths() const {
  std::vector<int> w;
  if (weights.empty()) return w;
  w.push_back(static_cast<int>(weights.front().rows()));
  for (const Matrix& m : weights) w.push_back(static_cast<int>(m.cols()));
  return w;
}

int DenseParams::input_width() const {
  return weights.empty() ? 0 : static_cast<int>(weights.front().rows());
}

int DenseParams::output_width() const {
  return weights.empty() ? 0 : static_cast<int>(weights.back().cols());
}

std::size_t DenseParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

bool DenseParams::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

DenseParams DenseParams::zeros_like() const {
  DenseParams z;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    z.weights.push_back(Matrix::Zero(weights[l].rows(), weights[l].cols()));
    z.biases.push_back(RowVector::Zero(biases[l].size()));
  }
  return z;
}

void DenseParams::set_zero() {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].setZero();
    biases[l].setZero();
  }
}

DenseParams DenseParams::glorot(std::span<const int> widths, std::mt19937_64& rng) {
  if (widths.size() < 2) {
    throw std::invalid_argument("DenseParams: need at least input and output width");
  }
  DenseParams p;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    if (in < 1 || out < 1) throw std::invalid_argument("DenseParams: widths must be positive");
    const double limit = std::sqrt(6.0 / (in + out));
    Matrix w(in, out);
    // Column-major fill order is part of the seeded-init contract.
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = limit * unit(rng);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(RowVector::Zero(out));
  }
  return p;
}

DenseParams DenseParams::identity(int width) {
  DenseParams p;
  p.weights.push_back(Matrix::Identity(width, width));
  p.biases.push_back(RowVector::Zero(width));
  return p;
}

DenseOutput dense_apply(const DenseParams& params, const Matrix& input, bool capture) {
  if (params.weights.empty()) throw std::invalid_argument("dense_apply: no layers");
  if (input.cols() != params.weights.front().rows()) {
    throw std::invalid_argument("dense_apply: input width " + std::to_string(input.cols()) +
                                " != layer width " +
                                std::to_string(params.weights.front().rows()));
  }
  DenseOutput out;
  Matrix x = input;
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    if (capture) out.tape.inputs.push_back(x);
    Matrix z = x * params.weights[l];
    z.rowwise() += params.biases[l];
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    x = std::move(z);
  }
  out.output = std::move(x);
  return out;
}

Matrix dense_backward(const DenseParams& params, const DenseTape& tape,
                      const Matrix& grad_output, DenseParams& grads) {
  const std::size_t layers = params.weights.size();
  if (tape.inputs.size() != layers) {
    throw std::invalid_argument("dense_backward: tape was not captured");
  }
  Matrix g = grad_output;
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& x = tape.inputs[l];
    grads.weights[l].noalias() += x.transpose() * g;
    grads.biases[l] += g.colwise().sum();
    Matrix gx = g * params.weights[l].transpose();
    if (l > 0) {
      // x = relu(z) of the previous layer, so x > 0 is the ReLU mask.
      gx = (x.array() > 0.0).select(gx, 0.0);
    }
    g = std::move(gx);
  }
  return g;
}

std::size_t parameter_count(std::span<const DenseParams> blocks) {
  std::size_t n = 0;
  for (const DenseParams& b : blocks) n += b.parameter_count();
  return n;
}

std::vector<double> flatten(std::span<const DenseParams> blocks) {
  std::vector<double> out;
  out.reserve(parameter_count(blocks));
  for (const DenseParams& b : blocks) {
    for (std::size_t l = 0; l < b.weights.size(); ++l) {
      out.insert(out.end(), b.weights[l].data(), b.weights[l].data() + b.weights[l].size());
      out.insert(out.end(), b.biases[l].data(), b.biases[l].data() + b.biases[l].size());
    }
  }
  return out;
}

void unflatten(std::span<const double> values, std::span<DenseParams> blocks) {
  if (values.size() != parameter_count(blocks)) {
    throw std::invalid_argument("unflatten: size mismatch");
  }
  std::size_t at = 0;
  for (DenseParams& b : blocks) {
    for (std::size_t l = 0; l < b.weights.size(); ++l) {
      std::copy_n(values.begin() + static_cast<long>(at), b.weights[l].size(), b.weights[l].data());
      at += static_cast<std::size_t>(b.weights[l].size());
      std::copy_n(values.begin() + static_cast<long>(at), b.biases[l].size(), b.biases[l].data());
      at += static_cast<std::size_t>(b.biases[l].size());
    }
  }
}

}  // namespace disptrack::micronet
