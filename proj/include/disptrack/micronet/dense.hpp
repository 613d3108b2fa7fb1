#ifndef DISPTRACK_MICRONET_DENSE_HPP_
#define DISPTRACK_MICRONET_DENSE_HPP_

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace disptrack::micronet {

/// Rows are samples (points or neighbour rows), columns are channels.
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// A Linear->ReLU chain whose final layer is linear. weights[l] is
/// (in x out); biases[l] is (1 x out).
struct DenseParams {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;

  std::vector<int> widths() const;
  int input_width() const;
  int output_width() const;
  std::size_t layer_count() const noexcept { return weights.size(); }
  std::size_t parameter_count() const;
  bool all_finite() const;

  DenseParams zeros_like() const;
  void set_zero();

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static DenseParams glorot(std::span<const int> widths, std::mt19937_64& rng);
  static DenseParams identity(int width);
};

struct DenseTape {
  // inputs[l] is what layer l consumed; ReLU masks are recovered from them.
  std::vector<Matrix> inputs;
};

struct DenseOutput {
  Matrix output;
  DenseTape tape;
};

DenseOutput dense_apply(const DenseParams& params, const Matrix& input,
                        bool capture = false);

/// Accumulates parameter gradients into `grads` and returns dLoss/dInput.
Matrix dense_backward(const DenseParams& params, const DenseTape& tape,
                      const Matrix& grad_output, DenseParams& grads);

// Flat views over a list of parameter blocks, in declaration order.
std::size_t parameter_count(std::span<const DenseParams> blocks);
std::vector<double> flatten(std::span<const DenseParams> blocks);
void unflatten(std::span<const double> values, std::span<DenseParams> blocks);

}  // namespace disptrack::micronet

#endif  // DISPTRACK_MICRONET_DENSE_HPP_
