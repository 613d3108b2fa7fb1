#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "disptrack/micronet/losses.hpp"
#include "disptrack/pipeline.hpp"

namespace disptrack {

using micronet::DenseParams;
using micronet::Matrix;

namespace {

std::vector<int> chain(int input, const std::vector<int>& widths) {
  std::vector<int> out{input};
  out.insert(out.end(), widths.begin(), widths.end());
  return out;
}

micronet::SaLayerSpec sa_spec(const SaSettings& s, const DenseParams& mlp, std::size_t n) {
  micronet::SaLayerSpec spec;
  spec.sample_count = std::min(s.samples, n);
  spec.radius = s.radius;
  spec.neighbor_cap = s.neighbor_cap;
  spec.mlp = mlp;
  return spec;
}

struct MaskForward {
  micronet::SaLayerSpec s1, s2;
  micronet::SaOutput a1, a2;
  micronet::FpOutput f1, f2;
  micronet::DenseOutput head;
  Matrix probs;  // n x 2
};

MaskForward mask_forward(const MaskNet& net, std::span<const Vec3> points,
                         const Matrix& intensity, bool capture) {
  MaskForward f;
  f.s1 = sa_spec(net.config.sa1, net.sa1, points.size());
  f.a1 = micronet::sa_layer(f.s1, points, intensity, 0, capture);
  f.s2 = sa_spec(net.config.sa2, net.sa2, f.a1.points.size());
  f.a2 = micronet::sa_layer(f.s2, f.a1.points, f.a1.features, 0, capture);
  f.f1 = micronet::fp_layer(f.a1.points, f.a2.points, f.a2.features, &f.a1.features, net.fp1,
                            capture);
  f.f2 = micronet::fp_layer(points, f.a1.points, f.f1.features, &intensity, net.fp2, capture);
  f.head = micronet::dense_apply(net.head, f.f2.features, capture);
  f.probs.resize(f.head.output.rows(), 2);
  for (Eigen::Index r = 0; r < f.head.output.rows(); ++r) {
    const double logits[2] = {f.head.output(r, 0), f.head.output(r, 1)};
    const auto p = micronet::softmax(logits);
    f.probs(r, 0) = p[0];
    f.probs(r, 1) = p[1];
  }
  return f;
}

void mask_backward(const MaskNet& net, const MaskForward& f, const Matrix& grad_logits,
                   std::vector<DenseParams>& grads) {
  const Matrix g_f2 = micronet::dense_backward(net.head, f.head.tape, grad_logits, grads[4]);
  const micronet::FpGradients g2 = micronet::fp_backward(net.fp2, f.f2.tape, g_f2, grads[3]);
  const micronet::FpGradients g1 = micronet::fp_backward(net.fp1, f.f1.tape, g2.source, grads[2]);
  Matrix g_a1 = g1.skip;
  g_a1 += micronet::sa_backward(f.s2, f.a2.tape, g1.source,
                                static_cast<int>(f.a1.features.cols()), grads[1]);
  micronet::sa_backward(f.s1, f.a1.tape, g_a1, 1, grads[0]);
}

// Seeded subsample (ascending indices) when the cloud exceeds the budget.
std::vector<std::size_t> subsample(std::size_t n, std::size_t budget, std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (n <= budget) return all;
  std::vector<std::size_t> chosen;
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), budget, rng);
  return chosen;
}

Matrix intensity_of(const PointCloud& cloud, std::span<const std::size_t> idx) {
  Matrix m(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    m(static_cast<Eigen::Index>(r), 0) = cloud.has_intensity() ? cloud.intensity[idx[r]] : 0.0;
  }
  return m;
}

}  // namespace

void MaskNetConfig::validate() const {
  for (const SaSettings* sa : {&sa1, &sa2}) {
    if (sa->samples < 1 || !(sa->radius > 0.0) || sa->widths.empty()) {
      throw std::invalid_argument("mask net: invalid SA settings");
    }
  }
  if (fp1_widths.empty() || fp2_widths.empty() || head_widths.empty() ||
      head_widths.back() != 2) {
    throw std::invalid_argument("mask net: head must end in 2 logits");
  }
  if (n_input < 1 || gamma < 0.0 || !(learning_rate > 0.0)) {
    throw std::invalid_argument("mask net: invalid training settings");
  }
}

MaskNet MaskNet::init(const MaskNetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  MaskNet net;
  net.config = config;
  net.sa1 = DenseParams::glorot(chain(3 + 1, config.sa1.widths), rng);
  net.sa2 = DenseParams::glorot(chain(3 + config.sa1.widths.back(), config.sa2.widths), rng);
  net.fp1 = DenseParams::glorot(
      chain(config.sa2.widths.back() + config.sa1.widths.back(), config.fp1_widths), rng);
  net.fp2 = DenseParams::glorot(chain(config.fp1_widths.back() + 1, config.fp2_widths), rng);
  net.head = DenseParams::glorot(chain(config.fp2_widths.back(), config.head_widths), rng);
  return net;
}

std::vector<DenseParams*> MaskNet::blocks() { return {&sa1, &sa2, &fp1, &fp2, &head}; }

std::vector<double> micro_mask_classifier(const PointCloud& frame, const MaskNet& model) {
  if (frame.empty()) return {};
  const auto idx = subsample(frame.size(), model.config.n_input, model.config.seed);
  std::vector<Vec3> pts;
  pts.reserve(idx.size());
  for (std::size_t i : idx) pts.push_back(frame.points[i]);
  const MaskForward f = mask_forward(model, pts, intensity_of(frame, idx), false);

  std::vector<double> probs(frame.size(), 0.0);
  if (idx.size() == frame.size()) {
    for (std::size_t i = 0; i < frame.size(); ++i) probs[i] = f.probs(static_cast<Eigen::Index>(i), 1);
    return probs;
  }
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const KnnResult nn = knn(frame.points[i], pts, 1);
    probs[i] = f.probs(static_cast<Eigen::Index>(nn.indices[0]), 1);
  }
  return probs;
}

MaskTrainReport train_mask_net(MaskNet& model, std::span<const Sequence> sequences,
                               std::size_t epochs) {
  struct Sample {
    std::vector<Vec3> points;
    Matrix intensity;
    std::vector<int> label;
  };
  std::vector<Sample> samples;
  for (const Sequence& seq : sequences) {
    for (const Frame& frame : seq.frames) {
      if (frame.cloud.empty()) continue;
      const auto idx = subsample(frame.cloud.size(), model.config.n_input, model.config.seed);
      Sample s;
      s.intensity = intensity_of(frame.cloud, idx);
      for (std::size_t i : idx) {
        const Vec3& p = frame.cloud.points[i];
        s.points.push_back(p);
        int fg = 0;
        for (const Box3D& b : frame.label.boxes) {
          if (point_in_box(p, b)) {
            fg = 1;
            break;
          }
        }
        s.label.push_back(fg);
      }
      samples.push_back(std::move(s));
    }
  }
  if (samples.empty()) throw std::invalid_argument("train_mask_net: no frames");

  MaskTrainReport report;
  auto params = model.blocks();
  std::vector<DenseParams> grads;
  for (auto* p : params) grads.push_back(p->zeros_like());
  micronet::OptState state;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(model.config.seed ^ 0x3a5cULL);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t o : order) {
      const Sample& s = samples[o];
      const MaskForward f = mask_forward(model, s.points, s.intensity, true);
      std::vector<double> p_true(s.label.size());
      for (std::size_t i = 0; i < s.label.size(); ++i) {
        p_true[i] = f.probs(static_cast<Eigen::Index>(i), s.label[i]);
      }
      const micronet::FocalLossResult loss = micronet::focal_loss(p_true, model.config.gamma);
      total += loss.loss;
      // dL/dz_j = dL/dp_t * p_t * (delta_tj - p_j)
      Matrix grad_logits(static_cast<Eigen::Index>(s.label.size()), 2);
      for (std::size_t i = 0; i < s.label.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (int j = 0; j < 2; ++j) {
          const double delta = j == s.label[i] ? 1.0 : 0.0;
          grad_logits(r, j) = loss.grad[i] * p_true[i] * (delta - f.probs(r, j));
        }
      }
      for (auto& g : grads) g.set_zero();
      mask_backward(model, f, grad_logits, grads);
      micronet::adam_step(std::span<DenseParams* const>(params), grads, state,
                          model.config.learning_rate);
    }
    report.epoch_loss.push_back(total / static_cast<double>(samples.size()));
  }
  return report;
}

}  // namespace disptrack
