#pragma once

// Fully connected rectifier networks with hand-written backpropagation and
// the SGD optimizer.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ckd/binary_io.hpp"
#include "ckd/core_math.hpp"

namespace ckd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DenseLayer {
  MatrixXd weight;  // out x in
  VectorXd bias;
};

using ParameterSet = std::vector<DenseLayer>;

/// widths = [D_in, h_1, ..., C]. Hidden layers use ReLU, the last is linear.
/// The white-box hint tap is the output of the last hidden layer.
class MlpModel {
 public:
  struct Activations {
    std::vector<MatrixXd> values;  // values[0] is the input, values.back() the logits

    const MatrixXd& logits() const { return values.back(); }
    const MatrixXd& hint() const { return values[values.size() - 2]; }
  };

  MlpModel() = default;
  /// Fan-in scaled Gaussian weights N(0, 2 / fan_in), zero biases.
  MlpModel(std::vector<int> widths, RngStream& rng);
  static MlpModel zeros(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  ParameterSet& parameters() { return layers_; }
  const ParameterSet& parameters() const { return layers_; }
  int input_dim() const { return widths_.front(); }
  int num_classes() const { return widths_.back(); }
  int hint_dim() const { return widths_[widths_.size() - 2]; }
  std::size_t parameter_count() const;

  /// Throws NumericalDivergence if any activation is non-finite.
  Activations forward(const MatrixXd& inputs) const;
  MatrixXd logits(const MatrixXd& inputs) const { return forward(inputs).logits(); }

  /// Parameter gradients for d loss / d logits and, optionally, an extra
  /// gradient arriving at the hint tap.
  ParameterSet backward(const Activations& acts, const MatrixXd& grad_logits,
                        const MatrixXd* grad_hint = nullptr) const;

  std::uint64_t fingerprint() const;

  void serialize(ByteWriter& out) const;
  static MlpModel deserialize(ByteReader& in);
  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);

 private:
  std::vector<int> widths_;
  ParameterSet layers_;
};

ParameterSet zeros_like(const ParameterSet& params);

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// Coupled weight decay: v <- momentum v + grad + wd p; p <- p - lr v.
template <typename P, typename G, typename V>
void sgd_update(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad,
                Eigen::MatrixBase<V>& velocity, const SgdConfig& cfg) {
  for (Eigen::Index j = 0; j < param.cols(); ++j) {
    for (Eigen::Index i = 0; i < param.rows(); ++i) {
      const double v = cfg.momentum * velocity(i, j) + grad(i, j) + cfg.weight_decay * param(i, j);
      velocity(i, j) = v;
      param(i, j) -= cfg.lr * v;
    }
  }
}

void sgd_step(ParameterSet& params, const ParameterSet& grads, ParameterSet& velocity,
              const SgdConfig& cfg);

}  // namespace ckd
