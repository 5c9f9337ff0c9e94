#include "ckd/mlp.hpp"

#include <cmath>
#include <string>

#include "ckd/kernels.hpp"

namespace ckd {

namespace {

constexpr std::string_view kModelMagic = "CKDMODEL";
constexpr std::uint32_t kModelVersion = 1;

void check_widths(const std::vector<int>& widths) {
  if (widths.size() < 2) throw InvalidInput("MlpModel: need at least input and output widths");
  for (const int w : widths)
    if (w < 1) throw InvalidInput("MlpModel: widths must be positive");
}

void require_finite_activations(const MatrixXd& m, std::size_t layer) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i]))
      throw NumericalDivergence("non-finite activation after layer " + std::to_string(layer));
}

}  // namespace

MlpModel::MlpModel(std::vector<int> widths, RngStream& rng) : widths_(std::move(widths)) {
  check_widths(widths_);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int fan_in = widths_[l], fan_out = widths_[l + 1];
    const double stddev = std::sqrt(2.0 / fan_in);
    DenseLayer layer{MatrixXd(fan_out, fan_in), VectorXd::Zero(fan_out)};
    for (Eigen::Index j = 0; j < fan_in; ++j)
      for (Eigen::Index i = 0; i < fan_out; ++i) layer.weight(i, j) = stddev * rng.normal();
    layers_.push_back(std::move(layer));
  }
}

MlpModel MlpModel::zeros(std::vector<int> widths) {
  check_widths(widths);
  MlpModel m;
  m.widths_ = std::move(widths);
  for (std::size_t l = 0; l + 1 < m.widths_.size(); ++l)
    m.layers_.push_back({MatrixXd::Zero(m.widths_[l + 1], m.widths_[l]),
                         VectorXd::Zero(m.widths_[l + 1])});
  return m;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
    total += std::size_t(widths_[l]) * widths_[l + 1] + widths_[l + 1];
  return total;
}

MlpModel::Activations MlpModel::forward(const MatrixXd& inputs) const {
  if (inputs.rows() != input_dim()) throw InvalidInput("MlpModel::forward: input dimension mismatch");
  Activations acts;
  acts.values.reserve(layers_.size() + 1);
  acts.values.push_back(inputs);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    MatrixXd z;
    matmul(layers_[l].weight, acts.values.back(), z);
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    require_finite_activations(z, l);
    acts.values.push_back(std::move(z));
  }
  return acts;
}

ParameterSet MlpModel::backward(const Activations& acts, const MatrixXd& grad_logits,
                                const MatrixXd* grad_hint) const {
  if (grad_logits.rows() != num_classes() || grad_logits.cols() != acts.logits().cols())
    throw InvalidInput("MlpModel::backward: gradient shape mismatch");
  ParameterSet grads = zeros_like(layers_);
  MatrixXd delta = grad_logits;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const MatrixXd& input = acts.values[l];
    matmul_add_bt(delta, input, grads[l].weight);
    grads[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    MatrixXd prev;
    const MatrixXd wt = layers_[l].weight.transpose();
    matmul(wt, delta, prev);
    if (grad_hint != nullptr && l + 1 == layers_.size()) {
      if (grad_hint->rows() != prev.rows() || grad_hint->cols() != prev.cols())
        throw InvalidInput("MlpModel::backward: hint gradient shape mismatch");
      prev += *grad_hint;
    }
    for (Eigen::Index i = 0; i < prev.size(); ++i)
      if (!(input.data()[i] > 0.0)) prev.data()[i] = 0.0;
    delta = std::move(prev);
  }
  return grads;
}

std::uint64_t MlpModel::fingerprint() const {
  ByteWriter w;
  serialize(w);
  return fingerprint64(w.buffer());
}

void MlpModel::serialize(ByteWriter& out) const {
  out.u32(static_cast<std::uint32_t>(widths_.size()));
  for (const int w : widths_) out.u32(static_cast<std::uint32_t>(w));
  for (const DenseLayer& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) out.f64(layer.weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) out.f64(layer.bias[i]);
  }
}

MlpModel MlpModel::deserialize(ByteReader& in) {
  const std::uint32_t count = in.u32();
  if (count < 2 || count > 64) throw CacheCorrupt("model: implausible layer count");
  std::vector<int> widths(count);
  for (auto& w : widths) {
    const std::uint32_t v = in.u32();
    if (v == 0 || v > (1u << 20)) throw CacheCorrupt("model: implausible width");
    w = static_cast<int>(v);
  }
  MlpModel m = zeros(widths);
  for (DenseLayer& layer : m.layers_) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = in.f64();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = in.f64();
  }
  return m;
}

void MlpModel::save(const std::filesystem::path& path) const {
  ByteWriter w;
  serialize(w);
  write_envelope(path, kModelMagic, kModelVersion, w.buffer());
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  const auto payload = read_envelope(path, kModelMagic, kModelVersion);
  ByteReader in(payload);
  MlpModel m = deserialize(in);
  if (!in.at_end()) throw CacheCorrupt(path.string() + ": trailing bytes");
  return m;
}

ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const DenseLayer& p : params)
    out.push_back({MatrixXd::Zero(p.weight.rows(), p.weight.cols()), VectorXd::Zero(p.bias.size())});
  return out;
}

void sgd_step(ParameterSet& params, const ParameterSet& grads, ParameterSet& velocity,
              const SgdConfig& cfg) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw InvalidInput("sgd_step: parameter/gradient count mismatch");
  for (std::size_t l = 0; l < params.size(); ++l) {
    sgd_update(params[l].weight, grads[l].weight, velocity[l].weight, cfg);
    sgd_update(params[l].bias, grads[l].bias, velocity[l].bias, cfg);
  }
}

}  // namespace ckd
