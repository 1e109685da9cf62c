#include "dispersion/mlp.hpp"

#include <cmath>
#include <cstring>

#include "dispersion/error.hpp"

namespace dispersion {

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& pre, Activation act) {
  switch (act) {
    case Activation::Identity:
      return pre;
    case Activation::Silu:
      return pre.unaryExpr([](double s) { return s / (1.0 + std::exp(-s)); });
    case Activation::Sigmoid:
      return pre.unaryExpr([](double s) { return 1.0 / (1.0 + std::exp(-s)); });
  }
  return pre;
}

/// d activation / d pre-activation, elementwise.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& pre, Activation act) {
  switch (act) {
    case Activation::Identity:
      return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
    case Activation::Silu:
      return pre.unaryExpr([](double s) {
        const double sig = 1.0 / (1.0 + std::exp(-s));
        return sig * (1.0 + s * (1.0 - sig));
      });
    case Activation::Sigmoid:
      return pre.unaryExpr([](double s) {
        const double sig = 1.0 / (1.0 + std::exp(-s));
        return sig * (1.0 - sig);
      });
  }
  return pre;
}

void fnv(std::uint64_t& h, const double* data, std::size_t n) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.out())
      throw Error(ErrorKind::DimensionMismatch, "layer " + std::to_string(i) + " bias length differs from its width");
    if (i > 0 && layers[i - 1].out() != l.in())
      throw Error(ErrorKind::DimensionMismatch, "layer " + std::to_string(i) + " input width does not chain");
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw Error(ErrorKind::NonFiniteValue, "layer " + std::to_string(i) + " has non-finite parameters");
  }
}

std::uint64_t MlpParams::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : layers) {
    fnv(h, l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    fnv(h, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return h;
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size())
      return false;
    if (std::memcmp(a.weight.data(), b.weight.data(), sizeof(double) * static_cast<std::size_t>(a.weight.size())) != 0 ||
        std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * static_cast<std::size_t>(a.bias.size())) != 0)
      return false;
  }
  return true;
}

MlpParams make_mlp(const std::vector<Eigen::Index>& widths, Activation hidden, Activation output, Rng& rng) {
  if (widths.size() < 2) throw Error(ErrorKind::InvalidConfig, "an MLP needs at least input and output widths");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] < 1 || widths[i + 1] < 1) throw Error(ErrorKind::InvalidConfig, "layer widths must be positive");
    DenseLayer l;
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[i]));
    l.weight.resize(widths[i + 1], widths[i]);
    l.bias.resize(widths[i + 1]);
    // row-major fill order so the draw sequence does not depend on storage order
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-bound, bound);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = rng.uniform(-bound, bound);
    l.activation = (i + 2 == widths.size()) ? output : hidden;
    p.layers.push_back(std::move(l));
  }
  return p;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  MlpGrads g;
  for (const auto& l : p.layers) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

bool MlpGrads::all_zero() const {
  for (const auto& w : weight)
    if (!w.isZero(0.0)) return false;
  for (const auto& b : bias)
    if (!b.isZero(0.0)) return false;
  return true;
}

MlpCache forward_batch(const MlpParams& p, const Eigen::MatrixXd& x) {
  if (x.cols() != p.input_dim())
    throw Error(ErrorKind::DimensionMismatch, "input width " + std::to_string(x.cols()) + " but network expects " +
                                                  std::to_string(p.input_dim()));
  MlpCache cache;
  cache.inputs.reserve(p.layers.size());
  cache.pre_activations.reserve(p.layers.size());
  Eigen::MatrixXd a = x;
  for (const auto& l : p.layers) {
    cache.inputs.push_back(a);
    Eigen::MatrixXd pre = a * l.weight.transpose();
    pre.rowwise() += l.bias.transpose();
    a = activate(pre, l.activation);
    cache.pre_activations.push_back(std::move(pre));
  }
  cache.output = std::move(a);
  return cache;
}

Eigen::MatrixXd backward_batch(const MlpParams& p, const MlpCache& cache, const Eigen::MatrixXd& grad_output,
                               MlpGrads& grads) {
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t i = p.layers.size(); i-- > 0;) {
    const auto& l = p.layers[i];
    if (l.activation != Activation::Identity) delta = delta.cwiseProduct(activation_slope(cache.pre_activations[i], l.activation));
    grads.weight[i].noalias() += delta.transpose() * cache.inputs[i];
    grads.bias[i] += delta.colwise().sum().transpose();
    delta = delta * l.weight;
  }
  return delta;
}

std::pair<Eigen::VectorXd, MlpCache> forward_mlp(const MlpParams& p, const Eigen::VectorXd& x) {
  Eigen::MatrixXd row = x.transpose();
  auto cache = forward_batch(p, row);
  Eigen::VectorXd out = cache.output.row(0).transpose();
  return {std::move(out), std::move(cache)};
}

AdamState AdamState::for_params(const MlpParams& p) {
  return AdamState{MlpGrads::zeros_like(p), MlpGrads::zeros_like(p), 0};
}

void adam_update(MlpParams& p, const MlpGrads& g, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto apply = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    apply(p.layers[i].weight, g.weight[i], state.m.weight[i], state.v.weight[i]);
    apply(p.layers[i].bias, g.bias[i], state.m.bias[i], state.v.bias[i]);
  }
}

}  // namespace dispersion
