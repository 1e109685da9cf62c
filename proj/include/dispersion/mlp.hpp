#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dispersion/rng.hpp"

namespace dispersion {

enum class Activation : std::uint32_t { Identity = 0, Silu = 1, Sigmoid = 2 };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Identity;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().out(); }
  std::size_t parameter_count() const;

  /// Throws DimensionMismatch / NonFiniteValue on broken invariants.
  void validate() const;

  /// FNV-1a over every parameter's bytes.
  std::uint64_t checksum() const;

  bool operator==(const MlpParams& other) const;
};

/// widths = {in, hidden..., out}. Hidden layers use `hidden`, the last layer
/// `output`. Weights and biases are drawn uniformly from +-1/sqrt(fan_in).
MlpParams make_mlp(const std::vector<Eigen::Index>& widths, Activation hidden, Activation output, Rng& rng);

/// Per-layer inputs and pre-activations, enough for exact backprop.
/// Rows are samples.
struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> pre_activations;
  Eigen::MatrixXd output;
};

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  static MlpGrads zeros_like(const MlpParams& p);
  bool all_zero() const;
};

MlpCache forward_batch(const MlpParams& p, const Eigen::MatrixXd& x);

/// Accumulates parameter gradients of a scalar loss into `grads` given
/// dLoss/dOutput; returns dLoss/dInput.
Eigen::MatrixXd backward_batch(const MlpParams& p, const MlpCache& cache, const Eigen::MatrixXd& grad_output,
                               MlpGrads& grads);

/// Single-sample forward pass.
std::pair<Eigen::VectorXd, MlpCache> forward_mlp(const MlpParams& p, const Eigen::VectorXd& x);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates for one network.
struct AdamState {
  MlpGrads m;
  MlpGrads v;
  std::uint64_t step = 0;

  static AdamState for_params(const MlpParams& p);
};

void adam_update(MlpParams& p, const MlpGrads& g, AdamState& state, const AdamConfig& cfg);

}  // namespace dispersion
