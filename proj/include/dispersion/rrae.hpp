#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dispersion/encoders.hpp"
#include "dispersion/execution.hpp"
#include "dispersion/mlp.hpp"

namespace dispersion {

struct RraeHyperparams {
  std::size_t k_max = 4;
  double lambda_recon = 1.0;
  double lambda_cls = 1.0;
  std::size_t n1_epochs = 100;
  std::size_t n2_epochs = 50;
  std::size_t latent_dim = 16;
  std::vector<Eigen::Index> encoder_hidden = {64, 32};
  std::vector<Eigen::Index> decoder_hidden = {32, 64};
  std::vector<Eigen::Index> classifier_hidden = {16};
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const RraeHyperparams&) const = default;
};

/// Encoder D -> L, decoder k_max -> D, classifier k_max -> 1 (logit).
/// `basis` is the frozen L x k_max projection, absent until fit_fixed_basis.
struct RraeModel {
  std::size_t input_dim = 0;
  RraeHyperparams hyper;
  MlpParams encoder;
  MlpParams decoder;
  MlpParams classifier;
  std::optional<Eigen::MatrixXd> basis;
  std::optional<FeatureStats> stats;

  void validate() const;
};

RraeModel make_rrae(std::size_t input_dim, const RraeHyperparams& hyper);

struct LossBreakdown {
  double l_recon = 0.0;
  double l_cls = 0.0;
  double l_total = 0.0;
};

/// Encoder outputs and their projection on the batch's top-k subspace.
struct LatentBatch {
  Eigen::MatrixXd z;       // batch x L
  Eigen::MatrixXd z_r;     // batch x k
  Eigen::MatrixXd basis;   // L x k, orthonormal columns
  bool rank_deficient = false;  // k exceeds the numerical rank of z
};

/// Thin SVD of z (rows are samples); z_r = z U with U the top-k right
/// singular vectors, so z_r U^T is the best rank-k approximation of z.
LatentBatch svd_project_batch(const Eigen::MatrixXd& z, std::size_t k_max);

/// Loss of one batch with the projection basis held constant.
LossBreakdown batch_loss(const RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                         const Eigen::MatrixXd& basis);

struct BatchGradients {
  MlpGrads encoder;
  MlpGrads decoder;
  MlpGrads classifier;
  LossBreakdown loss;
};

/// Exact gradients of batch_loss with respect to every network parameter,
/// with `basis` treated as a constant of the step.
BatchGradients batch_gradients(const RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                               const Eigen::MatrixXd& basis, bool encoder_gradients = true);

/// Adam moments for the three networks; one instance spans all phases.
struct RraeOptimizer {
  AdamState encoder;
  AdamState decoder;
  AdamState classifier;

  static RraeOptimizer for_model(const RraeModel& model);
};

/// Called once per epoch with (phase, epoch index, epoch-mean losses).
using EpochCallback = std::function<void(int phase, std::size_t epoch, const LossBreakdown&)>;

/// Joint training with per-batch SVD projection. Returns epoch-mean losses.
std::vector<LossBreakdown> train_phase1(RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                                        RraeOptimizer& opt, const EpochCallback& on_epoch = {});

/// Encodes the whole training set and freezes the top-k_max right singular
/// vectors of the latent matrix as the model basis.
void fit_fixed_basis(RraeModel& model, const Eigen::MatrixXd& x);

/// Fine-tunes decoder and classifier on the frozen basis; the encoder and
/// the basis are not modified.
std::vector<LossBreakdown> train_phase3(RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                                        RraeOptimizer& opt, const EpochCallback& on_epoch = {});

struct TrainingHistory {
  std::vector<LossBreakdown> phase1;
  std::vector<LossBreakdown> phase3;
};

/// All three phases on normalized inputs.
TrainingHistory train_rrae(RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                           const EpochCallback& on_epoch = {});

struct Predictions {
  std::vector<double> probability;
  std::vector<int> label;  // 1 iff probability >= 0.5
};

/// x must already be normalized with the model's statistics.
Predictions predict(const RraeModel& model, const Eigen::MatrixXd& x, Execution exec = Execution::Parallel);

/// Row-major feature rows as an Eigen matrix.
Eigen::MatrixXd to_matrix(const FeatureMatrix& fm);

/// Model container: "DSPM" | version u32 | hyperparameters | input dim
///   | stats | encoder | decoder | classifier | basis, little-endian f64.
void save_model(const RraeModel& model, const std::filesystem::path& path);
RraeModel load_model(const std::filesystem::path& path);

}  // namespace dispersion
