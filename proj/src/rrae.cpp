#include "dispersion/rrae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dispersion/binary_io.hpp"
#include "dispersion/error.hpp"
#include "dispersion/linalg.hpp"

namespace dispersion {

namespace {

constexpr char kModelMagic[4] = {'D', 'S', 'P', 'M'};
constexpr std::uint32_t kModelVersion = 1;

double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }
double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

std::vector<Eigen::Index> chain(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out) {
  std::vector<Eigen::Index> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

void check_labels(const Eigen::MatrixXd& x, std::span<const int> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw Error(ErrorKind::LengthMismatch, std::to_string(x.rows()) + " samples but " + std::to_string(y.size()) + " labels");
  for (int v : y)
    if (v != 0 && v != 1) throw Error(ErrorKind::NonBinaryLabel, "labels must be 0 or 1");
}

/// Gradients given a precomputed encoder pass.
BatchGradients gradients_from_latent(const RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                                     const MlpCache* encoder_cache, const Eigen::MatrixXd& z, const Eigen::MatrixXd& basis,
                                     bool encoder_gradients) {
  const auto& hp = model.hyper;
  const double batch = static_cast<double>(x.rows());
  const double entries = batch * static_cast<double>(x.cols());

  const Eigen::MatrixXd z_r = z * basis;
  const MlpCache dec = forward_batch(model.decoder, z_r);
  const MlpCache cls = forward_batch(model.classifier, z_r);

  BatchGradients g;
  g.encoder = MlpGrads::zeros_like(model.encoder);
  g.decoder = MlpGrads::zeros_like(model.decoder);
  g.classifier = MlpGrads::zeros_like(model.classifier);

  const Eigen::MatrixXd residual = dec.output - x;
  g.loss.l_recon = residual.squaredNorm() / entries;

  Eigen::MatrixXd grad_logit(x.rows(), 1);
  double bce = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double s = cls.output(i, 0);
    const double target = static_cast<double>(y[static_cast<std::size_t>(i)]);
    bce += softplus(s) - target * s;
    grad_logit(i, 0) = hp.lambda_cls * (sigmoid(s) - target) / batch;
  }
  g.loss.l_cls = bce / batch;
  g.loss.l_total = hp.lambda_recon * g.loss.l_recon + hp.lambda_cls * g.loss.l_cls;

  const Eigen::MatrixXd grad_recon = (2.0 * hp.lambda_recon / entries) * residual;
  Eigen::MatrixXd grad_zr = backward_batch(model.decoder, dec, grad_recon, g.decoder);
  grad_zr += backward_batch(model.classifier, cls, grad_logit, g.classifier);

  if (encoder_gradients) {
    if (encoder_cache == nullptr) throw Error(ErrorKind::InvalidConfig, "encoder gradients need the encoder pass");
    const Eigen::MatrixXd grad_z = grad_zr * basis.transpose();
    backward_batch(model.encoder, *encoder_cache, grad_z, g.encoder);
  }
  return g;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::size_t k_max, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t count = (n + batch_size - 1) / batch_size;
  const std::size_t base = n / count, extra = n % count;
  std::vector<std::vector<std::size_t>> batches;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    if (size < k_max)
      throw Error(ErrorKind::InsufficientSamples, "mini-batch of " + std::to_string(size) + " samples is smaller than k_max");
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return batches;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> gather(std::span<const int> y, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

void require_finite(const LossBreakdown& l, int phase, std::size_t epoch) {
  if (!std::isfinite(l.l_total) || !std::isfinite(l.l_recon) || !std::isfinite(l.l_cls))
    throw Error(ErrorKind::NonFiniteLoss, "phase " + std::to_string(phase) + " epoch " + std::to_string(epoch) +
                                              ": recon=" + std::to_string(l.l_recon) + " cls=" + std::to_string(l.l_cls));
}

void accumulate(LossBreakdown& sum, const LossBreakdown& l) {
  sum.l_recon += l.l_recon;
  sum.l_cls += l.l_cls;
  sum.l_total += l.l_total;
}

LossBreakdown mean_of(const LossBreakdown& sum, std::size_t count, const RraeHyperparams& hp) {
  LossBreakdown m;
  m.l_recon = sum.l_recon / static_cast<double>(count);
  m.l_cls = sum.l_cls / static_cast<double>(count);
  m.l_total = hp.lambda_recon * m.l_recon + hp.lambda_cls * m.l_cls;
  return m;
}

constexpr std::uint64_t kPhase1Stream = 0x100000;
constexpr std::uint64_t kPhase3Stream = 0x300000;

}  // namespace

void RraeHyperparams::validate() const {
  if (k_max < 1) throw Error(ErrorKind::InvalidConfig, "k_max must be at least 1");
  if (k_max > latent_dim) throw Error(ErrorKind::InvalidConfig, "k_max exceeds the latent dimension");
  if (k_max > batch_size) throw Error(ErrorKind::InvalidConfig, "k_max exceeds the batch size");
  if (!(lambda_recon >= 0.0) || !(lambda_cls >= 0.0) || !(lambda_recon + lambda_cls > 0.0))
    throw Error(ErrorKind::InvalidConfig, "loss weights must be non-negative with a positive sum");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rate must be positive");
  for (const auto* widths : {&encoder_hidden, &decoder_hidden, &classifier_hidden})
    for (auto w : *widths)
      if (w < 1) throw Error(ErrorKind::InvalidConfig, "hidden widths must be positive");
}

void RraeModel::validate() const {
  hyper.validate();
  encoder.validate();
  decoder.validate();
  classifier.validate();
  const auto k = static_cast<Eigen::Index>(hyper.k_max);
  if (encoder.input_dim() != static_cast<Eigen::Index>(input_dim) ||
      encoder.output_dim() != static_cast<Eigen::Index>(hyper.latent_dim))
    throw Error(ErrorKind::DimensionMismatch, "encoder shape does not match the model");
  if (decoder.input_dim() != k || decoder.output_dim() != static_cast<Eigen::Index>(input_dim))
    throw Error(ErrorKind::DimensionMismatch, "decoder shape does not match the model");
  if (classifier.input_dim() != k || classifier.output_dim() != 1)
    throw Error(ErrorKind::DimensionMismatch, "classifier shape does not match the model");
  if (basis) {
    if (basis->rows() != static_cast<Eigen::Index>(hyper.latent_dim) || basis->cols() != k)
      throw Error(ErrorKind::DimensionMismatch, "basis shape does not match the model");
    const Eigen::MatrixXd gram = basis->transpose() * *basis;
    if ((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-8)
      throw Error(ErrorKind::DimensionMismatch, "basis columns are not orthonormal");
  }
  if (stats && (stats->mean.size() != input_dim || stats->stddev.size() != input_dim))
    throw Error(ErrorKind::DimensionMismatch, "normalization statistics do not match the input dimension");
}

RraeModel make_rrae(std::size_t input_dim, const RraeHyperparams& hyper) {
  hyper.validate();
  if (input_dim < 1) throw Error(ErrorKind::InvalidConfig, "input dimension must be positive");
  RraeModel m;
  m.input_dim = input_dim;
  m.hyper = hyper;
  Rng rng(derive_seed(hyper.seed, 0));
  const auto d = static_cast<Eigen::Index>(input_dim);
  const auto l = static_cast<Eigen::Index>(hyper.latent_dim);
  const auto k = static_cast<Eigen::Index>(hyper.k_max);
  m.encoder = make_mlp(chain(d, hyper.encoder_hidden, l), Activation::Silu, Activation::Identity, rng);
  m.decoder = make_mlp(chain(k, hyper.decoder_hidden, d), Activation::Silu, Activation::Identity, rng);
  m.classifier = make_mlp(chain(k, hyper.classifier_hidden, 1), Activation::Silu, Activation::Identity, rng);
  return m;
}

LatentBatch svd_project_batch(const Eigen::MatrixXd& z, std::size_t k_max) {
  if (z.rows() < 1) throw Error(ErrorKind::InsufficientSamples, "empty latent batch");
  const auto fit = linalg::top_right_singular_vectors_svd(z, k_max);
  LatentBatch out;
  out.z = z;
  out.basis = fit.basis;
  out.z_r = z * fit.basis;
  out.rank_deficient = fit.numerical_rank < k_max;
  return out;
}

LossBreakdown batch_loss(const RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                         const Eigen::MatrixXd& basis) {
  check_labels(x, y);
  const Eigen::MatrixXd z = forward_batch(model.encoder, x).output;
  const Eigen::MatrixXd z_r = z * basis;
  const Eigen::MatrixXd x_hat = forward_batch(model.decoder, z_r).output;
  const Eigen::MatrixXd logits = forward_batch(model.classifier, z_r).output;
  LossBreakdown l;
  l.l_recon = (x_hat - x).squaredNorm() / static_cast<double>(x.size());
  double bce = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) bce += softplus(logits(i, 0)) - y[static_cast<std::size_t>(i)] * logits(i, 0);
  l.l_cls = bce / static_cast<double>(x.rows());
  l.l_total = model.hyper.lambda_recon * l.l_recon + model.hyper.lambda_cls * l.l_cls;
  return l;
}

BatchGradients batch_gradients(const RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                               const Eigen::MatrixXd& basis, bool encoder_gradients) {
  check_labels(x, y);
  const MlpCache enc = forward_batch(model.encoder, x);
  return gradients_from_latent(model, x, y, &enc, enc.output, basis, encoder_gradients);
}

RraeOptimizer RraeOptimizer::for_model(const RraeModel& model) {
  return {AdamState::for_params(model.encoder), AdamState::for_params(model.decoder),
          AdamState::for_params(model.classifier)};
}

std::vector<LossBreakdown> train_phase1(RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                                        RraeOptimizer& opt, const EpochCallback& on_epoch) {
  model.validate();
  check_labels(x, y);
  if (model.basis) throw Error(ErrorKind::InvalidConfig, "phase 1 expects a model without a frozen basis");
  if (x.cols() != static_cast<Eigen::Index>(model.input_dim))
    throw Error(ErrorKind::DimensionMismatch, "training inputs do not match the model input dimension");
  const auto& hp = model.hyper;
  const AdamConfig adam{hp.learning_rate};
  std::vector<LossBreakdown> history;
  for (std::size_t epoch = 0; epoch < hp.n1_epochs; ++epoch) {
    Rng rng(derive_seed(hp.seed, kPhase1Stream + epoch));
    const auto batches = make_batches(static_cast<std::size_t>(x.rows()), hp.batch_size, hp.k_max, rng);
    LossBreakdown sum;
    for (const auto& rows : batches) {
      const Eigen::MatrixXd xb = gather_rows(x, rows);
      const auto yb = gather(y, rows);
      const MlpCache enc = forward_batch(model.encoder, xb);
      const auto projection = linalg::top_right_singular_vectors_svd(enc.output, hp.k_max);
      const auto g = gradients_from_latent(model, xb, yb, &enc, enc.output, projection.basis, true);
      require_finite(g.loss, 1, epoch);
      accumulate(sum, g.loss);
      adam_update(model.encoder, g.encoder, opt.encoder, adam);
      adam_update(model.decoder, g.decoder, opt.decoder, adam);
      adam_update(model.classifier, g.classifier, opt.classifier, adam);
    }
    history.push_back(mean_of(sum, batches.size(), hp));
    if (on_epoch) on_epoch(1, epoch, history.back());
  }
  return history;
}

void fit_fixed_basis(RraeModel& model, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.rows()) < model.hyper.k_max)
    throw Error(ErrorKind::InsufficientSamples, std::to_string(x.rows()) + " training samples for k_max = " +
                                                    std::to_string(model.hyper.k_max));
  constexpr Eigen::Index kChunk = 1024;
  const auto l = static_cast<Eigen::Index>(model.hyper.latent_dim);
  Eigen::MatrixXd z(x.rows(), l);
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, x.rows() - start);
    z.middleRows(start, len) = forward_batch(model.encoder, x.middleRows(start, len)).output;
  }
  const auto fit = z.rows() >= 4 * l ? linalg::top_right_singular_vectors_gram(z, model.hyper.k_max)
                                     : linalg::top_right_singular_vectors_svd(z, model.hyper.k_max);
  model.basis = fit.basis;
}

std::vector<LossBreakdown> train_phase3(RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                                        RraeOptimizer& opt, const EpochCallback& on_epoch) {
  if (!model.basis) throw Error(ErrorKind::BasisMissing, "phase 3 needs the frozen basis from phase 2");
  model.validate();
  check_labels(x, y);
  const auto& hp = model.hyper;
  const AdamConfig adam{hp.learning_rate};
  const Eigen::MatrixXd& basis = *model.basis;
  std::vector<LossBreakdown> history;
  for (std::size_t epoch = 0; epoch < hp.n2_epochs; ++epoch) {
    Rng rng(derive_seed(hp.seed, kPhase3Stream + epoch));
    const auto batches = make_batches(static_cast<std::size_t>(x.rows()), hp.batch_size, hp.k_max, rng);
    LossBreakdown sum;
    for (const auto& rows : batches) {
      const Eigen::MatrixXd xb = gather_rows(x, rows);
      const auto yb = gather(y, rows);
      const Eigen::MatrixXd z = forward_batch(model.encoder, xb).output;
      const auto g = gradients_from_latent(model, xb, yb, nullptr, z, basis, false);
      require_finite(g.loss, 3, epoch);
      accumulate(sum, g.loss);
      adam_update(model.decoder, g.decoder, opt.decoder, adam);
      adam_update(model.classifier, g.classifier, opt.classifier, adam);
    }
    history.push_back(mean_of(sum, batches.size(), hp));
    if (on_epoch) on_epoch(3, epoch, history.back());
  }
  return history;
}

TrainingHistory train_rrae(RraeModel& model, const Eigen::MatrixXd& x, std::span<const int> y,
                           const EpochCallback& on_epoch) {
  auto opt = RraeOptimizer::for_model(model);
  TrainingHistory h;
  h.phase1 = train_phase1(model, x, y, opt, on_epoch);
  fit_fixed_basis(model, x);
  h.phase3 = train_phase3(model, x, y, opt, on_epoch);
  return h;
}

Predictions predict(const RraeModel& model, const Eigen::MatrixXd& x, Execution exec) {
  if (!model.basis) throw Error(ErrorKind::BasisMissing, "model has no frozen basis; finish training first");
  if (x.cols() != static_cast<Eigen::Index>(model.input_dim))
    throw Error(ErrorKind::DimensionMismatch, "inputs have " + std::to_string(x.cols()) + " features, model expects " +
                                                  std::to_string(model.input_dim));
  constexpr Eigen::Index kChunk = 256;
  const Eigen::Index n = x.rows();
  Predictions p;
  p.probability.assign(static_cast<std::size_t>(n), 0.0);
  p.label.assign(static_cast<std::size_t>(n), 0);
  const auto chunks = static_cast<std::size_t>((n + kChunk - 1) / kChunk);
  for_each_index(exec, chunks, [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kChunk;
    const Eigen::Index len = std::min(kChunk, n - start);
    const Eigen::MatrixXd z_r = forward_batch(model.encoder, x.middleRows(start, len)).output * *model.basis;
    const Eigen::MatrixXd logits = forward_batch(model.classifier, z_r).output;
    for (Eigen::Index i = 0; i < len; ++i) {
      const double prob = sigmoid(logits(i, 0));
      p.probability[static_cast<std::size_t>(start + i)] = prob;
      p.label[static_cast<std::size_t>(start + i)] = prob >= 0.5 ? 1 : 0;
    }
  });
  return p;
}

Eigen::MatrixXd to_matrix(const FeatureMatrix& fm) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(fm.values.data(), static_cast<Eigen::Index>(fm.rows()),
                                    static_cast<Eigen::Index>(fm.dim));
}

namespace {

void write_mlp(io::BinaryWriter& w, const MlpParams& p) {
  w.value<std::uint32_t>(static_cast<std::uint32_t>(p.layers.size()));
  for (const auto& l : p.layers) {
    w.value<std::uint64_t>(static_cast<std::uint64_t>(l.in()));
    w.value<std::uint64_t>(static_cast<std::uint64_t>(l.out()));
    w.value<std::uint32_t>(static_cast<std::uint32_t>(l.activation));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.value<double>(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.value<double>(l.bias(r));
  }
}

MlpParams read_mlp(io::BinaryReader& r) {
  MlpParams p;
  const auto count = r.value<std::uint32_t>();
  if (count > 64) throw Error(ErrorKind::VersionMismatch, "implausible layer count in '" + r.path() + "'");
  for (std::uint32_t i = 0; i < count; ++i) {
    DenseLayer l;
    const auto in = r.value<std::uint64_t>();
    const auto out = r.value<std::uint64_t>();
    if (in == 0 || out == 0 || in > (1u << 24) || out > (1u << 24))
      throw Error(ErrorKind::VersionMismatch, "implausible layer shape in '" + r.path() + "'");
    const auto act = r.value<std::uint32_t>();
    if (act > 2) throw Error(ErrorKind::VersionMismatch, "unknown activation tag in '" + r.path() + "'");
    l.activation = static_cast<Activation>(act);
    l.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index row = 0; row < l.weight.rows(); ++row)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(row, c) = r.value<double>();
    l.bias.resize(static_cast<Eigen::Index>(out));
    for (Eigen::Index row = 0; row < l.bias.size(); ++row) l.bias(row) = r.value<double>();
    p.layers.push_back(std::move(l));
  }
  return p;
}

void write_widths(io::BinaryWriter& w, const std::vector<Eigen::Index>& widths) {
  w.value<std::uint32_t>(static_cast<std::uint32_t>(widths.size()));
  for (auto v : widths) w.value<std::uint64_t>(static_cast<std::uint64_t>(v));
}

std::vector<Eigen::Index> read_widths(io::BinaryReader& r) {
  const auto n = r.value<std::uint32_t>();
  if (n > 64) throw Error(ErrorKind::VersionMismatch, "implausible hidden layer count in '" + r.path() + "'");
  std::vector<Eigen::Index> widths;
  for (std::uint32_t i = 0; i < n; ++i) widths.push_back(static_cast<Eigen::Index>(r.value<std::uint64_t>()));
  return widths;
}

}  // namespace

void save_model(const RraeModel& model, const std::filesystem::path& path) {
  model.validate();
  io::BinaryWriter w(path.string());
  const auto& hp = model.hyper;
  w.bytes(kModelMagic, 4);
  w.value<std::uint32_t>(kModelVersion);
  w.value<std::uint64_t>(hp.k_max);
  w.value<double>(hp.lambda_recon);
  w.value<double>(hp.lambda_cls);
  w.value<std::uint64_t>(hp.n1_epochs);
  w.value<std::uint64_t>(hp.n2_epochs);
  w.value<std::uint64_t>(hp.latent_dim);
  write_widths(w, hp.encoder_hidden);
  write_widths(w, hp.decoder_hidden);
  write_widths(w, hp.classifier_hidden);
  w.value<double>(hp.learning_rate);
  w.value<std::uint64_t>(hp.batch_size);
  w.value<std::uint64_t>(hp.seed);
  w.value<std::uint64_t>(model.input_dim);
  w.value<std::uint32_t>(model.stats ? 1u : 0u);
  if (model.stats) {
    w.array<double>(model.stats->mean);
    w.array<double>(model.stats->stddev);
  }
  write_mlp(w, model.encoder);
  write_mlp(w, model.decoder);
  write_mlp(w, model.classifier);
  w.value<std::uint32_t>(model.basis ? 1u : 0u);
  if (model.basis) {
    w.value<std::uint64_t>(static_cast<std::uint64_t>(model.basis->rows()));
    w.value<std::uint64_t>(static_cast<std::uint64_t>(model.basis->cols()));
    for (Eigen::Index r = 0; r < model.basis->rows(); ++r)
      for (Eigen::Index c = 0; c < model.basis->cols(); ++c) w.value<double>((*model.basis)(r, c));
  }
  w.close();
}

RraeModel load_model(const std::filesystem::path& path) {
  io::BinaryReader r(path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kModelMagic))
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' is not a DSPM model file");
  if (const auto v = r.value<std::uint32_t>(); v != kModelVersion)
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' has model format version " + std::to_string(v));
  RraeModel m;
  auto& hp = m.hyper;
  hp.k_max = r.value<std::uint64_t>();
  hp.lambda_recon = r.value<double>();
  hp.lambda_cls = r.value<double>();
  hp.n1_epochs = r.value<std::uint64_t>();
  hp.n2_epochs = r.value<std::uint64_t>();
  hp.latent_dim = r.value<std::uint64_t>();
  hp.encoder_hidden = read_widths(r);
  hp.decoder_hidden = read_widths(r);
  hp.classifier_hidden = read_widths(r);
  hp.learning_rate = r.value<double>();
  hp.batch_size = r.value<std::uint64_t>();
  hp.seed = r.value<std::uint64_t>();
  m.input_dim = r.value<std::uint64_t>();
  if (m.input_dim == 0 || m.input_dim > (1u << 24))
    throw Error(ErrorKind::VersionMismatch, "implausible input dimension in '" + path.string() + "'");
  if (r.value<std::uint32_t>() != 0) {
    FeatureStats s;
    s.mean = r.array<double>(m.input_dim);
    s.stddev = r.array<double>(m.input_dim);
    m.stats = std::move(s);
  }
  m.encoder = read_mlp(r);
  m.decoder = read_mlp(r);
  m.classifier = read_mlp(r);
  if (r.value<std::uint32_t>() != 0) {
    const auto rows = r.value<std::uint64_t>();
    const auto cols = r.value<std::uint64_t>();
    if (rows > 4096 || cols > 4096) throw Error(ErrorKind::VersionMismatch, "implausible basis shape in '" + path.string() + "'");
    Eigen::MatrixXd b(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < b.rows(); ++i)
      for (Eigen::Index c = 0; c < b.cols(); ++c) b(i, c) = r.value<double>();
    m.basis = std::move(b);
  }
  if (!r.at_end()) throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' has trailing bytes");
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::VersionMismatch, "'" + path.string() + "' is inconsistent: " + e.what());
  }
  return m;
}

}  // namespace dispersion
