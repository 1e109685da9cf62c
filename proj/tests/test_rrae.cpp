#include <cmath>
#include <fstream>

#include <doctest.h>

#include "dispersion/error.hpp"
#include "dispersion/linalg.hpp"
#include "dispersion/rrae.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace dispersion;
using testing::error_kind;

namespace {

RraeHyperparams tiny_hyper() {
  RraeHyperparams hp;
  hp.k_max = 2;
  hp.latent_dim = 4;
  hp.encoder_hidden = {6};
  hp.decoder_hidden = {6};
  hp.classifier_hidden = {4};
  hp.n1_epochs = 5;
  hp.n2_epochs = 3;
  hp.batch_size = 8;
  hp.learning_rate = 1e-2;
  hp.seed = 3;
  return hp;
}

/// Two well separated Gaussian blobs.
std::pair<Eigen::MatrixXd, std::vector<int>> blobs(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < d; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (y[i] ? 1.5 : -1.5) + 0.3 * rng.normal();
  }
  return {x, y};
}

}  // namespace

TEST_CASE("phase 1 gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = testing::small_problem(seed);
    const auto r = testing::check_phase1(p);
    INFO("seed " << seed << ": " << r.first_failure);
    CHECK(r.failed == 0);
    CHECK(r.checked == p.model.encoder.parameter_count() + p.model.decoder.parameter_count() +
                           p.model.classifier.parameter_count());
  }
}

TEST_CASE("phase 3 gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = testing::small_problem(seed);
    const auto r = testing::check_phase3(p);
    INFO("seed " << seed << ": " << r.first_failure);
    CHECK(r.failed == 0);
  }
}

TEST_CASE("loss weights switch off their gradients") {
  auto p = testing::small_problem(4);
  const Eigen::MatrixXd z = forward_batch(p.model.encoder, p.x).output;
  const Eigen::MatrixXd basis = linalg::top_right_singular_vectors_svd(z, p.model.hyper.k_max).basis;

  p.model.hyper.lambda_cls = 0.0;
  auto g = batch_gradients(p.model, p.x, p.y, basis);
  CHECK(g.classifier.all_zero());
  CHECK_FALSE(g.decoder.all_zero());
  CHECK(g.loss.l_total == g.loss.l_recon * p.model.hyper.lambda_recon);

  p.model.hyper.lambda_cls = 1.0;
  p.model.hyper.lambda_recon = 0.0;
  g = batch_gradients(p.model, p.x, p.y, basis);
  CHECK(g.decoder.all_zero());
  CHECK_FALSE(g.classifier.all_zero());
}

TEST_CASE("loss identity") {
  auto p = testing::small_problem(9);
  const Eigen::MatrixXd z = forward_batch(p.model.encoder, p.x).output;
  const Eigen::MatrixXd basis = linalg::top_right_singular_vectors_svd(z, p.model.hyper.k_max).basis;
  const auto l = batch_loss(p.model, p.x, p.y, basis);
  CHECK(l.l_total == p.model.hyper.lambda_recon * l.l_recon + p.model.hyper.lambda_cls * l.l_cls);
  const auto g = batch_gradients(p.model, p.x, p.y, basis);
  CHECK(g.loss.l_recon == doctest::Approx(l.l_recon).epsilon(1e-14));
  CHECK(g.loss.l_cls == doctest::Approx(l.l_cls).epsilon(1e-14));
}

TEST_CASE("batch projection") {
  SUBCASE("rank-2 latent batch is reproduced with k = 2") {
    Eigen::MatrixXd a(6, 2), b(2, 5);
    a << 1, 0, 0, 1, 1, 1, 2, -1, 0.5, 3, -2, 1;
    b << 1, 2, 0, -1, 1, 0, 1, 1, 1, -2;
    const Eigen::MatrixXd z = a * b;
    const auto lb = svd_project_batch(z, 2);
    CHECK((lb.z_r * lb.basis.transpose() - z).norm() < 1e-12 * z.norm());
    CHECK_FALSE(lb.rank_deficient);
    CHECK((lb.basis.transpose() * lb.basis - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);
    const auto lb3 = svd_project_batch(z, 3);
    CHECK(lb3.rank_deficient);
  }
  SUBCASE("projection never increases the norm") {
    Rng rng(4);
    Eigen::MatrixXd z(10, 6);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    for (std::size_t k = 1; k <= 6; ++k) {
      const auto lb = svd_project_batch(z, k);
      CHECK(lb.z_r.norm() <= z.norm() * (1 + 1e-12));
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(lb.z_r * lb.basis.transpose());
      CHECK(svd.rank() <= static_cast<Eigen::Index>(k));
    }
  }
  CHECK(error_kind([] { svd_project_batch(Eigen::MatrixXd(0, 3), 1); }) == ErrorKind::InsufficientSamples);
}

TEST_CASE("fixed basis spans the latent matrix") {
  const auto [x, y] = blobs(64, 5, 2);
  auto model = make_rrae(5, tiny_hyper());
  fit_fixed_basis(model, x);
  REQUIRE(model.basis);
  const Eigen::MatrixXd& u = *model.basis;
  CHECK(u.rows() == 4);
  CHECK(u.cols() == 2);
  CHECK((u.transpose() * u - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
  // residual equals the energy outside the top-2 singular values
  const Eigen::MatrixXd z = forward_batch(model.encoder, x).output;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(z);
  const auto s = svd.singularValues();
  const double tail = s(2) * s(2) + s(3) * s(3);
  const double resid = (z - z * u * u.transpose()).squaredNorm();
  CHECK(resid == doctest::Approx(tail).epsilon(1e-8));
}

TEST_CASE("phase 3 leaves encoder and basis untouched") {
  const auto [x, y] = blobs(48, 5, 6);
  auto model = make_rrae(5, tiny_hyper());
  auto opt = RraeOptimizer::for_model(model);
  train_phase1(model, x, y, opt);
  fit_fixed_basis(model, x);
  const auto encoder_before = model.encoder;
  const Eigen::MatrixXd basis_before = *model.basis;
  const auto decoder_before = model.decoder;
  train_phase3(model, x, y, opt);
  CHECK(model.encoder == encoder_before);
  CHECK(model.encoder.checksum() == encoder_before.checksum());
  CHECK(std::memcmp(model.basis->data(), basis_before.data(), sizeof(double) * basis_before.size()) == 0);
  CHECK_FALSE(model.decoder == decoder_before);
}

TEST_CASE("zero fine-tuning epochs leave the model unchanged") {
  const auto [x, y] = blobs(32, 4, 1);
  auto hp = tiny_hyper();
  hp.n2_epochs = 0;
  auto model = make_rrae(4, hp);
  auto opt = RraeOptimizer::for_model(model);
  train_phase1(model, x, y, opt);
  fit_fixed_basis(model, x);
  const auto dec = model.decoder, cls = model.classifier;
  CHECK(train_phase3(model, x, y, opt).empty());
  CHECK(model.decoder == dec);
  CHECK(model.classifier == cls);
}

TEST_CASE("zero classifier output layer predicts one half and label 1") {
  const auto [x, y] = blobs(16, 4, 8);
  auto model = make_rrae(4, tiny_hyper());
  fit_fixed_basis(model, x);
  model.classifier.layers.back().weight.setZero();
  model.classifier.layers.back().bias.setZero();
  const auto p = predict(model, x);
  for (std::size_t i = 0; i < p.label.size(); ++i) {
    CHECK(p.probability[i] == 0.5);
    CHECK(p.label[i] == 1);
  }
}

TEST_CASE("training learns separable blobs") {
  const auto [x, y] = blobs(96, 6, 12);
  auto hp = tiny_hyper();
  hp.n1_epochs = 40;
  hp.n2_epochs = 20;
  auto model = make_rrae(6, hp);
  const auto history = train_rrae(model, x, y);
  CHECK(history.phase1.size() == 40);
  CHECK(history.phase3.size() == 20);
  CHECK(history.phase1.back().l_total < history.phase1.front().l_total);
  const auto p = predict(model, x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += p.label[i] == y[i];
  CHECK(correct == y.size());
}

TEST_CASE("training is deterministic") {
  const auto [x, y] = blobs(40, 5, 3);
  auto a = make_rrae(5, tiny_hyper());
  auto b = make_rrae(5, tiny_hyper());
  train_rrae(a, x, y);
  train_rrae(b, x, y);
  CHECK(a.encoder == b.encoder);
  CHECK(a.decoder == b.decoder);
  CHECK(a.classifier == b.classifier);
  CHECK(*a.basis == *b.basis);
}

TEST_CASE("save and load") {
  testing::TempDir dir;
  const auto [x, y] = blobs(40, 5, 3);
  auto model = make_rrae(5, tiny_hyper());
  model.stats = FeatureStats{std::vector<double>(5, 0.5), std::vector<double>(5, 2.0)};

  SUBCASE("before the basis is fixed") {
    save_model(model, dir / "m.dspm");
    const auto back = load_model(dir / "m.dspm");
    CHECK_FALSE(back.basis);
    CHECK(error_kind([&] { predict(back, x); }) == ErrorKind::BasisMissing);
  }
  SUBCASE("trained model predicts bit-identically") {
    train_rrae(model, x, y);
    save_model(model, dir / "m.dspm");
    const auto back = load_model(dir / "m.dspm");
    CHECK(back.hyper == model.hyper);
    CHECK(back.stats->mean == model.stats->mean);
    const auto p = predict(model, x), q = predict(back, x);
    CHECK(std::memcmp(p.probability.data(), q.probability.data(), sizeof(double) * p.probability.size()) == 0);
    CHECK(p.label == q.label);
  }
  SUBCASE("corrupted header") {
    save_model(model, dir / "m.dspm");
    {
      std::fstream f(dir / "m.dspm", std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(4);
      const std::uint32_t bad = 99;
      f.write(reinterpret_cast<const char*>(&bad), 4);
    }
    CHECK(error_kind([&] { load_model(dir / "m.dspm"); }) == ErrorKind::VersionMismatch);
  }
}

TEST_CASE("phase preconditions") {
  const auto [x, y] = blobs(20, 4, 3);
  auto model = make_rrae(4, tiny_hyper());
  auto opt = RraeOptimizer::for_model(model);
  CHECK(error_kind([&] { train_phase3(model, x, y, opt); }) == ErrorKind::BasisMissing);
  fit_fixed_basis(model, x);
  CHECK(error_kind([&] { train_phase1(model, x, y, opt); }) == ErrorKind::InvalidConfig);

  auto hp = tiny_hyper();
  hp.k_max = 3;
  hp.batch_size = 4;
  auto small = make_rrae(4, hp);
  auto opt2 = RraeOptimizer::for_model(small);
  // 5 samples split into batches of 3 and 2; the 2-sample batch is below k_max
  CHECK(error_kind([&] { train_phase1(small, x.topRows(5), std::span<const int>(y).first(5), opt2); }) ==
        ErrorKind::InsufficientSamples);
  CHECK(error_kind([&] { fit_fixed_basis(small, x.topRows(2)); }) == ErrorKind::InsufficientSamples);

  auto bad = tiny_hyper();
  bad.k_max = 5;
  CHECK(error_kind([&] { make_rrae(4, bad); }) == ErrorKind::InvalidConfig);
  bad = tiny_hyper();
  bad.lambda_cls = -1;
  CHECK(error_kind([&] { make_rrae(4, bad); }) == ErrorKind::InvalidConfig);
  std::vector<int> three(20, 0);
  three[1] = 3;
  CHECK(error_kind([&] { batch_loss(model, x, three, *model.basis); }) == ErrorKind::NonBinaryLabel);
}
