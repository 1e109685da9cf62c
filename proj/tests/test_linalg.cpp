#include <algorithm>
#include <cmath>

#include "dispersion/linalg.hpp"
#include "dispersion/rng.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dispersion;
using namespace dispersion::linalg;
using testing::error_kind;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-1.0, 1.0);
  return m;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

}  // namespace

TEST_CASE("Kabsch recovers planted rigid transforms") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.index(40));
    const Eigen::Matrix3Xd from = random_matrix(rng, 3, n) * 500.0;
    RigidTransform planted;
    planted.rotation = random_rotation(rng);
    planted.translation = Eigen::Vector3d(rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3));
    const Eigen::Matrix3Xd to = (planted.rotation * from).colwise() + planted.translation;
    const auto fit = kabsch(from, to);
    CHECK((fit.rotation - planted.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fit.translation - planted.translation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(fit.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index i = 0; i < n; ++i) CHECK((fit.apply_inverse(to.col(i)) - from.col(i)).norm() < 1e-9);
  }
}

TEST_CASE("Kabsch never returns a reflection") {
  Rng rng(3);
  const Eigen::Matrix3Xd from = random_matrix(rng, 3, 12);
  Eigen::Matrix3d mirror = Eigen::Matrix3d::Identity();
  mirror(2, 2) = -1.0;
  const auto fit = kabsch(from, mirror * from);
  CHECK(fit.rotation.determinant() == doctest::Approx(1.0));
  CHECK((fit.rotation * fit.rotation.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
}

TEST_CASE("degenerate clouds are rejected") {
  Eigen::Matrix3Xd line(3, 4);
  line << 0, 1, 2, 3, 0, 2, 4, 6, 0, 3, 6, 9;
  CHECK(error_kind([&] { kabsch(line, line); }) == ErrorKind::DegenerateGeometry);
  Eigen::Matrix3Xd two(3, 2);
  two << 0, 1, 0, 1, 0, 1;
  CHECK(error_kind([&] { require_non_degenerate(two); }) == ErrorKind::DegenerateGeometry);
  Eigen::Matrix3Xd plane(3, 3);
  plane << 0, 1, 0, 0, 0, 1, 0, 0, 0;
  CHECK_NOTHROW(require_non_degenerate(plane));
}

TEST_CASE("Eckart-Young residual against an independent eigen-solver") {
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index rows = 4 + static_cast<Eigen::Index>(rng.index(20));
    const Eigen::Index cols = 2 + static_cast<Eigen::Index>(rng.index(8));
    const Eigen::MatrixXd z = random_matrix(rng, rows, cols);
    // keep k below the rank so the discarded energy is nonzero and a relative check is meaningful
    const std::size_t k = 1 + rng.index(static_cast<std::uint64_t>(std::min(rows, cols) - 1));
    const auto ev = oracles::jacobi_eigenvalues(z.transpose() * z);
    double discarded = 0.0;
    for (std::size_t i = k; i < ev.size(); ++i) discarded += std::max(0.0, ev[i]);
    for (auto* route : {&top_right_singular_vectors_svd, &top_right_singular_vectors_gram}) {
      const auto b = (*route)(z, k);
      CHECK((b.basis.transpose() * b.basis - Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))).cwiseAbs().maxCoeff() < 1e-10);
      const double residual = (z - z * b.basis * b.basis.transpose()).squaredNorm();
      CHECK(std::abs(residual - discarded) <= 1e-9 * discarded);
    }
  }
}

TEST_CASE("exact low-rank cases") {
  Rng rng(4);
  SUBCASE("rank one, k = 1") {
    const Eigen::VectorXd a = random_matrix(rng, 8, 1), v = random_matrix(rng, 6, 1);
    const Eigen::MatrixXd z = a * v.transpose();
    const auto b = top_right_singular_vectors_svd(z, 1);
    CHECK((z - z * b.basis * b.basis.transpose()).norm() < 1e-10);
    CHECK(b.numerical_rank == 1);
  }
  SUBCASE("orthogonal rows at full rank") {
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(random_matrix(rng, 5, 5)).householderQ();
    const Eigen::MatrixXd z = Eigen::Vector3d(3, 2, 1).asDiagonal() * q.topRows(3);
    const auto b = top_right_singular_vectors_svd(z, 3);
    CHECK((z - z * b.basis * b.basis.transpose()).norm() < 1e-12);
  }
}

TEST_CASE("SVD and Gram routes agree after sign canonicalization") {
  Rng rng(8);
  const Eigen::MatrixXd z = random_matrix(rng, 200, 6) * Eigen::VectorXd::LinSpaced(6, 6.0, 1.0).asDiagonal();
  auto a = top_right_singular_vectors_svd(z, 3).basis;
  auto b = top_right_singular_vectors_gram(z, 3).basis;
  canonicalize_signs(a);
  canonicalize_signs(b);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    Eigen::Index arg;
    a.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(a(arg, c) > 0.0);
  }
}

TEST_CASE("rank requests are checked") {
  const Eigen::MatrixXd z = Eigen::MatrixXd::Ones(3, 5);
  CHECK(error_kind([&] { top_right_singular_vectors_svd(z, 4); }) == ErrorKind::InsufficientSamples);
  CHECK(error_kind([&] { top_right_singular_vectors_svd(z, 0); }) == ErrorKind::DimensionMismatch);
  const auto b = top_right_singular_vectors_svd(z, 3);
  CHECK(b.numerical_rank == 1);
}
