#include "dispersion/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "dispersion/error.hpp"

namespace dispersion::linalg {

namespace {
constexpr double kRankTolerance = 1e-12;
}

void require_non_degenerate(const Eigen::Matrix3Xd& cloud) {
  if (cloud.cols() < 3)
    throw Error(ErrorKind::DegenerateGeometry, "rigid fit needs at least 3 nodes, got " + std::to_string(cloud.cols()));
  const Eigen::Vector3d centroid = cloud.rowwise().mean();
  const Eigen::Matrix3Xd centered = cloud.colwise() - centroid;
  const Eigen::Matrix3d cov = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= kRankTolerance * ev(2))
    throw Error(ErrorKind::DegenerateGeometry, "node cloud is collinear or coincident");
}

RigidTransform kabsch(const Eigen::Matrix3Xd& from, const Eigen::Matrix3Xd& to) {
  if (from.cols() != to.cols())
    throw Error(ErrorKind::DimensionMismatch, "kabsch: point clouds differ in size");
  require_non_degenerate(from);
  const Eigen::Vector3d cf = from.rowwise().mean();
  const Eigen::Vector3d ct = to.rowwise().mean();
  const Eigen::Matrix3d h = (from.colwise() - cf) * (to.colwise() - ct).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform out;
  out.rotation = v * d * u.transpose();
  out.translation = ct - out.rotation * cf;
  return out;
}

void canonicalize_signs(Eigen::MatrixXd& basis) {
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0.0) basis.col(c) = -basis.col(c);
  }
}

namespace {

std::size_t numerical_rank(const Eigen::VectorXd& sv) {
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double tol = 1e-10 * sv(0);
  return static_cast<std::size_t>((sv.array() > tol).count());
}

void check_k(const Eigen::MatrixXd& z, std::size_t k) {
  if (k == 0 || k > static_cast<std::size_t>(z.cols()))
    throw Error(ErrorKind::DimensionMismatch,
                "rank " + std::to_string(k) + " outside [1, " + std::to_string(z.cols()) + "]");
}

}  // namespace

RightSingularBasis top_right_singular_vectors_svd(const Eigen::MatrixXd& z, std::size_t k) {
  check_k(z, k);
  if (k > static_cast<std::size_t>(z.rows()))
    throw Error(ErrorKind::InsufficientSamples,
                "rank " + std::to_string(k) + " exceeds sample count " + std::to_string(z.rows()));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinV);
  RightSingularBasis out;
  out.singular_values = svd.singularValues();
  out.basis = svd.matrixV().leftCols(static_cast<Eigen::Index>(k));
  canonicalize_signs(out.basis);
  out.numerical_rank = numerical_rank(out.singular_values);
  return out;
}

RightSingularBasis top_right_singular_vectors_gram(const Eigen::MatrixXd& z, std::size_t k) {
  check_k(z, k);
  if (k > static_cast<std::size_t>(z.rows()))
    throw Error(ErrorKind::InsufficientSamples,
                "rank " + std::to_string(k) + " exceeds sample count " + std::to_string(z.rows()));
  const Eigen::MatrixXd gram = z.transpose() * z;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::Index l = gram.cols();
  RightSingularBasis out;
  out.basis.resize(l, static_cast<Eigen::Index>(k));
  out.singular_values.resize(l);
  for (Eigen::Index i = 0; i < l; ++i) {
    const Eigen::Index src = l - 1 - i;  // eigenvalues ascending
    out.singular_values(i) = std::sqrt(std::max(0.0, eig.eigenvalues()(src)));
    if (i < static_cast<Eigen::Index>(k)) out.basis.col(i) = eig.eigenvectors().col(src);
  }
  canonicalize_signs(out.basis);
  out.numerical_rank = numerical_rank(out.singular_values);
  return out;
}

}  // namespace dispersion::linalg
