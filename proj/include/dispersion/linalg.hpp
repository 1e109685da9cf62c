#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace dispersion::linalg {

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Eigen::Vector3d apply_inverse(const Eigen::Vector3d& q) const { return rotation.transpose() * (q - translation); }
};

/// Least-squares rigid transform (proper rotation + translation) mapping the
/// columns of `from` onto the columns of `to` (Kabsch, with reflection fix).
/// Throws DegenerateGeometry when the reference cloud is collinear or
/// coincident.
RigidTransform kabsch(const Eigen::Matrix3Xd& from, const Eigen::Matrix3Xd& to);

/// Throws DegenerateGeometry unless the cloud spans at least a plane.
void require_non_degenerate(const Eigen::Matrix3Xd& cloud);

/// Top-k right singular vectors of Z (rows are samples) as an L x k matrix
/// with orthonormal columns, plus the singular values of Z in descending order.
struct RightSingularBasis {
  Eigen::MatrixXd basis;
  Eigen::VectorXd singular_values;
  std::size_t numerical_rank = 0;
};

/// Thin SVD of Z.
RightSingularBasis top_right_singular_vectors_svd(const Eigen::MatrixXd& z, std::size_t k);

/// Same subspace via the eigendecomposition of the L x L Gram matrix Z^T Z;
/// preferred when rows >> columns.
RightSingularBasis top_right_singular_vectors_gram(const Eigen::MatrixXd& z, std::size_t k);

/// Flips column signs so the largest-magnitude entry of each column is
/// positive; makes bases reproducible across factorization routes.
void canonicalize_signs(Eigen::MatrixXd& basis);

}  // namespace dispersion::linalg
