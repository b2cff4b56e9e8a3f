#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace mcd {

/// Principal angles between span(A) and span(B), ascending, in [0, pi/2].
///
/// Both arguments must have orthonormal columns. The cosines come from the
/// singular values of A^T B; angles whose cosine exceeds 1/sqrt(2) are taken
/// from the sines (singular values of the part of the smaller basis that
/// lies outside the larger one) instead, which keeps small angles accurate.
/// The result has min(dim A, dim B) entries.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> principal_angles(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  // large: the higher-dimensional basis; small: the other one.
  const bool swap = b.cols() > a.cols();
  const Matrix large = swap ? Matrix(b) : Matrix(a);
  const Matrix small = swap ? Matrix(a) : Matrix(b);
  const Eigen::Index m = small.cols();
  Vector angles(m);
  if (m == 0) return angles;

  const Matrix cross = large.transpose() * small;
  const Eigen::JacobiSVD<Matrix> cos_svd(cross);
  const Matrix residual = small - large * cross;
  const Eigen::JacobiSVD<Matrix> sin_svd(residual);

  const Vector& cosines = cos_svd.singularValues();  // descending
  const Vector& sines = sin_svd.singularValues();    // descending
  const Scalar half = Scalar(1) / Scalar(2);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Scalar c = std::clamp(cosines(i), Scalar(0), Scalar(1));
    const Scalar s = std::clamp(sines(m - 1 - i), Scalar(0), Scalar(1));
    angles(i) = c * c > half ? std::asin(s) : std::acos(c);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

/// Root-mean-square of the principal angles: 0 for identical subspaces,
/// pi/2 for orthogonal ones. Zero when either subspace is empty.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar grassmann_distance(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const auto angles = principal_angles(a, b);
  if (angles.size() == 0) return Scalar(0);
  return std::sqrt(angles.squaredNorm() / Scalar(angles.size()));
}

template <typename Scalar>
struct WsumBounds {
  Scalar lower = 0;
  Scalar upper = 0;
};

/// Bounds on |w|^2 from the per-concept weight norms and pairwise principal
/// angles: the cross terms |w^l||w^k|cos(angle) are replaced by cos(theta_max)
/// for the lower and cos(theta_min) for the upper bound.
///
/// `concepts` holds the n_c concept bases (complement excluded); `norms`
/// holds |w^1|..|w^{n_c}| followed by |w^perp|.
template <typename Scalar>
WsumBounds<Scalar> wsum_bounds(
    const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& concepts,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& norms) {
  const auto n = static_cast<Eigen::Index>(concepts.size());
  WsumBounds<Scalar> out;
  const Scalar diagonal = norms.squaredNorm();
  out.lower = diagonal;
  out.upper = diagonal;
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index k = l + 1; k < n; ++k) {
      const auto angles = principal_angles(concepts[l], concepts[k]);
      if (angles.size() == 0) continue;
      // each unordered pair appears twice in the l != k sum
      const Scalar weight = 2 * norms(l) * norms(k);
      out.lower += weight * std::cos(angles.maxCoeff());
      out.upper += weight * std::cos(angles.minCoeff());
    }
  }
  return out;
}

/// True when every pairwise angle between the concept weight parts lies
/// within its principal-angle range [theta_min, theta_max] (tolerance `tol`),
/// i.e. when the bound derivation applies. Parts with zero norm make the
/// premise vacuous only if `allow_zero` is set.
template <typename Scalar>
bool wsum_premises_hold(const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& concepts,
                        const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& parts, Scalar tol = Scalar(1e-9)) {
  const auto n = concepts.size();
  for (std::size_t l = 0; l < n; ++l) {
    if (parts[l].norm() == Scalar(0)) return false;
    for (std::size_t k = l + 1; k < n; ++k) {
      if (parts[k].norm() == Scalar(0)) return false;
      const auto angles = principal_angles(concepts[l], concepts[k]);
      if (angles.size() == 0) continue;
      const Scalar c = std::clamp(parts[l].dot(parts[k]) / (parts[l].norm() * parts[k].norm()), Scalar(-1), Scalar(1));
      const Scalar angle = std::acos(c);
      if (angle < angles.minCoeff() - tol || angle > angles.maxCoeff() + tol) return false;
    }
  }
  return true;
}

}  // namespace mcd
