#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mcd/tensor_store.hpp"

namespace mcd {

enum class HeadMode { InSpan, Random };

struct SynthSpec {
  Eigen::Index feature_dim = 16;
  std::vector<Eigen::Index> dims{2, 3, 4};
  /// Points per subspace; ignored with a spatial layout, where every grid
  /// location receives a point.
  Eigen::Index points_per_subspace = 100;
  double noise_sigma = 0.0;
  Eigen::Index n_outliers = 0;
  std::optional<SpatialLayout> layout;
  std::uint64_t seed = 0;
  HeadMode head_mode = HeadMode::InSpan;
  Eigen::Index n_classes = 1;

  Eigen::Index n_subspaces() const { return static_cast<Eigen::Index>(dims.size()); }
  void validate() const;
};

struct SynthProblem {
  FeatureStack stack;
  std::vector<int> labels;  // per stack row, -1 for outliers
  std::vector<Eigen::MatrixXd> bases;
  ClassifierHead head;
};

/// Haar-random orthonormal F x d basis (QR of a Gaussian matrix, sign-fixed).
template <typename Rng>
Eigen::MatrixXd haar_basis(Eigen::Index f, Eigen::Index d, Rng& rng);

/// Planted union of subspaces. With a layout, each sample's grid is split
/// into vertical bands (one per subspace, cyclically shifted per sample).
SynthProblem generate(const SynthSpec& spec);

/// Index of the optimal assignment rows -> columns minimizing total cost
/// (square cost matrix, Hungarian method).
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

/// Misclassification rate under the best label matching; entries where either
/// side is negative (outlier) are skipped.
double clustering_error(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace mcd

#include <random>

template <typename Rng>
Eigen::MatrixXd mcd::haar_basis(Eigen::Index f, Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(f, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < f; ++i) g(i, j) = normal(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(f, d);
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}
