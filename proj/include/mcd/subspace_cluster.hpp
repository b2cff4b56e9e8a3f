#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "mcd/concept_bases.hpp"
#include "mcd/elastic_net.hpp"
#include "mcd/tensor_store.hpp"

namespace mcd {

inline constexpr int kOutlier = -1;

struct ClusterConfig {
  double gamma = 10.0;
  double lambda = 0.9;
  double outlier_percentile = 0.75;
  std::optional<int> n_clusters;  // nullopt: eigengap selection
  Eigen::Index subsample = 8192;
  bool stratified = false;  // equal quota per sample instead of uniform rows
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
  int max_sweeps = 500;
  int kmeans_restarts = 10;
  int max_auto_clusters = 20;
  int threads = 0;  // 0: hardware concurrency

  ElasticNetOptions elastic_net() const { return {gamma, lambda, tolerance, max_sweeps, false}; }
  void validate() const;
};

struct SelfRepresentation {
  /// n x n; column j holds the coefficients representing point j.
  Eigen::SparseMatrix<double> coefficients;
  /// F x n, l2-normalized points, column j is the stack row indices[j].
  Eigen::MatrixXd points;
  std::vector<Eigen::Index> indices;
  Eigen::VectorXd residuals;
  double gamma = 10.0;
  /// Stack rows dropped because they were zero vectors.
  std::vector<Eigen::Index> excluded;
  std::vector<std::string> warnings;

  Eigen::Index size() const { return points.cols(); }
};

struct ClusterAssignment {
  /// Aligned with subsample_indices; kOutlier marks removed points.
  std::vector<int> labels;
  int n_clusters = 0;
  std::vector<Eigen::Index> subsample_indices;
  std::vector<std::string> warnings;

  std::vector<Eigen::Index> members(int cluster) const;
};

/// Seeded row subsample of the stack, sorted ascending.
std::vector<Eigen::Index> subsample_rows(const FeatureStack& stack, const ClusterConfig& config);

/// Elastic-net self-representation of the given points (columns of F x n,
/// already normalized). Columns are solved independently and merged in order.
SelfRepresentation fit_self_representation(Eigen::MatrixXd points, std::vector<Eigen::Index> indices,
                                           const ClusterConfig& config);
/// Subsample, drop zero rows, l2-normalize and fit.
SelfRepresentation fit_self_representation(const FeatureStack& stack, const ClusterConfig& config);

struct OutlierRemoval {
  SelfRepresentation representation;
  std::vector<Eigen::Index> outliers;  // stack rows
};

/// Flags the floor(p*n) points with the smallest l1-norm of their
/// representation as outliers and refits on the rest.
OutlierRemoval remove_outliers(const SelfRepresentation& rep, const ClusterConfig& config);

/// Symmetric affinity |R| + |R^T|.
Eigen::MatrixXd affinity(const SelfRepresentation& rep);

struct SpectralEmbedding {
  Eigen::VectorXd eigenvalues;   // ascending, of the normalized Laplacian
  Eigen::MatrixXd eigenvectors;  // n x n
  std::vector<Eigen::Index> indices;

  /// Cluster count at the largest gap among the first max_k eigenvalues.
  int eigengap_clusters(int max_k) const;
  int zero_eigenvalues(double tol = 1e-10) const;
};

SpectralEmbedding spectral_embedding(const Eigen::MatrixXd& affinity, std::vector<Eigen::Index> indices);

/// Row-normalized k leading eigenvectors clustered with seeded k-means.
ClusterAssignment cluster_embedding(const SpectralEmbedding& embedding, int k, const ClusterConfig& config);
ClusterAssignment spectral_cluster(const SelfRepresentation& rep, const ClusterConfig& config);

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;  // k x p
  double inertia = 0.0;
};

/// Lloyd iterations from k-means++ seeds; best of `restarts` by inertia.
KMeansResult kmeans(const Eigen::MatrixXd& rows, int k, std::uint64_t seed, int restarts = 10, int max_iter = 300);

ClusterAssignment kmeans_cluster(const FeatureStack& stack, const ClusterConfig& config);

struct PcaDirections {
  std::vector<ConceptBasis> bases;
  Eigen::VectorXd explained_variance;
};

/// Top principal directions as one-dimensional concepts; uncentered unless `center`.
PcaDirections pca_directions(const FeatureStack& stack, Eigen::Index n_components, bool center = false);

/// Relabel so labels appear in order 0, 1, ... of first occurrence; outliers kept.
int canonicalize_labels(std::vector<int>& labels);

}  // namespace mcd
