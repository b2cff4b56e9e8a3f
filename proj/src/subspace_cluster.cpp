#include "mcd/subspace_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "mcd/error.hpp"
#include "mcd/parallel.hpp"

namespace mcd {

void ClusterConfig::validate() const {
  if (!(gamma > 0.0)) throw Error(ErrorCode::ConfigError, "gamma must be positive");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw Error(ErrorCode::ConfigError, "lambda must lie in (0, 1]");
  if (!(outlier_percentile >= 0.0 && outlier_percentile <= 1.0))
    throw Error(ErrorCode::ConfigError, "outlier percentile must lie in [0, 1]");
  if (n_clusters && *n_clusters < 1) throw Error(ErrorCode::ConfigError, "number of clusters must be >= 1");
  if (subsample < 1) throw Error(ErrorCode::ConfigError, "subsample size must be >= 1");
  if (tolerance <= 0.0 || max_sweeps < 1) throw Error(ErrorCode::ConfigError, "invalid solver tolerance");
  if (kmeans_restarts < 1 || max_auto_clusters < 1) throw Error(ErrorCode::ConfigError, "invalid clustering limits");
}

std::vector<Eigen::Index> ClusterAssignment::members(int cluster) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == cluster) out.push_back(subsample_indices[i]);
  return out;
}

int canonicalize_labels(std::vector<int>& labels) {
  std::vector<int> remap;
  for (auto& l : labels) {
    if (l == kOutlier) continue;
    if (static_cast<std::size_t>(l) >= remap.size()) remap.resize(static_cast<std::size_t>(l) + 1, -1);
    if (remap[static_cast<std::size_t>(l)] < 0)
      remap[static_cast<std::size_t>(l)] = static_cast<int>(std::count_if(remap.begin(), remap.end(), [](int v) { return v >= 0; }));
    l = remap[static_cast<std::size_t>(l)];
  }
  return static_cast<int>(std::count_if(remap.begin(), remap.end(), [](int v) { return v >= 0; }));
}

std::vector<Eigen::Index> subsample_rows(const FeatureStack& stack, const ClusterConfig& config) {
  const Eigen::Index m = stack.size();
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(m));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  if (config.subsample >= m) return rows;

  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> picked;
  if (config.stratified && stack.sample_count() > 1) {
    const Eigen::Index samples = stack.sample_count();
    const Eigen::Index per = m / samples;
    for (Eigen::Index s = 0; s < samples; ++s) {
      // spread the remainder over the first samples
      const Eigen::Index quota = config.subsample / samples + (s < config.subsample % samples ? 1 : 0);
      std::vector<Eigen::Index> local(static_cast<std::size_t>(per));
      std::iota(local.begin(), local.end(), s * per);
      std::shuffle(local.begin(), local.end(), rng);
      local.resize(static_cast<std::size_t>(std::min(quota, per)));
      picked.insert(picked.end(), local.begin(), local.end());
    }
  } else {
    std::shuffle(rows.begin(), rows.end(), rng);
    picked.assign(rows.begin(), rows.begin() + config.subsample);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

SelfRepresentation fit_self_representation(Eigen::MatrixXd points, std::vector<Eigen::Index> indices,
                                           const ClusterConfig& config) {
  config.validate();
  const Eigen::Index n = points.cols();
  if (n < 2) throw Error(ErrorCode::TooFewSamples, "self-representation needs at least two points");
  const ElasticNetOptions options = config.elastic_net();

  std::vector<Eigen::VectorXd> columns(static_cast<std::size_t>(n));
  Eigen::VectorXd residuals(n);
  parallel_for(static_cast<std::size_t>(n), config.threads, [&](std::size_t j) {
    const auto col = static_cast<Eigen::Index>(j);
    auto sol = solve_elastic_net(points, points.col(col), col, options);
    residuals(col) = sol.residual_norm;
    columns[j] = std::move(sol.coefficients);
  });

  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& c = columns[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i)
      if (c(i) != 0.0) triplets.emplace_back(i, j, c(i));
  }
  SelfRepresentation rep;
  rep.coefficients.resize(n, n);
  rep.coefficients.setFromTriplets(triplets.begin(), triplets.end());
  rep.points = std::move(points);
  rep.indices = std::move(indices);
  rep.residuals = std::move(residuals);
  rep.gamma = config.gamma;
  return rep;
}

SelfRepresentation fit_self_representation(const FeatureStack& stack, const ClusterConfig& config) {
  config.validate();
  const auto rows = subsample_rows(stack, config);
  std::vector<Eigen::Index> kept;
  std::vector<Eigen::Index> zero;
  for (const auto r : rows) (stack.data().row(r).squaredNorm() > 0.0 ? kept : zero).push_back(r);
  if (kept.size() < 2) throw Error(ErrorCode::TooFewSamples, "fewer than two non-zero feature vectors");

  Eigen::MatrixXd points(stack.feature_dim(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j)
    points.col(static_cast<Eigen::Index>(j)) = stack.data().row(kept[j]).transpose().normalized();
  auto rep = fit_self_representation(std::move(points), kept, config);
  rep.excluded = zero;
  if (!zero.empty())
    rep.warnings.push_back("DegenerateVector: excluded " + std::to_string(zero.size()) + " all-zero feature vectors");
  return rep;
}

OutlierRemoval remove_outliers(const SelfRepresentation& rep, const ClusterConfig& config) {
  config.validate();
  const Eigen::Index n = rep.size();
  const auto flagged_count = static_cast<Eigen::Index>(std::floor(config.outlier_percentile * static_cast<double>(n) + 1e-9));
  if (flagged_count == 0) return {rep, {}};
  if (flagged_count >= n) throw Error(ErrorCode::AllOutliers, "outlier threshold flags every point");

  Eigen::VectorXd l1 = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(rep.coefficients, j); it; ++it) l1(j) += std::abs(it.value());

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return l1(a) < l1(b); });
  std::vector<char> is_outlier(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < flagged_count; ++i) is_outlier[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  std::vector<Eigen::Index> outliers, kept_cols;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (is_outlier[static_cast<std::size_t>(j)])
      outliers.push_back(rep.indices[static_cast<std::size_t>(j)]);
    else
      kept_cols.push_back(j);
  }
  if (kept_cols.size() < 2) throw Error(ErrorCode::AllOutliers, "fewer than two points survive outlier removal");

  Eigen::MatrixXd points(rep.points.rows(), static_cast<Eigen::Index>(kept_cols.size()));
  std::vector<Eigen::Index> indices;
  for (std::size_t j = 0; j < kept_cols.size(); ++j) {
    points.col(static_cast<Eigen::Index>(j)) = rep.points.col(kept_cols[j]);
    indices.push_back(rep.indices[static_cast<std::size_t>(kept_cols[j])]);
  }
  auto refit = fit_self_representation(std::move(points), std::move(indices), config);
  refit.excluded = rep.excluded;
  refit.warnings = rep.warnings;
  return {std::move(refit), std::move(outliers)};
}

Eigen::MatrixXd affinity(const SelfRepresentation& rep) {
  const Eigen::MatrixXd r = Eigen::MatrixXd(rep.coefficients).cwiseAbs();
  return r + r.transpose();
}

int SpectralEmbedding::eigengap_clusters(int max_k) const {
  const auto n = static_cast<int>(eigenvalues.size());
  const int limit = std::min(max_k, n - 1);
  int best = 1;
  double best_gap = -1.0;
  for (int k = 1; k <= limit; ++k) {
    const double gap = eigenvalues(k) - eigenvalues(k - 1);
    if (gap > best_gap) {
      best_gap = gap;
      best = k;
    }
  }
  return best;
}

int SpectralEmbedding::zero_eigenvalues(double tol) const {
  return static_cast<int>((eigenvalues.array() < tol).count());
}

SpectralEmbedding spectral_embedding(const Eigen::MatrixXd& w, std::vector<Eigen::Index> indices) {
  const Eigen::Index n = w.rows();
  const Eigen::VectorXd degree = w.rowwise().sum();
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  Eigen::MatrixXd laplacian = -(inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal());
  laplacian.diagonal().array() += 1.0;
  // symmetrize against roundoff in the scaling
  laplacian = 0.5 * (laplacian + laplacian.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(laplacian);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::InvalidValue, "Laplacian eigendecomposition failed");
  return {eig.eigenvalues(), eig.eigenvectors(), std::move(indices)};
}

ClusterAssignment cluster_embedding(const SpectralEmbedding& embedding, int k, const ClusterConfig& config) {
  const Eigen::Index n = embedding.eigenvectors.rows();
  if (k < 1 || k > n) throw Error(ErrorCode::TooFewSamples, "cannot form " + std::to_string(k) + " clusters from " +
                                                                 std::to_string(n) + " points");
  Eigen::MatrixXd u = embedding.eigenvectors.leftCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = u.row(i).norm();
    if (norm > 0.0) u.row(i) /= norm;
  }
  ClusterAssignment out;
  out.labels = kmeans(u, k, config.seed, config.kmeans_restarts).labels;
  out.n_clusters = canonicalize_labels(out.labels);
  out.subsample_indices = embedding.indices;
  const int components = embedding.zero_eigenvalues();
  if (components > k)
    out.warnings.push_back("affinity graph has " + std::to_string(components) + " connected components but only " +
                           std::to_string(k) + " clusters were requested");
  return out;
}

ClusterAssignment spectral_cluster(const SelfRepresentation& rep, const ClusterConfig& config) {
  config.validate();
  const auto embedding = spectral_embedding(affinity(rep), rep.indices);
  const int k = config.n_clusters ? *config.n_clusters : embedding.eigengap_clusters(config.max_auto_clusters);
  auto out = cluster_embedding(embedding, k, config);
  out.warnings.insert(out.warnings.begin(), rep.warnings.begin(), rep.warnings.end());
  return out;
}

KMeansResult kmeans(const Eigen::MatrixXd& rows, int k, std::uint64_t seed, int restarts, int max_iter) {
  const Eigen::Index n = rows.rows();
  if (k < 1 || k > n) throw Error(ErrorCode::TooFewSamples, "k-means needs 1 <= k <= n");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < restarts; ++restart) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(restart)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // k-means++ seeding
    Eigen::MatrixXd centers(k, rows.cols());
    centers.row(0) = rows.row(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n)));
    Eigen::VectorXd d2 = (rows.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      Eigen::Index pick = 0;
      if (total > 0.0) {
        double target = unit(rng) * total;
        for (pick = 0; pick < n - 1; ++pick) {
          target -= d2(pick);
          if (target < 0.0) break;
        }
      } else {
        pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
      }
      centers.row(c) = rows.row(pick);
      d2 = d2.cwiseMin((rows.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    double inertia = 0.0;
    for (int iter = 0; iter < max_iter; ++iter) {
      bool changed = false;
      inertia = 0.0;
      Eigen::VectorXd dist(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index arg = 0;
        dist(i) = (centers.rowwise() - rows.row(i)).rowwise().squaredNorm().minCoeff(&arg);
        inertia += dist(i);
        if (labels[static_cast<std::size_t>(i)] != static_cast<int>(arg)) {
          labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
          changed = true;
        }
      }
      if (!changed) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, rows.cols());
      Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += rows.row(i);
        ++counts(labels[static_cast<std::size_t>(i)]);
      }
      for (int c = 0; c < k; ++c) {
        if (counts(c) > 0) {
          centers.row(c) = sums.row(c) / counts(c);
        } else {
          // empty cluster: move it to the point farthest from its center
          Eigen::Index far = 0;
          dist.maxCoeff(&far);
          centers.row(c) = rows.row(far);
          dist(far) = 0.0;
        }
      }
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = labels;
      best.centers = centers;
    }
  }
  return best;
}

ClusterAssignment kmeans_cluster(const FeatureStack& stack, const ClusterConfig& config) {
  config.validate();
  if (!config.n_clusters) throw Error(ErrorCode::ConfigError, "k-means needs an explicit number of clusters");
  const auto rows = subsample_rows(stack, config);
  const int k = *config.n_clusters;
  if (static_cast<std::size_t>(k) > rows.size())
    throw Error(ErrorCode::TooFewSamples, "k = " + std::to_string(k) + " exceeds " + std::to_string(rows.size()) + " points");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), stack.feature_dim());
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = stack.data().row(rows[i]);
  ClusterAssignment out;
  out.labels = kmeans(x, k, config.seed, config.kmeans_restarts).labels;
  out.n_clusters = canonicalize_labels(out.labels);
  out.subsample_indices = rows;
  return out;
}

PcaDirections pca_directions(const FeatureStack& stack, Eigen::Index n_components, bool center) {
  if (n_components < 1 || n_components > stack.feature_dim())
    throw Error(ErrorCode::RankDeficient, "n_components must lie in [1, F]");
  Eigen::MatrixXd x = stack.data();
  if (center) x.rowwise() -= x.colwise().mean();
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double tol = s.size() > 0 ? s(0) * static_cast<double>(std::max(x.rows(), x.cols())) *
                                        std::numeric_limits<double>::epsilon()
                                  : 0.0;
  const Eigen::Index rank = (s.array() > tol).count();
  if (n_components > rank)
    throw Error(ErrorCode::RankDeficient, "requested " + std::to_string(n_components) +
                                              " directions but the features have rank " + std::to_string(rank));
  PcaDirections out;
  out.explained_variance = s.head(n_components).array().square() / static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < n_components; ++j) {
    Eigen::VectorXd v = svd.matrixV().col(j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.bases.push_back(ConceptBasis{v, "pca_" + std::to_string(j), static_cast<int>(j)});
  }
  return out;
}

}  // namespace mcd
