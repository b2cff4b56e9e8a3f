#include "mcd/discovery.hpp"

#include <algorithm>

#include "mcd/error.hpp"

namespace mcd {

Method parse_method(const std::string& name) {
  if (name == "ssc") return Method::Ssc;
  if (name == "ssc-ortho") return Method::SscOrtho;
  if (name == "kmeans") return Method::KMeans;
  if (name == "pca") return Method::Pca;
  throw Error(ErrorCode::ConfigError, "unknown method '" + name + "'");
}

const char* to_string(Method method) {
  switch (method) {
    case Method::Ssc: return "ssc";
    case Method::SscOrtho: return "ssc-ortho";
    case Method::KMeans: return "kmeans";
    case Method::Pca: return "pca";
  }
  return "?";
}

std::vector<ConceptBasis> bases_from_assignment(const FeatureStack& stack, const ClusterAssignment& assignment,
                                                double alpha_fo, std::vector<std::string>* warnings) {
  std::vector<ConceptBasis> bases;
  for (int c = 0; c < assignment.n_clusters; ++c) {
    const auto members = assignment.members(c);
    if (members.size() < 2) {
      if (warnings) warnings->push_back("cluster " + std::to_string(c) + " has fewer than two members; skipped");
      continue;
    }
    try {
      ConceptBasis b = basis_from_cluster(stack, members, alpha_fo);
      b.source_cluster = c;
      b.label = "concept_" + std::to_string(c);
      bases.push_back(std::move(b));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateCluster) throw;
      if (warnings) warnings->push_back("cluster " + std::to_string(c) + ": " + e.what());
    }
  }
  return bases;
}

SscSession::SscSession(const FeatureStack& stack, const ClusterConfig& config) : config_(config) {
  config_.validate();
  subsample_ = subsample_rows(stack, config_);
  auto initial = fit_self_representation(stack, config_);
  auto removal = remove_outliers(initial, config_);
  rep_ = std::move(removal.representation);
  outliers_ = std::move(removal.outliers);
  embedding_ = spectral_embedding(affinity(rep_), rep_.indices);
}

ClusterAssignment SscSession::assign(std::optional<int> n_clusters) const {
  const int k = n_clusters ? *n_clusters : auto_clusters();
  const ClusterAssignment inliers = cluster_embedding(embedding_, k, config_);
  ClusterAssignment out;
  out.n_clusters = inliers.n_clusters;
  out.subsample_indices = subsample_;
  out.labels.assign(subsample_.size(), kOutlier);
  for (std::size_t i = 0; i < inliers.subsample_indices.size(); ++i) {
    const auto it = std::lower_bound(subsample_.begin(), subsample_.end(), inliers.subsample_indices[i]);
    out.labels[static_cast<std::size_t>(it - subsample_.begin())] = inliers.labels[i];
  }
  out.warnings = rep_.warnings;
  out.warnings.insert(out.warnings.end(), inliers.warnings.begin(), inliers.warnings.end());
  return out;
}

Discovery build_model(const FeatureStack& stack, const ClassifierHead* head, ClusterAssignment assignment,
                      const DiscoveryConfig& config) {
  std::vector<std::string> warnings = assignment.warnings;
  auto bases = bases_from_assignment(stack, assignment, config.alpha_fo, &warnings);
  AssembleOptions options;
  options.overlap = config.overlap;
  ConceptModel model = assemble_model(std::move(bases), stack.feature_dim(), options);
  std::vector<double> etas;
  if (config.method == Method::SscOrtho) {
    if (!head) throw Error(ErrorCode::ConfigError, "ssc-ortho needs a classifier head");
    auto ortho = orthogonalize_greedy(model, *head, config.class_id);
    model = std::move(ortho.model);
    etas = std::move(ortho.eta_per_step);
  }
  return Discovery{std::move(assignment), std::move(model), std::move(etas), std::move(warnings)};
}

Discovery discover(const FeatureStack& stack, const ClassifierHead* head, const DiscoveryConfig& config) {
  switch (config.method) {
    case Method::Ssc:
    case Method::SscOrtho: {
      const SscSession session(stack, config.cluster);
      return build_model(stack, head, session.assign(config.cluster.n_clusters), config);
    }
    case Method::KMeans:
      return build_model(stack, head, kmeans_cluster(stack, config.cluster), config);
    case Method::Pca: {
      if (!config.cluster.n_clusters) throw Error(ErrorCode::ConfigError, "pca needs an explicit number of concepts");
      auto pca = pca_directions(stack, *config.cluster.n_clusters, config.center);
      ClusterAssignment none;
      none.n_clusters = static_cast<int>(pca.bases.size());
      return Discovery{std::move(none), assemble_model(std::move(pca.bases), stack.feature_dim()), {}, {}};
    }
  }
  throw Error(ErrorCode::ConfigError, "unknown method");
}

}  // namespace mcd
