#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcd/concept_bases.hpp"
#include "mcd/subspace_cluster.hpp"

namespace mcd {

enum class Method { Ssc, SscOrtho, KMeans, Pca };

Method parse_method(const std::string& name);
const char* to_string(Method method);

struct DiscoveryConfig {
  Method method = Method::Ssc;
  ClusterConfig cluster;
  double alpha_fo = kDefaultAlphaFO;
  OverlapPolicy overlap = OverlapPolicy::Error;
  bool center = false;  // PCA flavor only
  /// Class whose weight vector drives the greedy rotation (ssc-ortho).
  Eigen::Index class_id = 0;
};

struct Discovery {
  ClusterAssignment assignment;
  ConceptModel model;
  std::vector<double> eta_per_step;  // ssc-ortho only
  std::vector<std::string> warnings;
};

/// Concept bases for each cluster of an assignment, labelled and tagged with
/// their source cluster. Clusters with fewer than two members are skipped.
std::vector<ConceptBasis> bases_from_assignment(const FeatureStack& stack, const ClusterAssignment& assignment,
                                                double alpha_fo, std::vector<std::string>* warnings = nullptr);

/// SSC state that does not depend on the number of clusters: the refit
/// self-representation after outlier removal and its spectral embedding.
/// Clustering at different n_c reuses both.
class SscSession {
 public:
  SscSession(const FeatureStack& stack, const ClusterConfig& config);

  const SelfRepresentation& representation() const { return rep_; }
  const std::vector<Eigen::Index>& outliers() const { return outliers_; }
  const std::vector<Eigen::Index>& subsample() const { return subsample_; }
  const SpectralEmbedding& embedding() const { return embedding_; }
  int auto_clusters() const { return embedding_.eigengap_clusters(config_.max_auto_clusters); }

  /// Labels over the full subsample (outliers and zero vectors marked kOutlier).
  ClusterAssignment assign(std::optional<int> n_clusters) const;

 private:
  ClusterConfig config_;
  SelfRepresentation rep_;
  std::vector<Eigen::Index> outliers_;
  std::vector<Eigen::Index> subsample_;
  SpectralEmbedding embedding_;
};

Discovery discover(const FeatureStack& stack, const ClassifierHead* head, const DiscoveryConfig& config);

/// Model from an existing assignment (the `bases` stage).
Discovery build_model(const FeatureStack& stack, const ClassifierHead* head, ClusterAssignment assignment,
                      const DiscoveryConfig& config);

}  // namespace mcd
