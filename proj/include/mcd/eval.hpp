#pragma once

#include <climits>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcd/decomposer.hpp"
#include "mcd/discovery.hpp"

namespace mcd {

/// Per-location argmax over the activation maps (complement included, index
/// n_c); ties go to the lower index.
struct ConceptMaskSet {
  Eigen::MatrixXi assignment;        // H x W, values in 0..n_c
  Eigen::VectorXd pooled_relevance;  // per index: sum of r^l_xy/(HW) over its own mask
  Eigen::VectorXi sizes;             // locations per index
};

ConceptMaskSet hard_assign(const Explanation& explanation);

enum class FlipOrder { DescRelevance, Random };
enum class Imputation { Zero, Mean };

FlipOrder parse_flip_order(const std::string& name);
Imputation parse_imputation(const std::string& name);
const char* to_string(FlipOrder order);
const char* to_string(Imputation imputation);

struct FlipPoint {
  double fraction = 0.0;  // cumulative share of flipped grid locations
  double logit = 0.0;     // target-class logit after flipping
  bool top1 = false;      // target class still ranks first among all head rows
  int concept_id = -1;    // concept flipped at this step (-1 for the start point)
};

struct FlipCurve {
  std::vector<FlipPoint> points;
  FlipOrder order = FlipOrder::DescRelevance;
  Eigen::Index sample = 0;
};

struct FlipConfig {
  FlipOrder order = FlipOrder::DescRelevance;
  Imputation imputation = Imputation::Zero;
  /// At most this many concepts are flipped (the minimum n_c across the
  /// compared classes, when evaluating several).
  int max_flips = INT_MAX;
  std::uint64_t seed = 0;
};

/// Fill vector used for flipped locations: zeros or the mean feature vector of `stack`.
Eigen::VectorXd imputation_fill(const FeatureStack& stack, Imputation imputation);

/// Flip the concept masks of one sample (complement masks are never flipped),
/// highest pooled relevance first or in seeded random order, re-evaluating
/// the linear head on the mean-pooled features after each step. Concepts
/// without assigned locations are skipped.
FlipCurve sdc_curve(const Decomposer& decomposer, const ClassifierHead& head, const FeatureStack& stack,
                    Eigen::Index sample, Eigen::Index class_id, const FlipConfig& config,
                    const Eigen::VectorXd& fill);

std::vector<FlipCurve> sdc_curves(const Decomposer& decomposer, const ClassifierHead& head, const FeatureStack& stack,
                                  Eigen::Index class_id, const FlipConfig& config, int threads = 1);

/// Area under logit-vs-fraction on [0, 1], trapezoidal, holding the last value.
double flip_auc(const FlipCurve& curve);

/// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p(int wins, int losses);

/// Model with n concepts for a given flavor; nullopt when it cannot be formed.
using ModelSequence = std::function<std::optional<ConceptModel>(int n_concepts)>;

/// SSC flavors reuse `session` when given (the embedding does not depend on
/// the class); otherwise one is built from config.cluster.
ModelSequence model_sequence(const FeatureStack& stack, const ClassifierHead& head, Eigen::Index class_id,
                             const DiscoveryConfig& config, std::shared_ptr<const SscSession> session = nullptr);

struct ConcisenessRow {
  std::string method;
  Eigen::Index class_id = 0;
  std::optional<int> n_concepts;  // nullopt: target not reached within the cap
  double eta = 0.0;
  double mean_dim = 0.0;
  double mean_distance = 0.0;  // NaN with fewer than two concepts
};

/// Smallest n_c in 1..cap whose model reaches eta >= target for `weight`.
ConcisenessRow conciseness_for_class(const ModelSequence& models, const Eigen::VectorXd& weight,
                                     double eta_target, int cap);

struct ConcisenessSummary {
  std::string method;
  double mean_n_concepts = 0.0;  // over classes that reached the target
  int unreached = 0;
  double mean_dim = 0.0;
  double mean_distance = 0.0;
};

ConcisenessSummary summarize(const std::vector<ConcisenessRow>& rows);

/// Mean pairwise scaled Grassmann distance between the concepts of a model.
double mean_pairwise_distance(const ConceptModel& model);

}  // namespace mcd
