#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcd/tensor_store.hpp"

namespace mcd {

/// Orthonormal basis (F x d) of one concept subspace.
struct ConceptBasis {
  Eigen::MatrixXd vectors;
  std::string label;
  int source_cluster = -1;

  Eigen::Index dim() const { return vectors.cols(); }
  Eigen::Index feature_dim() const { return vectors.rows(); }
};

/// Concepts C^1..C^{n_c} plus the orthogonal complement of their span.
/// Construct through assemble_model(); the constructor only re-validates.
class ConceptModel {
 public:
  ConceptModel(std::vector<ConceptBasis> concepts, ConceptBasis complement, Eigen::Index feature_dim);

  const std::vector<ConceptBasis>& concepts() const { return concepts_; }
  const ConceptBasis& complement() const { return complement_; }
  Eigen::Index concept_count() const { return static_cast<Eigen::Index>(concepts_.size()); }
  Eigen::Index feature_dim() const { return feature_dim_; }
  /// Total dimension of the concept span (sum of d^l).
  Eigen::Index concept_span_dim() const { return feature_dim_ - complement_.dim(); }

  /// [C^1 | ... | C^{n_c} | C^perp], F x F.
  const Eigen::MatrixXd& full_basis() const { return full_basis_; }
  /// Column offset of concept l inside full_basis (l == n_c addresses the complement).
  Eigen::Index offset(Eigen::Index l) const { return offsets_[static_cast<std::size_t>(l)]; }
  Eigen::Index part_dim(Eigen::Index l) const;
  /// 2-norm condition number of full_basis.
  double condition_number() const { return condition_; }

  /// Concept bases as plain matrices (complement excluded).
  std::vector<Eigen::MatrixXd> concept_matrices() const;

 private:
  std::vector<ConceptBasis> concepts_;
  ConceptBasis complement_;
  Eigen::Index feature_dim_;
  Eigen::MatrixXd full_basis_;
  std::vector<Eigen::Index> offsets_;
  double condition_ = 1.0;
};

inline constexpr double kDefaultAlphaFO = 0.05;
inline constexpr double kDisjointnessThreshold = 1e-6;
inline constexpr double kMaxCondition = 1e12;
inline constexpr double kProjectionCutoff = 1e-10;

/// Count of second-moment eigenvalues above alpha * largest eigenvalue
/// (Fukunaga-Olsen local PCA criterion). `singular_values` are those of
/// the member matrix, so eigenvalues are their squares.
Eigen::Index fukunaga_olsen_dimension(const Eigen::VectorXd& singular_values, double alpha);

/// Uncentered PCA basis for the rows `members` of the stack, truncated at the
/// Fukunaga-Olsen intrinsic dimension.
ConceptBasis basis_from_cluster(const FeatureStack& stack, std::span<const Eigen::Index> members,
                                double alpha_fo = kDefaultAlphaFO);

enum class OverlapPolicy { Error, Split };

struct AssembleOptions {
  double disjointness_threshold = kDisjointnessThreshold;
  OverlapPolicy overlap = OverlapPolicy::Error;
};

/// Remove the shared directions of every overlapping pair from both members
/// and append them as a separate concept, until all pairs are disjoint.
std::vector<ConceptBasis> split_overlaps(std::vector<ConceptBasis> bases, double threshold);

/// Validate disjointness and dimension budget, then build the complement and
/// the full basis. Throws SubspaceOverlap, Overcomplete or IllConditionedBasis.
ConceptModel assemble_model(std::vector<ConceptBasis> bases, Eigen::Index feature_dim,
                            const AssembleOptions& options = {});

struct Orthogonalization {
  ConceptModel model;
  /// Completeness score after each accepted concept.
  std::vector<double> eta_per_step;
  /// source_cluster of the concept picked at each step.
  std::vector<int> order;
};

/// Greedy rotation of a model's concepts into mutually orthogonal subspaces.
/// Each step projects every remaining concept onto the complement of the
/// span picked so far and keeps the one with the largest completeness gain
/// for `weight`; ties go to the lower source_cluster.
Orthogonalization orthogonalize_greedy(const ConceptModel& model, const Eigen::VectorXd& weight);
Orthogonalization orthogonalize_greedy(const ConceptModel& model, const ClassifierHead& head,
                                       Eigen::Index class_id);

}  // namespace mcd
