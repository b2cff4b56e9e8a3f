#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcd/concept_bases.hpp"
#include "mcd/geometry.hpp"
#include "mcd/tensor_store.hpp"

namespace mcd {

/// phi = sum_l phi^l over the n_c concepts and the complement (last part).
struct Decomposition {
  std::vector<Eigen::VectorXd> parts;
  std::vector<Eigen::VectorXd> coefficients;

  Eigen::VectorXd reconstruct() const;
};

/// One (n_c+1, H, W) stack of spatial maps; map l is maps[l], an H x W matrix.
using MapStack = std::vector<Eigen::MatrixXd>;

struct Explanation {
  MapStack activation_maps;
  /// relevance_maps[l](y, x) = phi^l_{xy} . w; mean over locations equals r^l.
  MapStack relevance_maps;
  Eigen::VectorXd local_relevances;  // r^1..r^{n_c}, r^perp
  double logit = 0.0;
  double bias = 0.0;
  Eigen::Index class_id = 0;
  Eigen::Index sample = 0;

  /// Per-location contributions to the pooled logit, relevance_maps / (H*W):
  /// they sum over locations to r^l and over concepts to the class activation map.
  MapStack cam_contributions() const;
  /// Class activation map r_{xy} = phi_{xy}.w / (H*W).
  Eigen::MatrixXd class_activation_map() const;
};

struct GlobalRelevance {
  std::vector<Eigen::VectorXd> weight_parts;  // w^1..w^{n_c}, w^perp
  Eigen::VectorXd norms;
  double eta = 0.0;
  WsumBounds<double> bounds;
  /// Whether each pairwise angle between concept weight parts lies within
  /// its principal-angle range, the condition under which the bounds hold.
  bool bound_premises_hold = true;
};

struct Prototype {
  Eigen::Index sample = 0;
  std::string sample_id;
  double score = 0.0;
};

/// Decompositions against one ConceptModel. Factorizes the concept block once
/// and reuses it for every vector; the complement part is the residual of the
/// orthogonal projection onto the concept span.
class Decomposer {
 public:
  explicit Decomposer(const ConceptModel& model);

  const ConceptModel& model() const { return model_; }

  Decomposition decompose(const Eigen::VectorXd& phi) const;
  /// Concept coefficients for each row of `rows` (M x F), as an M x F matrix
  /// laid out like full_basis columns.
  Eigen::MatrixXd coefficients(const Eigen::MatrixXd& rows) const;
  /// Part l (0..n_c) of every row, M x F.
  Eigen::MatrixXd part_rows(const Eigen::MatrixXd& coeffs, Eigen::Index l) const;

  MapStack activation_maps(const FeatureStack& stack, Eigen::Index sample) const;
  Explanation relevance(const ClassifierHead& head, const FeatureStack& stack, Eigen::Index sample,
                        Eigen::Index class_id) const;
  GlobalRelevance global_relevance(const Eigen::VectorXd& weight) const;
  GlobalRelevance global_relevance(const ClassifierHead& head, Eigen::Index class_id) const;

  /// Samples ranked by max over locations of |phi^l_{xy}|, descending; ties
  /// keep ascending sample order.
  std::vector<Prototype> prototypes(const FeatureStack& stack, Eigen::Index concept_id, Eigen::Index k) const;

 private:
  ConceptModel model_;
  Eigen::MatrixXd concept_block_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::MatrixXd q_thin_;
};

/// Completeness score 1 - |w^perp|^2 / |w|^2.
double completeness_score(const ConceptModel& model, const Eigen::VectorXd& weight);

/// Bilinear upsampling with half-pixel centres (corners not aligned).
Eigen::MatrixXd upsample(const Eigen::MatrixXd& map, Eigen::Index height, Eigen::Index width);

}  // namespace mcd
