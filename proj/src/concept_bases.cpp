#include "mcd/concept_bases.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcd/error.hpp"
#include "mcd/geometry.hpp"

namespace mcd {
namespace {

constexpr double kOrthonormalityTol = 1e-10;

double orthonormality_error(const Eigen::MatrixXd& b) {
  if (b.cols() == 0) return 0.0;
  return (b.transpose() * b - Eigen::MatrixXd::Identity(b.cols(), b.cols())).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd hstack(const std::vector<ConceptBasis>& bases, Eigen::Index rows) {
  Eigen::Index cols = 0;
  for (const auto& b : bases) cols += b.dim();
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& b : bases) {
    out.middleCols(at, b.dim()) = b.vectors;
    at += b.dim();
  }
  return out;
}

// Orthonormal basis for the range of m, dropping directions with singular value <= cutoff.
Eigen::MatrixXd orthonormal_range(const Eigen::MatrixXd& m, double cutoff) {
  if (m.cols() == 0) return Eigen::MatrixXd(m.rows(), 0);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  Eigen::Index keep = 0;
  while (keep < svd.singularValues().size() && svd.singularValues()(keep) > cutoff) ++keep;
  return svd.matrixU().leftCols(keep);
}

}  // namespace

ConceptModel::ConceptModel(std::vector<ConceptBasis> concepts, ConceptBasis complement, Eigen::Index feature_dim)
    : concepts_(std::move(concepts)), complement_(std::move(complement)), feature_dim_(feature_dim) {
  Eigen::Index total = complement_.dim();
  for (const auto& c : concepts_) {
    if (c.feature_dim() != feature_dim_ || c.dim() < 1)
      throw Error(ErrorCode::DimensionMismatch, "concept '" + c.label + "' has an invalid shape");
    if (orthonormality_error(c.vectors) > kOrthonormalityTol)
      throw Error(ErrorCode::InvalidValue, "concept '" + c.label + "' basis is not orthonormal");
    total += c.dim();
  }
  if (complement_.feature_dim() != feature_dim_) throw Error(ErrorCode::DimensionMismatch, "complement shape");
  if (total != feature_dim_)
    throw Error(ErrorCode::DimensionMismatch, "concept dimensions plus complement must equal F");
  if (orthonormality_error(complement_.vectors) > kOrthonormalityTol)
    throw Error(ErrorCode::InvalidValue, "complement basis is not orthonormal");

  const Eigen::MatrixXd concept_block = hstack(concepts_, feature_dim_);
  if (complement_.dim() > 0 && concept_block.cols() > 0 &&
      (concept_block.transpose() * complement_.vectors).cwiseAbs().maxCoeff() > kOrthonormalityTol)
    throw Error(ErrorCode::InvalidValue, "complement is not orthogonal to the concepts");

  full_basis_.resize(feature_dim_, feature_dim_);
  full_basis_ << concept_block, complement_.vectors;
  offsets_.clear();
  Eigen::Index at = 0;
  for (const auto& c : concepts_) {
    offsets_.push_back(at);
    at += c.dim();
  }
  offsets_.push_back(at);

  // The complement is orthonormal and orthogonal to the concept block, so the
  // singular values of the full basis are those of the block plus ones.
  double smax = 1.0, smin = 1.0;
  if (concept_block.cols() > 0) {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(concept_block);
    smax = std::max(smax, svd.singularValues().maxCoeff());
    smin = std::min(smin, svd.singularValues().minCoeff());
  }
  condition_ = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
}

Eigen::Index ConceptModel::part_dim(Eigen::Index l) const {
  return l == concept_count() ? complement_.dim() : concepts_[static_cast<std::size_t>(l)].dim();
}

std::vector<Eigen::MatrixXd> ConceptModel::concept_matrices() const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(concepts_.size());
  for (const auto& c : concepts_) out.push_back(c.vectors);
  return out;
}

Eigen::Index fukunaga_olsen_dimension(const Eigen::VectorXd& singular_values, double alpha) {
  if (singular_values.size() == 0) return 0;
  const double top = singular_values.maxCoeff();
  const double threshold = alpha * top * top;
  return (singular_values.array().square() > threshold).count();
}

ConceptBasis basis_from_cluster(const FeatureStack& stack, std::span<const Eigen::Index> members, double alpha_fo) {
  if (members.size() < 2) throw Error(ErrorCode::DegenerateCluster, "cluster needs at least two members");
  if (!(alpha_fo > 0.0 && alpha_fo < 1.0)) throw Error(ErrorCode::ConfigError, "alpha_fo must lie in (0, 1)");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(members.size()), stack.feature_dim());
  for (std::size_t i = 0; i < members.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = stack.data().row(members[i]);

  const Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= std::numeric_limits<double>::min() * 1e3)
    throw Error(ErrorCode::DegenerateCluster, "cluster has rank 0");
  const Eigen::Index d = fukunaga_olsen_dimension(s, alpha_fo);
  Eigen::MatrixXd basis = svd.matrixV().leftCols(d);
  // Sign convention: largest-magnitude entry of each direction is positive.
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index arg = 0;
    basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, j) < 0) basis.col(j) *= -1.0;
  }
  return ConceptBasis{std::move(basis), "", -1};
}

std::vector<ConceptBasis> split_overlaps(std::vector<ConceptBasis> bases, double threshold) {
  const double cos_threshold = std::cos(threshold);
  for (std::size_t guard = 0; guard < 4 * bases.size() * bases.size() + 4; ++guard) {
    bool changed = false;
    for (std::size_t i = 0; i < bases.size() && !changed; ++i) {
      for (std::size_t j = i + 1; j < bases.size() && !changed; ++j) {
        const auto angles = principal_angles(bases[i].vectors, bases[j].vectors);
        if (angles.size() == 0 || angles(0) > threshold) continue;
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(bases[i].vectors.transpose() * bases[j].vectors,
                                                    Eigen::ComputeFullU | Eigen::ComputeFullV);
        Eigen::Index shared = (angles.array() <= threshold).count();
        shared = std::max<Eigen::Index>(shared, (svd.singularValues().array() >= cos_threshold).count());
        ConceptBasis common{bases[i].vectors * svd.matrixU().leftCols(shared),
                            bases[i].label + "&" + bases[j].label, bases[i].source_cluster};
        common.vectors = orthonormal_range(common.vectors, kProjectionCutoff);
        ConceptBasis first = bases[i];
        ConceptBasis second = bases[j];
        first.vectors = bases[i].vectors * svd.matrixU().rightCols(bases[i].dim() - shared);
        second.vectors = bases[j].vectors * svd.matrixV().rightCols(bases[j].dim() - shared);

        std::vector<ConceptBasis> next;
        for (std::size_t k = 0; k < bases.size(); ++k) {
          if (k == i) {
            if (first.dim() > 0) next.push_back(first);
          } else if (k == j) {
            if (second.dim() > 0) next.push_back(second);
          } else {
            next.push_back(bases[k]);
          }
        }
        next.push_back(std::move(common));
        bases = std::move(next);
        changed = true;
      }
    }
    if (!changed) return bases;
  }
  throw Error(ErrorCode::SubspaceOverlap, "overlap splitting did not terminate");
}

ConceptModel assemble_model(std::vector<ConceptBasis> bases, Eigen::Index feature_dim, const AssembleOptions& options) {
  for (auto& b : bases) {
    if (b.feature_dim() != feature_dim)
      throw Error(ErrorCode::DimensionMismatch, "concept basis has " + std::to_string(b.feature_dim()) +
                                                    " rows, expected " + std::to_string(feature_dim));
  }
  if (options.overlap == OverlapPolicy::Split) bases = split_overlaps(std::move(bases), options.disjointness_threshold);

  Eigen::Index total = 0;
  for (const auto& b : bases) total += b.dim();
  if (total > feature_dim)
    throw Error(ErrorCode::Overcomplete, "concept dimensions sum to " + std::to_string(total) + " > F = " +
                                             std::to_string(feature_dim));
  for (std::size_t i = 0; i < bases.size(); ++i) {
    for (std::size_t j = i + 1; j < bases.size(); ++j) {
      const auto angles = principal_angles(bases[i].vectors, bases[j].vectors);
      if (angles.size() > 0 && angles(0) <= options.disjointness_threshold)
        throw SubspaceOverlap(static_cast<int>(i), static_cast<int>(j), angles(0));
    }
  }
  for (std::size_t i = 0; i < bases.size(); ++i) {
    if (bases[i].label.empty()) bases[i].label = "concept_" + std::to_string(i);
  }

  const Eigen::MatrixXd block = hstack(bases, feature_dim);
  ConceptBasis complement{Eigen::MatrixXd::Identity(feature_dim, feature_dim), "complement", -1};
  if (total > 0) {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(block);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(feature_dim, feature_dim);
    complement.vectors = q.rightCols(feature_dim - total);
  }
  ConceptModel model(std::move(bases), std::move(complement), feature_dim);
  if (!(model.condition_number() <= kMaxCondition))
    throw Error(ErrorCode::IllConditionedBasis,
                "concept union is (nearly) linearly dependent, condition number " +
                    std::to_string(model.condition_number()));
  return model;
}

Orthogonalization orthogonalize_greedy(const ConceptModel& model, const Eigen::VectorXd& weight) {
  const double wnorm2 = weight.squaredNorm();
  if (!(wnorm2 > 0.0)) throw Error(ErrorCode::ZeroWeight, "weight vector is zero");
  const Eigen::Index f = model.feature_dim();

  std::vector<ConceptBasis> remaining = model.concepts();
  std::stable_sort(remaining.begin(), remaining.end(),
                   [](const ConceptBasis& a, const ConceptBasis& b) { return a.source_cluster < b.source_cluster; });

  Eigen::MatrixXd selected(f, 0);
  std::vector<ConceptBasis> picked;
  std::vector<double> etas;
  std::vector<int> order;
  double explained = 0.0;
  while (!remaining.empty()) {
    std::size_t best = remaining.size();
    double best_gain = -1.0;
    Eigen::MatrixXd best_basis;
    std::vector<std::size_t> empty;
    for (std::size_t c = 0; c < remaining.size(); ++c) {
      Eigen::MatrixXd projected = remaining[c].vectors;
      if (selected.cols() > 0) projected -= selected * (selected.transpose() * projected);
      Eigen::MatrixXd q = orthonormal_range(projected, kProjectionCutoff);
      if (q.cols() == 0) {
        empty.push_back(c);
        continue;
      }
      const double gain = (q.transpose() * weight).squaredNorm();
      if (best == remaining.size() || gain > best_gain + 1e-12 * wnorm2) {
        best = c;
        best_gain = gain;
        best_basis = std::move(q);
      }
    }
    if (best == remaining.size()) break;

    ConceptBasis chosen = remaining[best];
    chosen.vectors = best_basis;
    order.push_back(chosen.source_cluster);
    Eigen::MatrixXd grown(f, selected.cols() + chosen.dim());
    grown << selected, chosen.vectors;
    selected = std::move(grown);
    explained = (selected.transpose() * weight).squaredNorm();
    etas.push_back(std::clamp(explained / wnorm2, 0.0, 1.0));
    picked.push_back(std::move(chosen));

    empty.push_back(best);
    std::sort(empty.rbegin(), empty.rend());
    for (const auto idx : empty) remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  return Orthogonalization{assemble_model(std::move(picked), f), std::move(etas), std::move(order)};
}

Orthogonalization orthogonalize_greedy(const ConceptModel& model, const ClassifierHead& head, Eigen::Index class_id) {
  if (class_id < 0 || class_id >= head.classes()) throw Error(ErrorCode::InvalidValue, "class id out of range");
  if (head.feature_dim() != model.feature_dim()) throw Error(ErrorCode::DimensionMismatch, "head/model dimension");
  return orthogonalize_greedy(model, head.weight(class_id));
}

}  // namespace mcd
