#include "mcd/decomposer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcd/error.hpp"

namespace mcd {
namespace {

struct Grid {
  Eigen::Index height = 1;
  Eigen::Index width = 1;
};

Grid grid_of(const FeatureStack& stack) {
  if (const auto& l = stack.layout()) return {l->height, l->width};
  return {};
}

void check_sample(const FeatureStack& stack, Eigen::Index sample) {
  if (sample < 0 || sample >= stack.sample_count())
    throw Error(ErrorCode::InvalidValue, "sample index " + std::to_string(sample) + " out of range");
}

// Row r of a per-sample block maps to (y, x) = (r / W, r % W).
Eigen::MatrixXd to_grid(const Eigen::VectorXd& values, const Grid& g) {
  Eigen::MatrixXd out(g.height, g.width);
  for (Eigen::Index r = 0; r < values.size(); ++r) out(r / g.width, r % g.width) = values(r);
  return out;
}

}  // namespace

Eigen::VectorXd Decomposition::reconstruct() const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(parts.empty() ? 0 : parts.front().size());
  for (const auto& p : parts) sum += p;
  return sum;
}

MapStack Explanation::cam_contributions() const {
  MapStack out = relevance_maps;
  for (auto& m : out) m /= static_cast<double>(m.size());
  return out;
}

Eigen::MatrixXd Explanation::class_activation_map() const {
  const MapStack parts = cam_contributions();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(parts.front().rows(), parts.front().cols());
  for (const auto& m : parts) sum += m;
  return sum;
}

Decomposer::Decomposer(const ConceptModel& model) : model_(model) {
  if (!(model_.condition_number() <= kMaxCondition))
    throw Error(ErrorCode::IllConditionedBasis,
                "full basis condition number " + std::to_string(model_.condition_number()) + " exceeds 1e12");
  const Eigen::Index d = model_.concept_span_dim();
  concept_block_ = model_.full_basis().leftCols(d);
  if (d > 0) {
    qr_.compute(concept_block_);
    q_thin_ = qr_.householderQ() * Eigen::MatrixXd::Identity(model_.feature_dim(), d);
  } else {
    q_thin_.resize(model_.feature_dim(), 0);
  }
}

Eigen::MatrixXd Decomposer::coefficients(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != model_.feature_dim())
    throw Error(ErrorCode::DimensionMismatch, "vector dimension does not match the concept model");
  const Eigen::Index d = model_.concept_span_dim();
  Eigen::MatrixXd out(rows.rows(), model_.feature_dim());
  if (d > 0) {
    const Eigen::MatrixXd projected = q_thin_.transpose() * rows.transpose();  // d x M
    const auto r = qr_.matrixQR().topLeftCorner(d, d).triangularView<Eigen::Upper>();
    out.leftCols(d) = r.solve(projected).transpose();
  }
  if (model_.complement().dim() > 0)
    out.rightCols(model_.complement().dim()) = rows * model_.complement().vectors;
  return out;
}

Eigen::MatrixXd Decomposer::part_rows(const Eigen::MatrixXd& coeffs, Eigen::Index l) const {
  const Eigen::Index dim = model_.part_dim(l);
  const auto basis = model_.full_basis().middleCols(model_.offset(l), dim);
  return coeffs.middleCols(model_.offset(l), dim) * basis.transpose();
}

Decomposition Decomposer::decompose(const Eigen::VectorXd& phi) const {
  if (!phi.allFinite()) throw Error(ErrorCode::InvalidValue, "feature vector is not finite");
  const Eigen::MatrixXd coeffs = coefficients(phi.transpose());
  Decomposition out;
  for (Eigen::Index l = 0; l <= model_.concept_count(); ++l) {
    out.coefficients.push_back(coeffs.row(0).segment(model_.offset(l), model_.part_dim(l)).transpose());
    out.parts.push_back(part_rows(coeffs, l).row(0).transpose());
  }
  return out;
}

MapStack Decomposer::activation_maps(const FeatureStack& stack, Eigen::Index sample) const {
  check_sample(stack, sample);
  const Grid g = grid_of(stack);
  const Eigen::MatrixXd rows = stack.sample_rows(sample);
  const double peak = rows.rowwise().norm().maxCoeff();
  if (!(peak > 0.0)) throw Error(ErrorCode::ZeroSample, "sample " + std::to_string(sample) + " is all zero");
  const Eigen::MatrixXd coeffs = coefficients(rows);
  MapStack maps;
  for (Eigen::Index l = 0; l <= model_.concept_count(); ++l)
    maps.push_back(to_grid(part_rows(coeffs, l).rowwise().norm() / peak, g));
  return maps;
}

Explanation Decomposer::relevance(const ClassifierHead& head, const FeatureStack& stack, Eigen::Index sample,
                                  Eigen::Index class_id) const {
  check_sample(stack, sample);
  if (class_id < 0 || class_id >= head.classes()) throw Error(ErrorCode::InvalidValue, "class id out of range");
  if (head.feature_dim() != model_.feature_dim()) throw Error(ErrorCode::DimensionMismatch, "head/model dimension");
  const Grid g = grid_of(stack);
  const Eigen::MatrixXd rows = stack.sample_rows(sample);
  const Eigen::VectorXd w = head.weight(class_id);
  const Eigen::MatrixXd coeffs = coefficients(rows);

  Explanation e;
  e.class_id = class_id;
  e.sample = sample;
  e.bias = head.biases(class_id);
  e.logit = rows.colwise().mean().dot(w) + e.bias;
  e.local_relevances.resize(model_.concept_count() + 1);

  const double peak = rows.rowwise().norm().maxCoeff();
  for (Eigen::Index l = 0; l <= model_.concept_count(); ++l) {
    const Eigen::MatrixXd part = part_rows(coeffs, l);
    const Eigen::VectorXd rel = part * w;
    e.relevance_maps.push_back(to_grid(rel, g));
    e.local_relevances(l) = rel.mean();
    const Eigen::VectorXd act = peak > 0.0 ? Eigen::VectorXd(part.rowwise().norm() / peak)
                                           : Eigen::VectorXd::Zero(part.rows());
    e.activation_maps.push_back(to_grid(act, g));
  }
  return e;
}

GlobalRelevance Decomposer::global_relevance(const Eigen::VectorXd& weight) const {
  const double norm2 = weight.squaredNorm();
  if (!(norm2 > 0.0)) throw Error(ErrorCode::ZeroWeight, "weight vector is zero");
  const Decomposition d = decompose(weight);
  GlobalRelevance g;
  g.weight_parts = d.parts;
  g.norms.resize(static_cast<Eigen::Index>(d.parts.size()));
  for (std::size_t l = 0; l < d.parts.size(); ++l) g.norms(static_cast<Eigen::Index>(l)) = d.parts[l].norm();
  g.eta = completeness_score(model_, weight);
  const auto concepts = model_.concept_matrices();
  g.bounds = wsum_bounds(concepts, g.norms);
  const std::vector<Eigen::VectorXd> concept_parts(d.parts.begin(), d.parts.end() - 1);
  g.bound_premises_hold = wsum_premises_hold(concepts, concept_parts);
  return g;
}

GlobalRelevance Decomposer::global_relevance(const ClassifierHead& head, Eigen::Index class_id) const {
  if (class_id < 0 || class_id >= head.classes()) throw Error(ErrorCode::InvalidValue, "class id out of range");
  return global_relevance(head.weight(class_id));
}

std::vector<Prototype> Decomposer::prototypes(const FeatureStack& stack, Eigen::Index concept_id, Eigen::Index k) const {
  if (concept_id < 0 || concept_id > model_.concept_count()) throw Error(ErrorCode::InvalidValue, "concept out of range");
  if (k < 0 || k > stack.sample_count()) throw Error(ErrorCode::InvalidValue, "k exceeds the number of samples");
  std::vector<Prototype> all;
  for (Eigen::Index n = 0; n < stack.sample_count(); ++n) {
    const Eigen::MatrixXd coeffs = coefficients(stack.sample_rows(n));
    const double score = part_rows(coeffs, concept_id).rowwise().norm().maxCoeff();
    all.push_back({n, stack.sample_ids()[static_cast<std::size_t>(n)], score});
  }
  std::stable_sort(all.begin(), all.end(), [](const Prototype& a, const Prototype& b) { return a.score > b.score; });
  all.resize(static_cast<std::size_t>(k));
  return all;
}

double completeness_score(const ConceptModel& model, const Eigen::VectorXd& weight) {
  const double norm2 = weight.squaredNorm();
  if (!(norm2 > 0.0)) throw Error(ErrorCode::ZeroWeight, "weight vector is zero");
  if (weight.size() != model.feature_dim()) throw Error(ErrorCode::DimensionMismatch, "weight dimension");
  const double outside = (model.complement().vectors.transpose() * weight).squaredNorm();
  return std::clamp(1.0 - outside / norm2, 0.0, 1.0);
}

Eigen::MatrixXd upsample(const Eigen::MatrixXd& map, Eigen::Index height, Eigen::Index width) {
  const Eigen::Index h = map.rows(), w = map.cols();
  if (h < 1 || w < 1) throw Error(ErrorCode::InvalidValue, "empty map");
  if (height < h || width < w) throw Error(ErrorCode::Unsupported, "upsample cannot shrink a map");
  const auto source = [](Eigen::Index dst, Eigen::Index in, Eigen::Index out) {
    const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  Eigen::MatrixXd out(height, width);
  for (Eigen::Index y = 0; y < height; ++y) {
    const double sy = source(y, h, height);
    const auto y0 = static_cast<Eigen::Index>(std::floor(sy));
    const Eigen::Index y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (Eigen::Index x = 0; x < width; ++x) {
      const double sx = source(x, w, width);
      const auto x0 = static_cast<Eigen::Index>(std::floor(sx));
      const Eigen::Index x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      out(y, x) = (1 - fy) * ((1 - fx) * map(y0, x0) + fx * map(y0, x1)) +
                  fy * ((1 - fx) * map(y1, x0) + fx * map(y1, x1));
    }
  }
  return out;
}

}  // namespace mcd
