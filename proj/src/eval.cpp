#include "mcd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mcd/error.hpp"
#include "mcd/geometry.hpp"
#include "mcd/parallel.hpp"

namespace mcd {

ConceptMaskSet hard_assign(const Explanation& e) {
  const auto& maps = e.activation_maps;
  const Eigen::Index h = maps.front().rows(), w = maps.front().cols();
  const auto count = static_cast<Eigen::Index>(maps.size());
  ConceptMaskSet out;
  out.assignment.resize(h, w);
  out.pooled_relevance = Eigen::VectorXd::Zero(count);
  out.sizes = Eigen::VectorXi::Zero(count);
  const double scale = 1.0 / static_cast<double>(h * w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      Eigen::Index best = 0;
      for (Eigen::Index l = 1; l < count; ++l)
        if (maps[l](y, x) > maps[best](y, x)) best = l;
      out.assignment(y, x) = static_cast<int>(best);
      out.pooled_relevance(best) += e.relevance_maps[best](y, x) * scale;
      ++out.sizes(best);
    }
  }
  return out;
}

FlipOrder parse_flip_order(const std::string& name) {
  if (name == "relevance") return FlipOrder::DescRelevance;
  if (name == "random") return FlipOrder::Random;
  throw Error(ErrorCode::ConfigError, "unknown flip order '" + name + "'");
}

Imputation parse_imputation(const std::string& name) {
  if (name == "zero") return Imputation::Zero;
  if (name == "mean") return Imputation::Mean;
  throw Error(ErrorCode::ConfigError, "unknown imputation '" + name + "'");
}

const char* to_string(FlipOrder order) { return order == FlipOrder::DescRelevance ? "relevance" : "random"; }
const char* to_string(Imputation imputation) { return imputation == Imputation::Zero ? "zero" : "mean"; }

Eigen::VectorXd imputation_fill(const FeatureStack& stack, Imputation imputation) {
  if (imputation == Imputation::Zero) return Eigen::VectorXd::Zero(stack.feature_dim());
  return stack.data().colwise().mean().transpose();
}

FlipCurve sdc_curve(const Decomposer& decomposer, const ClassifierHead& head, const FeatureStack& stack,
                    Eigen::Index sample, Eigen::Index class_id, const FlipConfig& config, const Eigen::VectorXd& fill) {
  const Explanation e = decomposer.relevance(head, stack, sample, class_id);
  const ConceptMaskSet masks = hard_assign(e);
  const auto n_concepts = static_cast<int>(decomposer.model().concept_count());

  std::vector<int> order;
  for (int l = 0; l < n_concepts; ++l)
    if (masks.sizes(l) > 0) order.push_back(l);
  if (config.order == FlipOrder::DescRelevance) {
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return masks.pooled_relevance(a) > masks.pooled_relevance(b); });
  } else {
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(sample)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  if (static_cast<int>(order.size()) > config.max_flips) order.resize(static_cast<std::size_t>(std::max(0, config.max_flips)));

  Eigen::MatrixXd rows = stack.sample_rows(sample);
  const Eigen::Index width = masks.assignment.cols();
  const double locations = static_cast<double>(rows.rows());
  const auto evaluate = [&](double fraction, int concept_id) {
    const Eigen::VectorXd logits = head.weights * rows.colwise().mean().transpose() + head.biases;
    Eigen::Index top = 0;
    logits.maxCoeff(&top);
    return FlipPoint{fraction, logits(class_id), top == class_id, concept_id};
  };

  FlipCurve curve;
  curve.order = config.order;
  curve.sample = sample;
  curve.points.push_back(evaluate(0.0, -1));
  Eigen::Index flipped = 0;
  for (const int l : order) {
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      if (masks.assignment(r / width, r % width) == l) {
        rows.row(r) = fill.transpose();
        ++flipped;
      }
    }
    curve.points.push_back(evaluate(static_cast<double>(flipped) / locations, l));
  }
  return curve;
}

std::vector<FlipCurve> sdc_curves(const Decomposer& decomposer, const ClassifierHead& head, const FeatureStack& stack,
                                  Eigen::Index class_id, const FlipConfig& config, int threads) {
  const Eigen::VectorXd fill = imputation_fill(stack, config.imputation);
  std::vector<FlipCurve> curves(static_cast<std::size_t>(stack.sample_count()));
  parallel_for(curves.size(), threads, [&](std::size_t n) {
    curves[n] = sdc_curve(decomposer, head, stack, static_cast<Eigen::Index>(n), class_id, config, fill);
  });
  return curves;
}

double flip_auc(const FlipCurve& curve) {
  const auto& p = curve.points;
  double area = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i)
    area += 0.5 * (p[i].logit + p[i - 1].logit) * (p[i].fraction - p[i - 1].fraction);
  area += p.back().logit * (1.0 - p.back().fraction);
  return area;
}

double sign_test_p(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0) return 1.0;
  // sum_{k >= wins} C(n, k) / 2^n, via log-gamma for stability
  double p = 0.0;
  for (int k = wins; k <= n; ++k)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  return std::min(1.0, p);
}

double mean_pairwise_distance(const ConceptModel& model) {
  const auto& c = model.concepts();
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      sum += grassmann_distance(c[i].vectors, c[j].vectors);
      ++pairs;
    }
  return pairs > 0 ? sum / pairs : std::numeric_limits<double>::quiet_NaN();
}

ModelSequence model_sequence(const FeatureStack& stack, const ClassifierHead& head, Eigen::Index class_id,
                             const DiscoveryConfig& config, std::shared_ptr<const SscSession> session) {
  DiscoveryConfig cfg = config;
  cfg.class_id = class_id;
  switch (cfg.method) {
    case Method::Ssc:
    case Method::SscOrtho: {
      if (!session) session = std::make_shared<const SscSession>(stack, cfg.cluster);
      return [session, &stack, &head, cfg](int n) -> std::optional<ConceptModel> {
        try {
          return build_model(stack, &head, session->assign(n), cfg).model;
        } catch (const Error&) {
          return std::nullopt;
        }
      };
    }
    case Method::KMeans:
      return [&stack, &head, cfg](int n) -> std::optional<ConceptModel> {
        DiscoveryConfig local = cfg;
        local.cluster.n_clusters = n;
        try {
          return build_model(stack, &head, kmeans_cluster(stack, local.cluster), local).model;
        } catch (const Error&) {
          return std::nullopt;
        }
      };
    case Method::Pca: {
      // One decomposition serves every n; directions past the rank are dropped.
      auto pca = std::make_shared<PcaDirections>();
      for (Eigen::Index k = std::min<Eigen::Index>(stack.feature_dim(), stack.size()); k >= 1; --k) {
        try {
          *pca = pca_directions(stack, k, cfg.center);
          break;
        } catch (const Error&) {
        }
      }
      const Eigen::Index f = stack.feature_dim();
      return [pca, f](int n) -> std::optional<ConceptModel> {
        if (n < 1 || static_cast<std::size_t>(n) > pca->bases.size()) return std::nullopt;
        std::vector<ConceptBasis> first(pca->bases.begin(), pca->bases.begin() + n);
        return assemble_model(std::move(first), f);
      };
    }
  }
  throw Error(ErrorCode::ConfigError, "unknown method");
}

ConcisenessRow conciseness_for_class(const ModelSequence& models, const Eigen::VectorXd& weight, double eta_target,
                                     int cap) {
  ConcisenessRow row;
  std::optional<ConceptModel> last;
  for (int n = 1; n <= cap; ++n) {
    auto model = models(n);
    if (!model) break;
    row.eta = completeness_score(*model, weight);
    last = std::move(model);
    if (row.eta >= eta_target) {
      row.n_concepts = n;
      break;
    }
  }
  if (last) {
    double dims = 0.0;
    for (const auto& c : last->concepts()) dims += static_cast<double>(c.dim());
    row.mean_dim = last->concept_count() > 0 ? dims / static_cast<double>(last->concept_count()) : 0.0;
    row.mean_distance = mean_pairwise_distance(*last);
  }
  return row;
}

ConcisenessSummary summarize(const std::vector<ConcisenessRow>& rows) {
  ConcisenessSummary s;
  if (rows.empty()) return s;
  s.method = rows.front().method;
  int reached = 0, with_distance = 0;
  for (const auto& r : rows) {
    if (r.n_concepts) {
      s.mean_n_concepts += *r.n_concepts;
      ++reached;
    } else {
      ++s.unreached;
    }
    s.mean_dim += r.mean_dim;
    if (!std::isnan(r.mean_distance)) {
      s.mean_distance += r.mean_distance;
      ++with_distance;
    }
  }
  s.mean_n_concepts = reached > 0 ? s.mean_n_concepts / reached : std::numeric_limits<double>::quiet_NaN();
  s.mean_dim /= static_cast<double>(rows.size());
  s.mean_distance = with_distance > 0 ? s.mean_distance / with_distance : std::numeric_limits<double>::quiet_NaN();
  return s;
}

}  // namespace mcd
