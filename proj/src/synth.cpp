#include "mcd/synth.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "mcd/error.hpp"

namespace mcd {

void SynthSpec::validate() const {
  if (feature_dim < 1) throw Error(ErrorCode::ConfigError, "feature_dim must be >= 1");
  const Eigen::Index total = std::accumulate(dims.begin(), dims.end(), Eigen::Index{0});
  if (std::any_of(dims.begin(), dims.end(), [](Eigen::Index d) { return d < 1; }))
    throw Error(ErrorCode::ConfigError, "subspace dimensions must be >= 1");
  if (total > feature_dim)
    throw Error(ErrorCode::Overcomplete, "subspace dimensions sum to " + std::to_string(total) + " > F");
  if (points_per_subspace < 0 || n_outliers < 0 || noise_sigma < 0 || n_classes < 1)
    throw Error(ErrorCode::ConfigError, "synth counts must be non-negative");
  if (layout && (layout->samples < 1 || layout->height < 1 || layout->width < 1))
    throw Error(ErrorCode::ConfigError, "spatial layout must be positive");
  if (dims.empty() && !layout && n_outliers == 0) throw Error(ErrorCode::ConfigError, "empty synthetic problem");
}

SynthProblem generate(const SynthSpec& spec) {
  spec.validate();
  const Eigen::Index f = spec.feature_dim;
  const Eigen::Index k = spec.n_subspaces();

  std::vector<Eigen::MatrixXd> bases;
  for (Eigen::Index l = 0; l < k; ++l) {
    std::seed_seq seq{spec.seed, std::uint64_t{1}, static_cast<std::uint64_t>(l)};
    std::mt19937_64 rng(seq);
    bases.push_back(haar_basis(f, spec.dims[static_cast<std::size_t>(l)], rng));
  }

  // Row labels.
  std::vector<int> labels;
  std::seed_seq layout_seq{spec.seed, std::uint64_t{2}};
  std::mt19937_64 layout_rng(layout_seq);
  if (spec.layout) {
    const auto& g = *spec.layout;
    for (Eigen::Index n = 0; n < g.samples; ++n) {
      const auto shift = k > 0 ? static_cast<Eigen::Index>(layout_rng() % static_cast<std::uint64_t>(k)) : 0;
      for (Eigen::Index y = 0; y < g.height; ++y)
        for (Eigen::Index x = 0; x < g.width; ++x)
          labels.push_back(k > 0 ? static_cast<int>((x * k / g.width + shift) % k) : -1);
    }
    if (spec.n_outliers > static_cast<Eigen::Index>(labels.size()))
      throw Error(ErrorCode::ConfigError, "more outliers than grid locations");
    std::vector<Eigen::Index> rows(labels.size());
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::shuffle(rows.begin(), rows.end(), layout_rng);
    for (Eigen::Index i = 0; i < spec.n_outliers; ++i) labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] = -1;
  } else {
    for (Eigen::Index l = 0; l < k; ++l) labels.insert(labels.end(), static_cast<std::size_t>(spec.points_per_subspace), static_cast<int>(l));
    labels.insert(labels.end(), static_cast<std::size_t>(spec.n_outliers), -1);
  }
  const auto m = static_cast<Eigen::Index>(labels.size());
  if (m < 1) throw Error(ErrorCode::ConfigError, "synthetic problem has no points");

  // Points, one independent stream per subspace; rows are filled in order.
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(m, f);
  std::vector<std::mt19937_64> streams;
  for (Eigen::Index l = 0; l <= k; ++l) {
    std::seed_seq seq{spec.seed, std::uint64_t{3}, static_cast<std::uint64_t>(l)};
    streams.emplace_back(seq);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 0) continue;
    auto& rng = streams[static_cast<std::size_t>(l)];
    Eigen::VectorXd coeffs(bases[static_cast<std::size_t>(l)].cols());
    for (Eigen::Index j = 0; j < coeffs.size(); ++j) coeffs(j) = normal(rng);
    data.row(i) = (bases[static_cast<std::size_t>(l)] * coeffs).transpose();
    if (spec.noise_sigma > 0.0)
      for (Eigen::Index j = 0; j < f; ++j) data(i, j) += spec.noise_sigma * normal(rng);
  }

  // Outliers: isotropic directions scaled to the median inlier norm.
  std::vector<double> norms;
  for (Eigen::Index i = 0; i < m; ++i)
    if (labels[static_cast<std::size_t>(i)] >= 0) norms.push_back(data.row(i).norm());
  double median = 1.0;
  if (!norms.empty()) {
    std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(norms.size() / 2), norms.end());
    median = norms[norms.size() / 2];
  }
  auto& outlier_rng = streams.back();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (labels[static_cast<std::size_t>(i)] >= 0) continue;
    Eigen::VectorXd g(f);
    for (Eigen::Index j = 0; j < f; ++j) g(j) = normal(outlier_rng);
    data.row(i) = (median * g.normalized()).transpose();
  }

  // Head.
  std::seed_seq head_seq{spec.seed, std::uint64_t{4}};
  std::mt19937_64 head_rng(head_seq);
  Eigen::MatrixXd weights(spec.n_classes, f);
  Eigen::VectorXd biases(spec.n_classes);
  for (Eigen::Index c = 0; c < spec.n_classes; ++c) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(f);
    if (spec.head_mode == HeadMode::InSpan && k > 0) {
      for (const auto& b : bases) {
        Eigen::VectorXd a(b.cols());
        for (Eigen::Index j = 0; j < a.size(); ++j) a(j) = normal(head_rng);
        w += b * a;
      }
    } else {
      for (Eigen::Index j = 0; j < f; ++j) w(j) = normal(head_rng);
    }
    weights.row(c) = w.transpose();
    biases(c) = 0.1 * normal(head_rng);
  }

  std::optional<SpatialLayout> layout = spec.layout;
  return SynthProblem{FeatureStack(std::move(data), layout), std::move(labels), std::move(bases),
                      ClassifierHead(std::move(weights), std::move(biases))};
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  // Potentials formulation, 1-based internally.
  const auto n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double clustering_error(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw Error(ErrorCode::DimensionMismatch, "label vectors differ in length");
  int kp = 0, kt = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] < 0 || truth[i] < 0) continue;
    kp = std::max(kp, predicted[i] + 1);
    kt = std::max(kt, truth[i] + 1);
    ++total;
  }
  if (total == 0) return 0.0;
  const int size = std::max(kp, kt);
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(size, size);
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] >= 0 && truth[i] >= 0) overlap(predicted[i], truth[i]) += 1.0;
  const auto match = hungarian(-overlap);
  double matched = 0.0;
  for (int r = 0; r < size; ++r) matched += overlap(r, match[static_cast<std::size_t>(r)]);
  return 1.0 - matched / static_cast<double>(total);
}

}  // namespace mcd
