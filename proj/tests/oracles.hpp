#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's solvers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// Orthonormal basis of span(m) by modified Gram-Schmidt (full column rank assumed).
inline Eigen::MatrixXd gram_schmidt(Eigen::MatrixXd m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index k = 0; k < j; ++k) m.col(j) -= m.col(k).dot(m.col(j)) * m.col(k);
    m.col(j).normalize();
  }
  return m;
}

/// Exact minimizer of lambda|r|_1 + (1-lambda)/2 |r|^2 + gamma/2 |t - D r|^2
/// with r(excluded) = 0, by enumerating every sign pattern in {-,0,+}^n and
/// keeping the sign-consistent stationary point of lowest objective.
inline Eigen::VectorXd elastic_net_bruteforce(const Eigen::MatrixXd& d, const Eigen::VectorXd& t,
                                              Eigen::Index excluded, double gamma, double lambda) {
  const Eigen::Index n = d.cols();
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < n; ++i)
    if (i != excluded) free.push_back(i);
  const auto m = free.size();
  const Eigen::MatrixXd gram = d.transpose() * d;
  const Eigen::VectorXd corr = d.transpose() * t;

  const auto objective = [&](const Eigen::VectorXd& r) {
    return lambda * r.lpNorm<1>() + 0.5 * (1 - lambda) * r.squaredNorm() + 0.5 * gamma * (t - d * r).squaredNorm();
  };

  Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
  double best_value = objective(best);
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < m; ++i) total *= 3;
  for (std::uint64_t code = 1; code < total; ++code) {
    std::uint64_t c = code;
    std::vector<Eigen::Index> support;
    std::vector<int> s;
    for (std::size_t i = 0; i < m; ++i) {
      const int digit = static_cast<int>(c % 3);
      c /= 3;
      if (digit != 0) {
        support.push_back(free[i]);
        s.push_back(digit == 1 ? 1 : -1);
      }
    }
    const auto k = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd a(k, k);
    Eigen::VectorXd b(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) a(i, j) = gamma * gram(support[i], support[j]);
      a(i, i) += 1 - lambda;
      b(i) = gamma * corr(support[i]) - lambda * s[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd x = a.ldlt().solve(b);
    bool consistent = true;
    for (Eigen::Index i = 0; i < k && consistent; ++i) consistent = x(i) * s[static_cast<std::size_t>(i)] > 0;
    if (!consistent) continue;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < k; ++i) r(support[i]) = x(i);
    const double value = objective(r);
    if (value < best_value) {
      best_value = value;
      best = r;
    }
  }
  return best;
}

/// Coefficients of phi in the columns of an invertible square basis.
inline Eigen::VectorXd dense_solve(const Eigen::MatrixXd& basis, const Eigen::VectorXd& phi) {
  return basis.fullPivLu().solve(phi);
}

/// Principal-angle cosines from the eigenvalues of B^T A A^T B (no SVD).
inline Eigen::VectorXd principal_cosines(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd small = a.cols() <= b.cols() ? a : b;
  const Eigen::MatrixXd large = a.cols() <= b.cols() ? b : a;
  const Eigen::MatrixXd p = small.transpose() * large * large.transpose() * small;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);
  Eigen::VectorXd c = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().cwiseMin(1.0);
  return c.reverse();
}

/// Misclassification rate minimized over all label permutations (k <= 7).
inline double permutation_error(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
  std::vector<int> perm(k);
  for (int i = 0; i < k; ++i) perm[i] = i;
  std::size_t total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] >= 0 && truth[i] >= 0) ++total;
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] >= 0 && truth[i] >= 0 && perm[pred[i]] == truth[i]) ++hit;
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total == 0 ? 0.0 : 1.0 - static_cast<double>(best) / static_cast<double>(total);
}

/// P(X >= k) for X ~ Binomial(n, 1/2) by exact integer counting.
inline double binomial_tail(int k, int n) {
  double count = 0.0, c = 1.0;  // C(n, 0)
  for (int i = 0; i <= n; ++i) {
    if (i >= k) count += c;
    c = c * (n - i) / (i + 1);
  }
  return count / std::pow(2.0, n);
}

}  // namespace oracle
