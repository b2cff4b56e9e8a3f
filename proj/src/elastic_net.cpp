#include "mcd/elastic_net.hpp"

#include <algorithm>
#include <cmath>

#include "mcd/error.hpp"

namespace mcd {
namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Exact stationary point on the support and sign pattern of r. Replaces r
// when it keeps every sign, satisfies the off-support conditions and does not
// raise the objective; coordinate descent only reaches it linearly.
void polish(const Eigen::MatrixXd& d, const Eigen::VectorXd& target, Eigen::VectorXd& r, Eigen::Index excluded,
            const ElasticNetOptions& o) {
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    if (r(i) != 0.0) support.push_back(i);
  if (support.empty()) return;
  const auto k = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd sub(d.rows(), k);
  Eigen::VectorXd sign(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    sub.col(j) = d.col(support[static_cast<std::size_t>(j)]);
    sign(j) = r(support[static_cast<std::size_t>(j)]) > 0 ? 1.0 : -1.0;
  }
  Eigen::MatrixXd system = o.gamma * sub.transpose() * sub;
  system.diagonal().array() += 1.0 - o.lambda;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
  if (ldlt.info() != Eigen::Success) return;
  const Eigen::VectorXd x = ldlt.solve(o.gamma * sub.transpose() * target - o.lambda * sign);
  if (((x.array() * sign.array()) <= 0.0).any()) return;
  Eigen::VectorXd candidate = Eigen::VectorXd::Zero(r.size());
  for (Eigen::Index j = 0; j < k; ++j) candidate(support[static_cast<std::size_t>(j)]) = x(j);
  const Eigen::VectorXd corr = d.transpose() * (target - d * candidate);
  for (Eigen::Index i = 0; i < r.size(); ++i)
    if (i != excluded && candidate(i) == 0.0 && o.gamma * std::abs(corr(i)) > o.lambda * (1.0 + 1e-9)) return;
  // Near the optimum both objectives agree to rounding, so compare with slack.
  const double current = elastic_net_objective(d, target, r, o);
  if (elastic_net_objective(d, target, candidate, o) <= current + 1e-12 * (1.0 + current)) r = candidate;
}

}  // namespace

double elastic_net_objective(const Eigen::MatrixXd& dictionary, const Eigen::VectorXd& target,
                             const Eigen::VectorXd& r, const ElasticNetOptions& o) {
  return o.lambda * r.lpNorm<1>() + 0.5 * (1.0 - o.lambda) * r.squaredNorm() +
         0.5 * o.gamma * (target - dictionary * r).squaredNorm();
}

double elastic_net_kkt_residual(const Eigen::MatrixXd& dictionary, const Eigen::VectorXd& target,
                                const Eigen::VectorXd& r, Eigen::Index excluded, const ElasticNetOptions& o) {
  const Eigen::VectorXd grad = o.gamma * (dictionary.transpose() * (target - dictionary * r)) - (1.0 - o.lambda) * r;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (i == excluded) continue;
    const double v = r(i) != 0.0 ? std::abs(grad(i) - o.lambda * (r(i) > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(grad(i)) - o.lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

ElasticNetSolution solve_elastic_net(const Eigen::MatrixXd& dictionary, const Eigen::VectorXd& target,
                                     Eigen::Index excluded, const ElasticNetOptions& o) {
  if (!(o.gamma > 0.0)) throw Error(ErrorCode::ConfigError, "gamma must be positive");
  if (!(o.lambda > 0.0 && o.lambda <= 1.0)) throw Error(ErrorCode::ConfigError, "lambda must lie in (0, 1]");
  const Eigen::Index n = dictionary.cols();
  const Eigen::VectorXd col_norm2 = dictionary.colwise().squaredNorm().transpose();

  ElasticNetSolution sol;
  sol.coefficients = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd& r = sol.coefficients;
  Eigen::VectorXd residual = target;
  std::vector<Eigen::Index> active;
  std::vector<char> in_active(static_cast<std::size_t>(n), 0);
  const double kkt_slack = 1e-12;

  while (true) {
    // Optimality check for coordinates outside the active set.
    const Eigen::VectorXd corr = dictionary.transpose() * residual;
    bool added = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == excluded || in_active[static_cast<std::size_t>(i)] || col_norm2(i) == 0.0) continue;
      if (o.gamma * std::abs(corr(i)) > o.lambda * (1.0 + kkt_slack)) {
        active.push_back(i);
        in_active[static_cast<std::size_t>(i)] = 1;
        added = true;
      }
    }
    if (!added && sol.converged) break;
    if (sol.sweeps >= o.max_sweeps) break;
    std::sort(active.begin(), active.end());

    sol.converged = false;
    while (sol.sweeps < o.max_sweeps) {
      double max_change = 0.0;
      for (const Eigen::Index i : active) {
        const double old = r(i);
        const double rho = o.gamma * (dictionary.col(i).dot(residual) + col_norm2(i) * old);
        const double updated = soft_threshold(rho, o.lambda) / (o.gamma * col_norm2(i) + (1.0 - o.lambda));
        const double delta = updated - old;
        if (delta != 0.0) {
          residual.noalias() -= delta * dictionary.col(i);
          r(i) = updated;
          max_change = std::max(max_change, std::abs(delta));
        }
      }
      ++sol.sweeps;
      if (o.record_objective) sol.objective_trace.push_back(elastic_net_objective(dictionary, target, r, o));
      if (max_change < o.tolerance) {
        sol.converged = true;
        break;
      }
    }
    // Shrink: drop coordinates that settled at zero; the next check re-adds violators.
    std::vector<Eigen::Index> kept;
    for (const Eigen::Index i : active) {
      if (r(i) != 0.0) {
        kept.push_back(i);
      } else {
        in_active[static_cast<std::size_t>(i)] = 0;
      }
    }
    active = std::move(kept);
  }
  if (sol.converged) polish(dictionary, target, r, excluded, o);
  sol.residual_norm = (target - dictionary * r).norm();
  return sol;
}

}  // namespace mcd
