#pragma once

#include <vector>

#include <Eigen/Dense>

namespace mcd {

struct ElasticNetOptions {
  double gamma = 10.0;   // weight of the reconstruction term
  double lambda = 0.9;   // l1 share of the penalty
  double tolerance = 1e-6;  // on the largest coefficient change in a sweep
  int max_sweeps = 500;
  bool record_objective = false;
};

struct ElasticNetSolution {
  Eigen::VectorXd coefficients;
  int sweeps = 0;
  bool converged = false;
  double residual_norm = 0.0;
  std::vector<double> objective_trace;  // after each sweep, when requested
};

/// lambda*|r|_1 + (1-lambda)/2*|r|^2 + gamma/2*|target - D r|^2
double elastic_net_objective(const Eigen::MatrixXd& dictionary, const Eigen::VectorXd& target,
                             const Eigen::VectorXd& r, const ElasticNetOptions& options);

/// Largest violation of the optimality conditions at r (0 at the exact minimizer).
double elastic_net_kkt_residual(const Eigen::MatrixXd& dictionary, const Eigen::VectorXd& target,
                                const Eigen::VectorXd& r, Eigen::Index excluded, const ElasticNetOptions& options);

/// Cyclic coordinate descent over an active set. Coordinates outside the
/// active set are checked against the optimality condition after the active
/// set converges; violators are added and the sweep repeats. Coefficient
/// `excluded` (pass -1 for none) is held at zero.
ElasticNetSolution solve_elastic_net(const Eigen::MatrixXd& dictionary, const Eigen::VectorXd& target,
                                     Eigen::Index excluded, const ElasticNetOptions& options);

}  // namespace mcd
