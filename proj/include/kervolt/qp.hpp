#pragma once

#include <Eigen/Dense>
#include <vector>

namespace kervolt {

// min ½ x'Px + c'x  subject to  l <= Ax <= u, with ±inf bounds allowed.
struct QpProblem {
  Eigen::MatrixXd P;  // d x d symmetric PSD
  Eigen::VectorXd c;
  Eigen::MatrixXd A;  // m x d
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  void validate() const;
};

enum class QpStatus { Solved, MaxIter, NumericalFailure };

struct QpSolution {
  Eigen::VectorXd x;
  QpStatus status = QpStatus::NumericalFailure;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  double objective = 0.0;
  bool polished = false;
  // Diagnostics: objective sampled every 100 iterations, and the iterations
  // at which the penalty was rescaled.
  std::vector<double> objective_trace;
  std::vector<int> rho_updates;
};

struct SolverSettings {
  double rho = 0.1;       // constraint penalty
  double sigma = 1e-6;    // primal regularization
  double alpha = 1.6;     // over-relaxation, in (0, 2)
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  int max_iter = 100000;
  bool polish = true;
  bool adaptive_rho = true;
  int check_interval = 25;      // residual check cadence
  int rho_update_interval = 100;  // penalty rescale cadence

  void validate() const;
};

QpSolution solve(const QpProblem& problem, const SolverSettings& settings = {});

// Box-constrained convenience form: A is the identity.
QpSolution solve_box(const Eigen::MatrixXd& P, const Eigen::VectorXd& c,
                     const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                     const SolverSettings& settings = {});

}  // namespace kervolt
