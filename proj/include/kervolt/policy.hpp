#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "kervolt/feeder.hpp"
#include "kervolt/kernels.hpp"
#include "kervolt/qp.hpp"
#include "kervolt/scenario.hpp"

namespace kervolt {

// Per-scenario optimal reactive dispatch: minimize ||C q + y||² over the box
// [-q_bar, q_bar]. q_bar covers all load buses; zero entries pin q to zero.
Eigen::VectorXd optimal_dispatch(const CostTransform& ct,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& q_bar,
                                 const SolverSettings& solver = {});

// Trained control rule for one inverter, in representer form:
// q(z) = sum_t K(z, z_t) a_t + b over the stored training inputs.
struct InverterPolicy {
  int bus = 0;
  KernelSpec kernel;
  Eigen::MatrixXd training_inputs;  // T x M, standardized when standardizer set
  Eigen::VectorXd a;
  double b = 0.0;
  std::optional<FeatureStandardizer> standardizer;

  double evaluate(const Eigen::VectorXd& z_raw) const;
};

double evaluate_policy(const InverterPolicy& policy, const Eigen::VectorXd& z_raw);

// Clamp into [-q_bar, q_bar].
double project_to_limits(double q, double q_bar);

struct PolicySet {
  std::vector<InverterPolicy> policies;  // ascending bus id
  double lambda = 0.5;
  double mu = 0.0;
  FeatureSelector selector;
  int window_start_min = 0;
  int window_end_min = 0;
  double training_objective = 0.0;  // (1/T)||CQ+Y||_F² + mu Σ a'Ka at solution
  double fit_term = 0.0;            // (1/T)||CQ+Y||_F² alone

  const InverterPolicy& policy_for(int bus) const;
};

// Assembled data of the joint training program: the fit matrices, one Gram
// matrix per inverter, and per-scenario reactive limits.
struct TrainingProblem {
  Eigen::MatrixXd C;               // N x N cost transform
  Eigen::MatrixXd Y;               // N x T, column t = y_t
  std::vector<int> buses;          // inverter buses, ascending
  std::vector<Eigen::MatrixXd> K;  // per inverter, T x T (jitter included)
  Eigen::MatrixXd qbar;            // T x |buses|
  double mu = 0.0;
};

// Decision vector x = [a_1; b_1; ...; a_N; b_N]. With E_n := [K_n 1] the
// scenario injections of inverter n are E_n x_n, so the QP blocks are
//   P(n,n') = (2/T) (C²)_{b_n b_n'} E_n' E_n'   and   2 mu blockdiag(K_n, 0),
//   c(n)    = (2/T) E_n' (C Y)_{row b_n},
// with box rows  -q̄_n <= E_n x_n <= q̄_n  stacked blockdiagonally.
QpProblem assemble_training_qp(const TrainingProblem& tp);

// The q-independent constant dropped from the QP objective: (1/T)||Y||_F².
double training_constant(const TrainingProblem& tp);

struct KernelChoice {
  KernelSpec spec;
  // Gaussian only: treat spec.gamma as a multiplier of the per-inverter
  // median pairwise squared distance of the (standardized) training inputs.
  bool gamma_is_multiplier = false;
};

struct TrainOptions {
  bool allow_zero_mu = false;  // test hook; production training needs mu > 0
  double gram_jitter = 1e-8;
  SolverSettings solver;
};

PolicySet train_policies(const ScenarioWindow& window, const FeederTopology& topo,
                         const Sensitivities& sens, const CostTransform& ct,
                         const FeatureSelector& selector,
                         const KernelChoice& kernel, double mu,
                         const TrainOptions& options = {});

// Versioned JSON policy file; round trips reproduce coefficients bit-exactly.
void save_policies(const PolicySet& set, const std::string& path);
PolicySet load_policies(const std::string& path);

}  // namespace kervolt
