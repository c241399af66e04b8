#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace kervolt {

struct Line {
  int from = 0;
  int to = 0;
  double r_pu = 0.0;
  double x_pu = 0.0;
};

// Radial feeder rooted at bus 0 (the substation). Buses are numbered 0..N
// contiguously; the N lines must form a tree. Immutable after construction.
class FeederTopology {
 public:
  FeederTopology(int num_buses, std::vector<Line> lines, double v0,
                 Eigen::VectorXd inverter_ratings);

  int num_buses() const { return num_buses_; }           // N + 1
  int num_load_buses() const { return num_buses_ - 1; }  // N
  double v0() const { return v0_; }
  const std::vector<Line>& lines() const { return lines_; }

  // Apparent-power rating s̄_n, indexed by load bus (bus n -> entry n-1).
  // A zero rating means no inverter at that bus.
  const Eigen::VectorXd& inverter_ratings() const { return s_rating_; }
  double rating(int bus) const;
  std::vector<int> inverter_buses() const;

  int parent(int bus) const { return parent_[bus]; }
  int parent_line(int bus) const { return parent_line_[bus]; }
  // Child endpoint of line l under the root-at-0 orientation.
  int line_child(int line_index) const { return line_child_[line_index]; }
  // Buses strictly below line l (the child endpoint and its descendants).
  const std::vector<int>& line_subtree(int line_index) const;
  // Undirected lookup; throws on an unknown pair.
  int line_index(int from, int to) const;

 private:
  int num_buses_;
  std::vector<Line> lines_;
  double v0_;
  Eigen::VectorXd s_rating_;
  std::vector<int> parent_;
  std::vector<int> parent_line_;
  std::vector<int> line_child_;
  std::vector<std::vector<int>> line_subtree_;
};

// Loads `lines.csv` (header from,to,r_pu,x_pu) and `buses.csv` (header
// bus,s_rating_pu; substation row optional and ignored).
FeederTopology load_feeder(const std::string& lines_csv,
                           const std::string& buses_csv, double v0 = 1.0);

// LDF voltage sensitivities: entry (m,n) is the sum of line resistances
// (reactances) over the intersection of the root paths of buses m and n.
struct Sensitivities {
  Eigen::MatrixXd R;  // N x N, p.u.
  Eigen::MatrixXd X;  // N x N, p.u.
};

// One snapshot of nodal injections, indexed by load bus (entry n-1 for bus n).
struct GridState {
  Eigen::VectorXd p_g;  // solar generation, >= 0
  Eigen::VectorXd p_c;  // active load, >= 0
  Eigen::VectorXd q_c;  // reactive load
  Eigen::VectorXd q_g;  // inverter reactive injections
};

// Lemma-style completed-square form of the scalarized cost: the unique
// symmetric PD square root C of (1-lambda) R + lambda X^2 and its inverse.
struct CostTransform {
  double lambda = 0.5;
  Eigen::MatrixXd C;
  Eigen::MatrixXd C_inv;
};

Sensitivities build_sensitivities(const FeederTopology& topo);

// v = R (p_g - p_c) + X (q_g - q_c) + v0 * 1
Eigen::VectorXd voltage_profile(const GridState& state, const Sensitivities& sens,
                                double v0);

// lambda * ||R p + X q||^2 + (1 - lambda) * q' R q
double evaluate_cost(const GridState& state, const Sensitivities& sens,
                     double lambda);

CostTransform build_cost_transform(const Sensitivities& sens, double lambda);

// y = C^{-1} [ -(1-lambda) R q_c + lambda X R (p_g - p_c) - lambda X^2 q_c ]
Eigen::VectorXd compute_y(const Eigen::VectorXd& p_g, const Eigen::VectorXd& p_c,
                          const Eigen::VectorXd& q_c, const CostTransform& ct,
                          const Sensitivities& sens);

// Lossless active flow per requested line, positive from parent to child:
// flow(l) = -sum over buses below l of (p_g - p_c).
Eigen::VectorXd line_flow_features(const GridState& state,
                                   const FeederTopology& topo,
                                   const std::vector<int>& line_indices);

// Symmetric PD square root via eigendecomposition. Eigenvalues are floored at
// 1e-12 * max; anything below -1e-9 * max signals a non-PSD input and throws.
Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& M,
                         Eigen::MatrixXd* inverse_sqrt = nullptr);

}  // namespace kervolt
