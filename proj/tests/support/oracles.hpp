#pragma once

// Independent reference implementations used as test oracles. These must not
// share code paths with the library routines they check.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "kervolt/feeder.hpp"
#include "kervolt/rng.hpp"

namespace oracles {

// Random tree on n_load+1 buses: bus k attaches to a uniformly random
// earlier bus.
inline kervolt::FeederTopology random_tree(kervolt::Rng& rng, int n_load,
                                           double rating_hi = 0.5) {
  std::vector<kervolt::Line> lines;
  for (int bus = 1; bus <= n_load; ++bus) {
    kervolt::Line line;
    line.from = bus == 1 ? 0 : rng.uniform_int(0, bus - 1);
    line.to = bus;
    line.r_pu = rng.uniform(0.01, 0.5);
    line.x_pu = rng.uniform(0.01, 0.5);
    lines.push_back(line);
  }
  Eigen::VectorXd ratings(n_load);
  for (int i = 0; i < n_load; ++i) ratings[i] = rng.uniform(0.05, rating_hi);
  return kervolt::FeederTopology(n_load + 1, std::move(lines), 1.0,
                                 std::move(ratings));
}

// Brute-force sensitivities: explicit root-path line sets per bus, then a
// per-pair set intersection.
inline kervolt::Sensitivities path_intersection_sensitivities(
    const kervolt::FeederTopology& topo) {
  const int n = topo.num_load_buses();
  std::vector<std::set<int>> paths(n + 1);
  for (int bus = 1; bus <= n; ++bus) {
    int cursor = bus;
    while (cursor != 0) {
      paths[bus].insert(topo.parent_line(cursor));
      cursor = topo.parent(cursor);
    }
  }
  kervolt::Sensitivities sens;
  sens.R = Eigen::MatrixXd::Zero(n, n);
  sens.X = Eigen::MatrixXd::Zero(n, n);
  for (int m = 1; m <= n; ++m)
    for (int k = 1; k <= n; ++k) {
      double r = 0.0, x = 0.0;
      for (int line : paths[m])
        if (paths[k].count(line)) {
          r += topo.lines()[line].r_pu;
          x += topo.lines()[line].x_pu;
        }
      sens.R(m - 1, k - 1) = r;
      sens.X(m - 1, k - 1) = x;
    }
  return sens;
}

// Subtree enumeration from scratch (DFS over child lists) for line flows.
inline double subtree_flow(const kervolt::GridState& state,
                           const kervolt::FeederTopology& topo, int line_index) {
  std::vector<std::vector<int>> children(topo.num_buses());
  for (int bus = 1; bus < topo.num_buses(); ++bus)
    children[topo.parent(bus)].push_back(bus);
  double net = 0.0;
  std::vector<int> stack{topo.line_child(line_index)};
  while (!stack.empty()) {
    const int bus = stack.back();
    stack.pop_back();
    net += state.p_g[bus - 1] - state.p_c[bus - 1];
    for (int child : children[bus]) stack.push_back(child);
  }
  return -net;
}

// Dykstra's alternating projection onto the slab intersection {l <= Ax <= u}.
inline Eigen::VectorXd project_onto_slabs(const Eigen::MatrixXd& a,
                                          const Eigen::VectorXd& l,
                                          const Eigen::VectorXd& u,
                                          const Eigen::VectorXd& point,
                                          int sweeps = 4000) {
  const Eigen::Index m = a.rows();
  if (m == 0) return point;
  Eigen::VectorXd x = point;
  Eigen::MatrixXd corrections = Eigen::MatrixXd::Zero(m, point.size());
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double moved = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::VectorXd x_in = x + corrections.row(i).transpose();
      const Eigen::VectorXd row = a.row(i).transpose();
      const double norm_sq = row.squaredNorm();
      Eigen::VectorXd projected = x_in;
      if (norm_sq > 0.0) {
        const double value = row.dot(x_in);
        double shift = 0.0;
        if (value > u[i]) shift = (u[i] - value) / norm_sq;
        if (value < l[i]) shift = (l[i] - value) / norm_sq;
        projected = x_in + shift * row;
      }
      corrections.row(i) = (x_in - projected).transpose();
      moved += (projected - x).norm();
      x = projected;
    }
    if (moved < 1e-14) break;
  }
  return x;
}

// Projected gradient with a tiny fixed step, run to convergence. Independent
// of the library solver; needs P positive definite.
inline Eigen::VectorXd projected_gradient_qp(const Eigen::MatrixXd& p,
                                             const Eigen::VectorXd& c,
                                             const Eigen::MatrixXd& a,
                                             const Eigen::VectorXd& l,
                                             const Eigen::VectorXd& u,
                                             int max_iter = 200000) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p);
  const double lipschitz = es.eigenvalues().maxCoeff();
  const double step = 0.9 / lipschitz;
  Eigen::VectorXd x = project_onto_slabs(a, l, u, Eigen::VectorXd::Zero(c.size()));
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd gradient = p * x + c;
    const Eigen::VectorXd next =
        project_onto_slabs(a, l, u, x - step * gradient, 600);
    const double moved = (next - x).norm();
    x = next;
    if (moved < 1e-12) break;
  }
  return x;
}

inline double qp_objective(const Eigen::MatrixXd& p, const Eigen::VectorXd& c,
                           const Eigen::VectorXd& x) {
  return 0.5 * x.dot(p * x) + c.dot(x);
}

// Exhaustive 2-D grid search over the dispatch box, endpoints included.
struct GridSearchResult {
  Eigen::Vector2d minimizer;
  double objective = std::numeric_limits<double>::infinity();
  double cell_bound = 0.0;  // worst-case objective gap to the true optimum
};

inline GridSearchResult grid_dispatch_2d(const Eigen::MatrixXd& s,
                                         const Eigen::VectorXd& cy,
                                         const Eigen::VectorXd& qbar,
                                         double step_fraction = 1e-3) {
  GridSearchResult result;
  const int steps0 = static_cast<int>(std::round(2.0 / step_fraction));
  const int steps1 = steps0;
  const double h0 = 2.0 * qbar[0] / steps0;
  const double h1 = 2.0 * qbar[1] / steps1;
  for (int i = 0; i <= steps0; ++i) {
    const double q0 = -qbar[0] + i * h0;
    for (int j = 0; j <= steps1; ++j) {
      const double q1 = -qbar[1] + j * h1;
      Eigen::Vector2d q(q0, q1);
      const double value = q.dot(s * q) + 2.0 * cy.dot(q);
      if (value < result.objective) {
        result.objective = value;
        result.minimizer = q;
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  const double delta_sq = 0.25 * (h0 * h0 + h1 * h1);
  result.cell_bound = es.eigenvalues().maxCoeff() * delta_sq;
  return result;
}

inline Eigen::MatrixXd random_spd(kervolt::Rng& rng, int n, double shift = 0.1) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.normal();
  return m.transpose() * m + shift * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::VectorXd random_vector(kervolt::Rng& rng, int n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

}  // namespace oracles
