#include "kervolt/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kervolt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqualityRhoFactor = 1e3;
constexpr double kRhoTolFactor = 5.0;  // rescale only past this imbalance

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Per-constraint penalty: equality rows get a stiffer weight.
Eigen::VectorXd build_rho_vec(double rho_bar, const Eigen::VectorXd& l,
                              const Eigen::VectorXd& u) {
  Eigen::VectorXd rho(l.size());
  for (Eigen::Index i = 0; i < l.size(); ++i)
    rho[i] = (std::isfinite(l[i]) && l[i] == u[i]) ? kEqualityRhoFactor * rho_bar
                                                   : rho_bar;
  return rho;
}

struct Workspace {
  Eigen::MatrixXd P;  // symmetrized
  Eigen::LDLT<Eigen::MatrixXd> factor;
  Eigen::VectorXd rho_vec;
  bool factorize(const QpProblem& prob, double sigma) {
    const Eigen::Index d = prob.P.rows();
    Eigen::MatrixXd M = P + sigma * Eigen::MatrixXd::Identity(d, d);
    if (prob.A.rows() > 0)
      M.noalias() += prob.A.transpose() * rho_vec.asDiagonal() * prob.A;
    factor.compute(M);
    return factor.info() == Eigen::Success;
  }
};

// Equality-constrained KKT solve on the detected active set, with light
// regularization and one refinement pass against the unregularized system.
// The candidate is accepted only if it improves the residuals, keeps the
// multiplier signs dual-feasible, and does not worsen the objective; a wrong
// active-set guess fails one of these and leaves the iterate untouched.
bool try_polish(const QpProblem& prob, const Workspace& ws,
                const Eigen::VectorXd& y, QpSolution& sol,
                const SolverSettings& settings) {
  const Eigen::Index d = prob.P.rows();
  const Eigen::Index m = prob.A.rows();
  std::vector<Eigen::Index> active;
  std::vector<bool> at_lower;
  Eigen::VectorXd b_act_values(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (y[i] < 0.0 && std::isfinite(prob.l[i])) {
      b_act_values[active.size()] = prob.l[i];
      active.push_back(i);
      at_lower.push_back(true);
    } else if (y[i] > 0.0 && std::isfinite(prob.u[i])) {
      b_act_values[active.size()] = prob.u[i];
      active.push_back(i);
      at_lower.push_back(false);
    }
  }
  const Eigen::Index k = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(d + k, d + k);
  kkt.topLeftCorner(d, d) = ws.P;
  for (Eigen::Index j = 0; j < k; ++j) {
    kkt.block(0, d + j, d, 1) = prob.A.row(active[j]).transpose();
    kkt.block(d + j, 0, 1, d) = prob.A.row(active[j]);
  }
  const double delta = 1e-9;
  Eigen::MatrixXd kkt_reg = kkt;
  kkt_reg.topLeftCorner(d, d) += delta * Eigen::MatrixXd::Identity(d, d);
  kkt_reg.bottomRightCorner(k, k) -= delta * Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd rhs(d + k);
  rhs.head(d) = -prob.c;
  rhs.tail(k) = b_act_values.head(k);

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt_reg);
  Eigen::VectorXd sol_vec = lu.solve(rhs);
  for (int refine = 0; refine < 2; ++refine)
    sol_vec += lu.solve(rhs - kkt * sol_vec);
  if (!sol_vec.allFinite()) return false;

  const Eigen::VectorXd x_pol = sol_vec.head(d);
  Eigen::VectorXd y_pol = Eigen::VectorXd::Zero(m);
  for (Eigen::Index j = 0; j < k; ++j) y_pol[active[j]] = sol_vec[d + j];

  const double sign_tol = 1e-10 * std::max(1.0, inf_norm(y_pol));
  for (Eigen::Index j = 0; j < k; ++j) {
    if (at_lower[j] && y_pol[active[j]] > sign_tol) return false;
    if (!at_lower[j] && y_pol[active[j]] < -sign_tol) return false;
  }
  const double obj_now = 0.5 * sol.x.dot(ws.P * sol.x) + prob.c.dot(sol.x);
  const double obj_pol = 0.5 * x_pol.dot(ws.P * x_pol) + prob.c.dot(x_pol);
  if (obj_pol > obj_now + 1e-9 * (1.0 + std::abs(obj_now))) return false;

  const Eigen::VectorXd ax = prob.A * x_pol;
  double prim = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    prim = std::max({prim, prob.l[i] - ax[i], ax[i] - prob.u[i]});
  prim = std::max(prim, 0.0);
  const double dual =
      inf_norm(ws.P * x_pol + prob.c + prob.A.transpose() * y_pol);
  if (std::max(prim, dual) <
      std::max(sol.primal_residual, sol.dual_residual)) {
    sol.x = x_pol;
    sol.primal_residual = prim;
    sol.dual_residual = dual;
    sol.polished = true;
    const double eps = settings.eps_abs;
    if (prim <= eps + settings.eps_rel * inf_norm(ax) &&
        dual <= eps + settings.eps_rel *
                          std::max({inf_norm(ws.P * x_pol),
                                    inf_norm(prob.A.transpose() * y_pol),
                                    inf_norm(prob.c)}))
      sol.status = QpStatus::Solved;
    return true;
  }
  return false;
}

}  // namespace

void QpProblem::validate() const {
  const Eigen::Index d = P.rows();
  if (P.cols() != d) throw std::invalid_argument("P must be square");
  if (c.size() != d) throw std::invalid_argument("c dimension mismatch");
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("P must be symmetric");
  if (A.rows() != l.size() || A.rows() != u.size())
    throw std::invalid_argument("bound dimension mismatch");
  if (A.rows() > 0 && A.cols() != d)
    throw std::invalid_argument("A column count must match P");
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    if (std::isnan(l[i]) || std::isnan(u[i]))
      throw std::invalid_argument("bounds must not be NaN");
    if (l[i] > u[i]) throw std::invalid_argument("bounds must satisfy l <= u");
  }
}

void SolverSettings::validate() const {
  if (rho <= 0.0) throw std::invalid_argument("rho must be positive");
  if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
  if (alpha <= 0.0 || alpha >= 2.0)
    throw std::invalid_argument("alpha must lie in (0, 2)");
  if (eps_abs <= 0.0 || eps_rel <= 0.0)
    throw std::invalid_argument("tolerances must be positive");
  if (max_iter <= 0) throw std::invalid_argument("max_iter must be positive");
  if (check_interval <= 0 || rho_update_interval <= 0)
    throw std::invalid_argument("intervals must be positive");
}

QpSolution solve(const QpProblem& problem_in, const SolverSettings& settings) {
  problem_in.validate();
  settings.validate();
  QpProblem normalized;
  const bool fix_empty_a =
      problem_in.A.rows() == 0 && problem_in.A.cols() != problem_in.P.rows();
  if (fix_empty_a) {
    normalized = problem_in;
    normalized.A.resize(0, problem_in.P.rows());
  }
  const QpProblem& problem = fix_empty_a ? normalized : problem_in;
  const Eigen::Index d = problem.P.rows();
  const Eigen::Index m = problem.A.rows();

  Workspace ws;
  ws.P = 0.5 * (problem.P + problem.P.transpose());
  double rho_bar = settings.rho;
  ws.rho_vec = build_rho_vec(rho_bar, problem.l, problem.u);

  QpSolution sol;
  sol.x = Eigen::VectorXd::Zero(d);
  if (!ws.factorize(problem, settings.sigma)) {
    sol.status = QpStatus::NumericalFailure;
    return sol;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m).cwiseMax(problem.l).cwiseMin(problem.u);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  const auto objective_at = [&](const Eigen::VectorXd& v) {
    return 0.5 * v.dot(ws.P * v) + problem.c.dot(v);
  };

  int iter = 0;
  bool solved = false;
  double prim_res = kInf, dual_res = kInf;
  while (iter < settings.max_iter) {
    ++iter;
    // x-update through the condensed SPD system, then relaxed z/y updates.
    Eigen::VectorXd rhs = settings.sigma * x - problem.c;
    if (m > 0)
      rhs.noalias() +=
          problem.A.transpose() * (ws.rho_vec.cwiseProduct(z) - y);
    const Eigen::VectorXd x_tilde = ws.factor.solve(rhs);
    const Eigen::VectorXd z_tilde = problem.A * x_tilde;
    const Eigen::VectorXd x_next =
        settings.alpha * x_tilde + (1.0 - settings.alpha) * x;
    const Eigen::VectorXd z_relaxed =
        settings.alpha * z_tilde + (1.0 - settings.alpha) * z;
    const Eigen::VectorXd z_next =
        (z_relaxed + y.cwiseQuotient(ws.rho_vec))
            .cwiseMax(problem.l)
            .cwiseMin(problem.u);
    y += ws.rho_vec.cwiseProduct(z_relaxed - z_next);
    x = x_next;
    z = z_next;

    if (!x.allFinite() || !y.allFinite()) {
      sol.x = x;
      sol.status = QpStatus::NumericalFailure;
      sol.iterations = iter;
      return sol;
    }

    if (iter % 100 == 0) sol.objective_trace.push_back(objective_at(x));

    const bool check_now =
        iter % settings.check_interval == 0 || iter == settings.max_iter;
    if (!check_now) continue;

    const Eigen::VectorXd ax = problem.A * x;
    const Eigen::VectorXd px = ws.P * x;
    const Eigen::VectorXd aty = problem.A.transpose() * y;
    prim_res = inf_norm(ax - z);
    dual_res = inf_norm(px + problem.c + aty);
    const double prim_scale = std::max(inf_norm(ax), inf_norm(z));
    const double dual_scale =
        std::max({inf_norm(px), inf_norm(aty), inf_norm(problem.c)});
    const double eps_prim = settings.eps_abs + settings.eps_rel * prim_scale;
    const double eps_dual = settings.eps_abs + settings.eps_rel * dual_scale;
    if (prim_res <= eps_prim && dual_res <= eps_dual) {
      solved = true;
      break;
    }

    if (settings.adaptive_rho && m > 0 &&
        iter % settings.rho_update_interval == 0) {
      const double prim_rel = prim_res / std::max(prim_scale, 1e-12);
      const double dual_rel = dual_res / std::max(dual_scale, 1e-12);
      const double scale =
          std::sqrt(std::max(prim_rel, 1e-16) / std::max(dual_rel, 1e-16));
      const double rho_new =
          std::clamp(rho_bar * scale, kRhoMin, kRhoMax);
      if (rho_new > rho_bar * kRhoTolFactor ||
          rho_new < rho_bar / kRhoTolFactor) {
        rho_bar = rho_new;
        ws.rho_vec = build_rho_vec(rho_bar, problem.l, problem.u);
        if (!ws.factorize(problem, settings.sigma)) {
          sol.status = QpStatus::NumericalFailure;
          sol.iterations = iter;
          return sol;
        }
        sol.rho_updates.push_back(iter);
      }
    }
  }

  sol.x = x;
  sol.iterations = iter;
  sol.primal_residual = prim_res;
  sol.dual_residual = dual_res;
  sol.status = solved ? QpStatus::Solved : QpStatus::MaxIter;
  if (settings.polish && m > 0) try_polish(problem, ws, y, sol, settings);
  sol.objective = objective_at(sol.x);
  return sol;
}

QpSolution solve_box(const Eigen::MatrixXd& P, const Eigen::VectorXd& c,
                     const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                     const SolverSettings& settings) {
  QpProblem problem;
  problem.P = P;
  problem.c = c;
  problem.A = Eigen::MatrixXd::Identity(P.rows(), P.rows());
  problem.l = lb;
  problem.u = ub;
  return solve(problem, settings);
}

}  // namespace kervolt
