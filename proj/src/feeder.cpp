#include "kervolt/feeder.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>

#include "kervolt/csv.hpp"

namespace kervolt {

namespace {

void check_dims(const GridState& state, int n) {
  if (state.p_g.size() != n || state.p_c.size() != n || state.q_c.size() != n ||
      state.q_g.size() != n)
    throw std::invalid_argument("grid state dimension mismatch");
}

}  // namespace

FeederTopology::FeederTopology(int num_buses, std::vector<Line> lines, double v0,
                               Eigen::VectorXd inverter_ratings)
    : num_buses_(num_buses),
      lines_(std::move(lines)),
      v0_(v0),
      s_rating_(std::move(inverter_ratings)) {
  if (num_buses_ < 2) throw std::invalid_argument("feeder needs at least 2 buses");
  if (static_cast<int>(lines_.size()) != num_buses_ - 1)
    throw std::invalid_argument("a radial feeder with " +
                                std::to_string(num_buses_) + " buses needs " +
                                std::to_string(num_buses_ - 1) + " lines, got " +
                                std::to_string(lines_.size()));
  if (v0_ <= 0.0) throw std::invalid_argument("substation voltage must be positive");
  if (s_rating_.size() != num_buses_ - 1)
    throw std::invalid_argument("inverter rating vector must have one entry per load bus");
  if ((s_rating_.array() < 0.0).any())
    throw std::invalid_argument("inverter ratings must be nonnegative");

  std::vector<std::vector<std::pair<int, int>>> adjacency(num_buses_);
  for (std::size_t l = 0; l < lines_.size(); ++l) {
    const Line& line = lines_[l];
    if (line.from < 0 || line.from >= num_buses_ || line.to < 0 ||
        line.to >= num_buses_ || line.from == line.to)
      throw std::invalid_argument("line " + std::to_string(l) +
                                  " references invalid bus ids");
    if (line.r_pu <= 0.0 || line.x_pu <= 0.0)
      throw std::invalid_argument("line " + std::to_string(l) +
                                  " must have positive impedance");
    adjacency[line.from].push_back({line.to, static_cast<int>(l)});
    adjacency[line.to].push_back({line.from, static_cast<int>(l)});
  }

  parent_.assign(num_buses_, -1);
  parent_line_.assign(num_buses_, -1);
  line_child_.assign(lines_.size(), -1);
  std::vector<bool> visited(num_buses_, false);
  std::queue<int> frontier;
  visited[0] = true;
  frontier.push(0);
  int reached = 1;
  while (!frontier.empty()) {
    const int bus = frontier.front();
    frontier.pop();
    for (const auto& [next, line_idx] : adjacency[bus]) {
      if (visited[next]) {
        if (next != parent_[bus])
          throw std::invalid_argument("feeder graph contains a cycle");
        continue;
      }
      visited[next] = true;
      parent_[next] = bus;
      parent_line_[next] = line_idx;
      line_child_[line_idx] = next;
      ++reached;
      frontier.push(next);
    }
  }
  if (reached != num_buses_)
    throw std::invalid_argument("feeder graph is not connected to the substation");

  // Subtree bus lists per line, via child lists in one downward sweep.
  std::vector<std::vector<int>> children(num_buses_);
  for (int bus = 1; bus < num_buses_; ++bus) children[parent_[bus]].push_back(bus);
  line_subtree_.assign(lines_.size(), {});
  for (std::size_t l = 0; l < lines_.size(); ++l) {
    std::vector<int> stack{line_child_[l]};
    while (!stack.empty()) {
      const int bus = stack.back();
      stack.pop_back();
      line_subtree_[l].push_back(bus);
      for (int child : children[bus]) stack.push_back(child);
    }
    std::sort(line_subtree_[l].begin(), line_subtree_[l].end());
  }
}

double FeederTopology::rating(int bus) const {
  if (bus < 1 || bus >= num_buses_)
    throw std::invalid_argument("bus " + std::to_string(bus) + " has no rating");
  return s_rating_[bus - 1];
}

std::vector<int> FeederTopology::inverter_buses() const {
  std::vector<int> buses;
  for (int bus = 1; bus < num_buses_; ++bus)
    if (s_rating_[bus - 1] > 0.0) buses.push_back(bus);
  return buses;
}

const std::vector<int>& FeederTopology::line_subtree(int line_index) const {
  if (line_index < 0 || line_index >= static_cast<int>(lines_.size()))
    throw std::invalid_argument("unknown line index " + std::to_string(line_index));
  return line_subtree_[line_index];
}

int FeederTopology::line_index(int from, int to) const {
  for (std::size_t l = 0; l < lines_.size(); ++l) {
    const Line& line = lines_[l];
    if ((line.from == from && line.to == to) ||
        (line.from == to && line.to == from))
      return static_cast<int>(l);
  }
  throw std::invalid_argument("unknown line (" + std::to_string(from) + "," +
                              std::to_string(to) + ")");
}

FeederTopology load_feeder(const std::string& lines_csv,
                           const std::string& buses_csv, double v0) {
  const csv::Table line_table = csv::read(lines_csv);
  csv::expect_header(line_table, {"from", "to", "r_pu", "x_pu"}, lines_csv);
  std::vector<Line> lines;
  int max_bus = 0;
  for (std::size_t i = 0; i < line_table.rows.size(); ++i) {
    const auto& row = line_table.rows[i];
    const std::size_t line_no = line_table.line_numbers[i];
    if (row.size() != 4)
      throw std::runtime_error(lines_csv + ":" + std::to_string(line_no) +
                               ": expected 4 columns");
    Line line;
    line.from = static_cast<int>(csv::to_long(row[0], lines_csv, line_no, "from"));
    line.to = static_cast<int>(csv::to_long(row[1], lines_csv, line_no, "to"));
    line.r_pu = csv::to_double(row[2], lines_csv, line_no, "r_pu");
    line.x_pu = csv::to_double(row[3], lines_csv, line_no, "x_pu");
    max_bus = std::max({max_bus, line.from, line.to});
    lines.push_back(line);
  }
  const int num_buses = max_bus + 1;

  const csv::Table bus_table = csv::read(buses_csv);
  csv::expect_header(bus_table, {"bus", "s_rating_pu"}, buses_csv);
  Eigen::VectorXd ratings = Eigen::VectorXd::Zero(num_buses - 1);
  for (std::size_t i = 0; i < bus_table.rows.size(); ++i) {
    const auto& row = bus_table.rows[i];
    const std::size_t line_no = bus_table.line_numbers[i];
    if (row.size() != 2)
      throw std::runtime_error(buses_csv + ":" + std::to_string(line_no) +
                               ": expected 2 columns");
    const int bus = static_cast<int>(csv::to_long(row[0], buses_csv, line_no, "bus"));
    if (bus == 0) continue;  // substation row carries no rating
    if (bus < 1 || bus >= num_buses)
      throw std::runtime_error(buses_csv + ":" + std::to_string(line_no) +
                               ": bus " + std::to_string(bus) +
                               " not present in the line list");
    ratings[bus - 1] = csv::to_double(row[1], buses_csv, line_no, "s_rating_pu");
  }
  return FeederTopology(num_buses, std::move(lines), v0, std::move(ratings));
}

Sensitivities build_sensitivities(const FeederTopology& topo) {
  const int n = topo.num_load_buses();
  Sensitivities sens;
  sens.R = Eigen::MatrixXd::Zero(n, n);
  sens.X = Eigen::MatrixXd::Zero(n, n);
  // R = sum_l r_l * 1_{S_l} 1_{S_l}', with S_l the buses below line l: line l
  // lies on path(m) ∩ path(n) exactly when both m and n are below it.
  for (std::size_t l = 0; l < topo.lines().size(); ++l) {
    const auto& subtree = topo.line_subtree(static_cast<int>(l));
    const double r = topo.lines()[l].r_pu;
    const double x = topo.lines()[l].x_pu;
    for (int m : subtree)
      for (int k : subtree) {
        sens.R(m - 1, k - 1) += r;
        sens.X(m - 1, k - 1) += x;
      }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sens.R);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw std::runtime_error("sensitivity matrix R is not positive definite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ex(sens.X);
  if (ex.info() != Eigen::Success || ex.eigenvalues().minCoeff() <= 0.0)
    throw std::runtime_error("sensitivity matrix X is not positive definite");
  return sens;
}

Eigen::VectorXd voltage_profile(const GridState& state, const Sensitivities& sens,
                                double v0) {
  const int n = static_cast<int>(sens.R.rows());
  check_dims(state, n);
  const Eigen::VectorXd p = state.p_g - state.p_c;
  const Eigen::VectorXd q = state.q_g - state.q_c;
  return sens.R * p + sens.X * q + Eigen::VectorXd::Constant(n, v0);
}

double evaluate_cost(const GridState& state, const Sensitivities& sens,
                     double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda must lie in [0,1]");
  const int n = static_cast<int>(sens.R.rows());
  check_dims(state, n);
  const Eigen::VectorXd p = state.p_g - state.p_c;
  const Eigen::VectorXd q = state.q_g - state.q_c;
  const double voltage_term = (sens.R * p + sens.X * q).squaredNorm();
  const double loss_term = q.dot(sens.R * q);
  return lambda * voltage_term + (1.0 - lambda) * loss_term;
}

Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& M, Eigen::MatrixXd* inverse_sqrt) {
  const Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed in spd_sqrt");
  const Eigen::VectorXd& evals = es.eigenvalues();
  const double max_eval = evals.maxCoeff();
  if (max_eval <= 0.0)
    throw std::runtime_error("matrix has no positive eigenvalues in spd_sqrt");
  if (evals.minCoeff() < -1e-9 * max_eval)
    throw std::runtime_error("matrix is not positive semidefinite in spd_sqrt");
  const double floor = 1e-12 * max_eval;
  Eigen::VectorXd root = evals.cwiseMax(floor).cwiseSqrt();
  const Eigen::MatrixXd& V = es.eigenvectors();
  if (inverse_sqrt)
    *inverse_sqrt = V * root.cwiseInverse().asDiagonal() * V.transpose();
  return V * root.asDiagonal() * V.transpose();
}

CostTransform build_cost_transform(const Sensitivities& sens, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda must lie in [0,1]");
  CostTransform ct;
  ct.lambda = lambda;
  const Eigen::MatrixXd M =
      (1.0 - lambda) * sens.R + lambda * (sens.X * sens.X);
  ct.C = spd_sqrt(M, &ct.C_inv);
  return ct;
}

Eigen::VectorXd compute_y(const Eigen::VectorXd& p_g, const Eigen::VectorXd& p_c,
                          const Eigen::VectorXd& q_c, const CostTransform& ct,
                          const Sensitivities& sens) {
  const int n = static_cast<int>(sens.R.rows());
  if (p_g.size() != n || p_c.size() != n || q_c.size() != n)
    throw std::invalid_argument("compute_y dimension mismatch");
  const double lambda = ct.lambda;
  const Eigen::VectorXd p = p_g - p_c;
  const Eigen::VectorXd inner = -(1.0 - lambda) * (sens.R * q_c) +
                                lambda * (sens.X * (sens.R * p)) -
                                lambda * (sens.X * (sens.X * q_c));
  return ct.C_inv * inner;
}

Eigen::VectorXd line_flow_features(const GridState& state,
                                   const FeederTopology& topo,
                                   const std::vector<int>& line_indices) {
  check_dims(state, topo.num_load_buses());
  Eigen::VectorXd flows(static_cast<Eigen::Index>(line_indices.size()));
  for (std::size_t i = 0; i < line_indices.size(); ++i) {
    double net_injection = 0.0;
    for (int bus : topo.line_subtree(line_indices[i]))
      net_injection += state.p_g[bus - 1] - state.p_c[bus - 1];
    flows[static_cast<Eigen::Index>(i)] = -net_injection;
  }
  return flows;
}

}  // namespace kervolt
