#include "kervolt/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "kervolt/csv.hpp"

namespace kervolt {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    out.push_back(vector_to_json(m.row(r).transpose()));
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw std::runtime_error("ragged matrix in policy file");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

std::string mode_name(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::Local:
      return "local";
    case FeatureMode::Global:
      return "global";
    case FeatureMode::Hybrid:
      return "hybrid";
  }
  throw std::logic_error("unreachable feature mode");
}

FeatureMode mode_from_name(const std::string& name) {
  if (name == "local") return FeatureMode::Local;
  if (name == "global") return FeatureMode::Global;
  if (name == "hybrid") return FeatureMode::Hybrid;
  throw std::runtime_error("unknown feature mode `" + name + "`");
}

KernelKind kind_from_name(const std::string& name) {
  if (name == "linear") return KernelKind::Linear;
  if (name == "polynomial") return KernelKind::Polynomial;
  if (name == "gaussian") return KernelKind::Gaussian;
  throw std::runtime_error("unknown kernel kind `" + name + "`");
}

}  // namespace

Eigen::VectorXd optimal_dispatch(const CostTransform& ct,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& q_bar,
                                 const SolverSettings& solver) {
  const Eigen::Index n = ct.C.rows();
  if (y.size() != n || q_bar.size() != n)
    throw std::invalid_argument("optimal_dispatch dimension mismatch");
  if ((q_bar.array() < 0.0).any())
    throw std::invalid_argument("reactive limits must be nonnegative");
  Eigen::MatrixXd s = ct.C * ct.C;
  s = 0.5 * (s + s.transpose());
  const QpSolution sol = solve_box(2.0 * s, 2.0 * (ct.C * y), -q_bar, q_bar, solver);
  if (sol.status != QpStatus::Solved)
    throw std::runtime_error("optimal dispatch QP did not converge (primal " +
                             csv::g17(sol.primal_residual) + ", dual " +
                             csv::g17(sol.dual_residual) + ")");
  return sol.x;
}

double InverterPolicy::evaluate(const Eigen::VectorXd& z_raw) const {
  const Eigen::VectorXd z = standardizer ? standardizer->apply(z_raw) : z_raw;
  if (z.size() != training_inputs.cols())
    throw std::invalid_argument("policy input dimension mismatch");
  return kernel_vector(kernel, training_inputs, z).dot(a) + b;
}

double evaluate_policy(const InverterPolicy& policy, const Eigen::VectorXd& z_raw) {
  return policy.evaluate(z_raw);
}

double project_to_limits(double q, double q_bar) {
  if (q_bar < 0.0)
    throw std::invalid_argument("reactive limit must be nonnegative");
  return std::max(std::min(q, q_bar), -q_bar);
}

const InverterPolicy& PolicySet::policy_for(int bus) const {
  for (const InverterPolicy& p : policies)
    if (p.bus == bus) return p;
  throw std::invalid_argument("no policy for bus " + std::to_string(bus));
}

double training_constant(const TrainingProblem& tp) {
  return tp.Y.squaredNorm() / static_cast<double>(tp.Y.cols());
}

QpProblem assemble_training_qp(const TrainingProblem& tp) {
  const int n_inv = static_cast<int>(tp.buses.size());
  const Eigen::Index t = tp.Y.cols();
  const Eigen::Index n_all = tp.C.rows();
  if (tp.Y.rows() != n_all)
    throw std::invalid_argument("Y row count must match the cost transform");
  if (static_cast<int>(tp.K.size()) != n_inv)
    throw std::invalid_argument("one Gram matrix per inverter required");
  if (tp.qbar.rows() != t || tp.qbar.cols() != n_inv)
    throw std::invalid_argument("reactive limit matrix must be T x inverters");
  for (const Eigen::MatrixXd& k : tp.K)
    if (k.rows() != t || k.cols() != t)
      throw std::invalid_argument("Gram matrices must be T x T");
  if (tp.mu < 0.0) throw std::invalid_argument("mu must be nonnegative");

  const Eigen::Index block = t + 1;  // per-inverter [a_n; b_n]
  const Eigen::Index dim = n_inv * block;
  const double inv_t = 1.0 / static_cast<double>(t);

  // E_n = [K_n 1]; cross-inverter coupling enters only through C².
  std::vector<Eigen::MatrixXd> e(tp.K.begin(), tp.K.end());
  for (int i = 0; i < n_inv; ++i) {
    e[i].conservativeResize(t, block);
    e[i].col(t) = Eigen::VectorXd::Ones(t);
  }
  Eigen::MatrixXd c_sq = tp.C * tp.C;
  c_sq = 0.5 * (c_sq + c_sq.transpose());
  const Eigen::MatrixXd cy = tp.C * tp.Y;  // row b-1 feeds inverter at bus b

  QpProblem qp;
  qp.P = Eigen::MatrixXd::Zero(dim, dim);
  qp.c = Eigen::VectorXd::Zero(dim);
  qp.A = Eigen::MatrixXd::Zero(n_inv * t, dim);
  qp.l = Eigen::VectorXd::Zero(n_inv * t);
  qp.u = Eigen::VectorXd::Zero(n_inv * t);

  for (int i = 0; i < n_inv; ++i) {
    const Eigen::Index row0 = i * block;
    const Eigen::Index bus_i = tp.buses[i] - 1;
    for (int j = 0; j < n_inv; ++j) {
      const Eigen::Index bus_j = tp.buses[j] - 1;
      qp.P.block(row0, j * block, block, block).noalias() =
          (2.0 * inv_t * c_sq(bus_i, bus_j)) * (e[i].transpose() * e[j]);
    }
    qp.P.block(row0, row0, t, t) += 2.0 * tp.mu * tp.K[i];
    qp.c.segment(row0, block).noalias() =
        (2.0 * inv_t) * (e[i].transpose() * cy.row(bus_i).transpose());

    qp.A.block(i * t, row0, t, block) = e[i];
    qp.l.segment(i * t, t) = -tp.qbar.col(i);
    qp.u.segment(i * t, t) = tp.qbar.col(i);
  }
  qp.P = 0.5 * (qp.P + qp.P.transpose());
  return qp;
}

PolicySet train_policies(const ScenarioWindow& window, const FeederTopology& topo,
                         const Sensitivities& sens, const CostTransform& ct,
                         const FeatureSelector& selector,
                         const KernelChoice& kernel, double mu,
                         const TrainOptions& options) {
  const int t = window.size();
  if (t < 1) throw std::invalid_argument("cannot train on an empty window");
  if (mu < 0.0) throw std::invalid_argument("mu must be nonnegative");
  if (mu == 0.0 && !options.allow_zero_mu)
    throw std::invalid_argument("mu = 0 is reserved for test oracles");
  kernel.spec.validate();

  const FeatureSet features = select_features(window, selector, topo);
  const int n_inv = static_cast<int>(features.buses.size());
  if (n_inv == 0) throw std::invalid_argument("feeder hosts no inverters");

  TrainingProblem tp;
  tp.C = ct.C;
  tp.buses = features.buses;
  tp.mu = mu;
  tp.Y.resize(topo.num_load_buses(), t);
  for (int s = 0; s < t; ++s) {
    const ScenarioRecord& rec = window.records[s];
    tp.Y.col(s) = compute_y(rec.p_g, rec.p_c, rec.q_c, ct, sens);
  }
  tp.qbar.resize(t, n_inv);
  for (int i = 0; i < n_inv; ++i)
    tp.qbar.col(i) = window.qbar.col(features.buses[i] - 1);

  // Standardize features for scale-sensitive kernels; the linear kernel sees
  // raw data so linear policies stay exactly affine in grid quantities.
  std::vector<InverterPolicy> policies(n_inv);
  for (int i = 0; i < n_inv; ++i) {
    InverterPolicy& pol = policies[i];
    pol.bus = features.buses[i];
    Eigen::MatrixXd rows = features.z[i];
    if (kernel.spec.kind != KernelKind::Linear && t >= 2) {
      pol.standardizer = fit_standardizer(rows);
      rows = pol.standardizer->apply_rows(rows);
    }
    pol.kernel = kernel.spec;
    if (kernel.gamma_is_multiplier) {
      if (kernel.spec.kind != KernelKind::Gaussian)
        throw std::invalid_argument("gamma multipliers apply to Gaussian kernels only");
      pol.kernel.gamma = kernel.spec.gamma * median_pairwise_sq_dist(rows);
    }
    pol.training_inputs = std::move(rows);
    tp.K.push_back(gram_matrix(pol.kernel, pol.training_inputs, options.gram_jitter));
  }

  const QpProblem qp = assemble_training_qp(tp);
  const QpSolution sol = solve(qp, options.solver);
  if (sol.status != QpStatus::Solved)
    throw std::runtime_error("policy training QP did not converge (primal " +
                             csv::g17(sol.primal_residual) + ", dual " +
                             csv::g17(sol.dual_residual) + ")");

  PolicySet set;
  set.lambda = ct.lambda;
  set.mu = mu;
  set.selector = selector;
  set.window_start_min = window.records.front().t_min;
  set.window_end_min = window.records.back().t_min + 1;

  const Eigen::Index block = t + 1;
  double reg_term = 0.0;
  Eigen::MatrixXd q_scenarios = Eigen::MatrixXd::Zero(topo.num_load_buses(), t);
  for (int i = 0; i < n_inv; ++i) {
    InverterPolicy& pol = policies[i];
    pol.a = sol.x.segment(i * block, t);
    pol.b = sol.x[i * block + t];
    if (!pol.a.allFinite() || !std::isfinite(pol.b))
      throw std::runtime_error("training produced non-finite coefficients");
    q_scenarios.row(pol.bus - 1) =
        (tp.K[i] * pol.a + Eigen::VectorXd::Constant(t, pol.b)).transpose();
    reg_term += pol.a.dot(tp.K[i] * pol.a);
  }
  set.fit_term = (tp.C * q_scenarios + tp.Y).squaredNorm() / static_cast<double>(t);
  set.training_objective = set.fit_term + mu * reg_term;
  set.policies = std::move(policies);
  return set;
}

void save_policies(const PolicySet& set, const std::string& path) {
  json doc;
  doc["format"] = "kervolt-policyset";
  doc["version"] = 1;
  doc["lambda"] = set.lambda;
  doc["mu"] = set.mu;
  doc["window"] = {{"start_min", set.window_start_min},
                   {"end_min", set.window_end_min}};
  json lines = json::array();
  for (const auto& [from, to] : set.selector.lines)
    lines.push_back(json::array({from, to}));
  doc["features"] = {{"mode", mode_name(set.selector.mode)}, {"lines", lines}};
  doc["training_objective"] = set.training_objective;
  doc["fit_term"] = set.fit_term;
  json policies = json::array();
  for (const InverterPolicy& pol : set.policies) {
    json p;
    p["bus"] = pol.bus;
    p["kernel"] = {{"kind", kernel_name(pol.kernel)},
                   {"beta", pol.kernel.beta},
                   {"gamma", pol.kernel.gamma}};
    p["standardizer"] =
        pol.standardizer
            ? json{{"mean", vector_to_json(pol.standardizer->mean)},
                   {"std", vector_to_json(pol.standardizer->std)}}
            : json(nullptr);
    p["training_inputs"] = matrix_to_json(pol.training_inputs);
    p["a"] = vector_to_json(pol.a);
    p["b"] = pol.b;
    policies.push_back(std::move(p));
  }
  doc["policies"] = std::move(policies);

  csv::AtomicFile file(path);
  file.stream() << doc.dump(1) << "\n";
  file.commit();
}

PolicySet load_policies(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": corrupt policy file: " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "kervolt-policyset")
      throw std::runtime_error("not a policy file");
    if (doc.at("version").get<int>() != 1)
      throw std::runtime_error("unsupported policy file version");
    PolicySet set;
    set.lambda = doc.at("lambda").get<double>();
    set.mu = doc.at("mu").get<double>();
    set.window_start_min = doc.at("window").at("start_min").get<int>();
    set.window_end_min = doc.at("window").at("end_min").get<int>();
    set.selector.mode =
        mode_from_name(doc.at("features").at("mode").get<std::string>());
    for (const json& pair : doc.at("features").at("lines"))
      set.selector.lines.push_back({pair.at(0).get<int>(), pair.at(1).get<int>()});
    set.training_objective = doc.at("training_objective").get<double>();
    set.fit_term = doc.at("fit_term").get<double>();
    for (const json& p : doc.at("policies")) {
      InverterPolicy pol;
      pol.bus = p.at("bus").get<int>();
      pol.kernel.kind = kind_from_name(p.at("kernel").at("kind").get<std::string>());
      pol.kernel.beta = p.at("kernel").at("beta").get<int>();
      pol.kernel.gamma = p.at("kernel").at("gamma").get<double>();
      if (!p.at("standardizer").is_null()) {
        FeatureStandardizer st;
        st.mean = vector_from_json(p.at("standardizer").at("mean"));
        st.std = vector_from_json(p.at("standardizer").at("std"));
        pol.standardizer = std::move(st);
      }
      pol.training_inputs = matrix_from_json(p.at("training_inputs"));
      pol.a = vector_from_json(p.at("a"));
      pol.b = p.at("b").get<double>();
      if (pol.a.size() != pol.training_inputs.rows())
        throw std::runtime_error("coefficient count does not match training inputs");
      if (!pol.a.allFinite() || !std::isfinite(pol.b))
        throw std::runtime_error("non-finite coefficients");
      set.policies.push_back(std::move(pol));
    }
    return set;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": malformed policy file: " + e.what());
  }
}

}  // namespace kervolt
