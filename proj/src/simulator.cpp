#include "kervolt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>

#include "kervolt/csv.hpp"
#include "kervolt/log.hpp"
#include "kervolt/rng.hpp"

namespace kervolt {

std::string MethodSpec::label() const {
  switch (kind) {
    case MethodKind::Optimal:
      return "optimal";
    case MethodKind::KernelGaussian:
      return "gaussian";
    case MethodKind::KernelLinear:
      return "linear";
    case MethodKind::Stale:
      return "stale" + std::to_string(stale_delay_min);
    case MethodKind::Zero:
      return "zero";
  }
  throw std::logic_error("unreachable method kind");
}

void SimulationConfig::validate() const {
  if (train_window_min < 1)
    throw std::invalid_argument("training window must be at least one minute");
  if (retrain_period_min < 1)
    throw std::invalid_argument("retrain period must be at least one minute");
  if (eval_cadence_sec < 1)
    throw std::invalid_argument("evaluation cadence must be positive");
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda must lie in [0,1]");
  if (methods.empty()) throw std::invalid_argument("no methods requested");
  for (const MethodSpec& m : methods)
    if (m.kind == MethodKind::Stale && m.stale_delay_min < 0)
      throw std::invalid_argument("stale delay must be nonnegative");
  if (start_minute >= end_minute)
    throw std::invalid_argument("empty evaluation horizon");
}

namespace {

bool is_kernel_method(MethodKind kind) {
  return kind == MethodKind::KernelGaussian || kind == MethodKind::KernelLinear;
}

KernelSpec base_spec_for(MethodKind kind) {
  KernelSpec spec;
  spec.kind = kind == MethodKind::KernelGaussian ? KernelKind::Gaussian
                                                 : KernelKind::Linear;
  return spec;
}

}  // namespace

MethodResult run_simulation(const FeederTopology& topo,
                            const std::vector<ScenarioRecord>& records,
                            const SimulationConfig& config) {
  config.validate();
  const int n = topo.num_load_buses();
  const Sensitivities sens = build_sensitivities(topo);
  const CostTransform ct = build_cost_transform(sens, config.lambda);

  std::map<int, const ScenarioRecord*> by_minute;
  for (const ScenarioRecord& rec : records) by_minute[rec.t_min] = &rec;

  int max_delay = 0;
  for (const MethodSpec& m : config.methods)
    if (m.kind == MethodKind::Stale) max_delay = std::max(max_delay, m.stale_delay_min);
  const int warmup = std::max(config.train_window_min, max_delay);
  for (int t = config.start_minute - warmup; t < config.end_minute; ++t)
    if (!by_minute.count(t))
      throw std::invalid_argument(
          "insufficient history: minute " + std::to_string(t) +
          " missing (need " + std::to_string(warmup) + " warm-up minutes)");

  const auto qbar_at = [&](const ScenarioRecord& rec) {
    Eigen::VectorXd qbar = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j)
      if (topo.inverter_ratings()[j] > 0.0)
        qbar[j] = reactive_limit(topo.inverter_ratings()[j], rec.p_g[j]);
    return qbar;
  };

  // Dispatch cache: stale setpoints reuse the minute they were computed for.
  std::map<int, Eigen::VectorXd> dispatch_cache;
  const auto dispatch_at = [&](int minute) -> const Eigen::VectorXd& {
    auto it = dispatch_cache.find(minute);
    if (it == dispatch_cache.end()) {
      const ScenarioRecord& rec = *by_minute.at(minute);
      const Eigen::VectorXd y = compute_y(rec.p_g, rec.p_c, rec.q_c, ct, sens);
      it = dispatch_cache
               .emplace(minute,
                        optimal_dispatch(ct, y, qbar_at(rec), config.solver))
               .first;
    }
    return it->second;
  };

  MethodResult result;
  const int n_methods = static_cast<int>(config.methods.size());
  for (const MethodSpec& m : config.methods)
    result.method_labels.push_back(m.label());
  result.max_box_violation.assign(n_methods, 0.0);

  TrainOptions train_options;
  train_options.solver = config.solver;
  train_options.gram_jitter = config.gram_jitter;

  // Per kernel method: current policies plus CV selection (reused when the
  // tuning runs only once).
  std::vector<std::optional<PolicySet>> policies(n_methods);
  std::vector<std::optional<CvSelection>> tuning(n_methods);

  for (int boundary = config.start_minute; boundary < config.end_minute;
       boundary += config.retrain_period_min) {
    // Retrain on the trailing window.
    std::vector<ScenarioRecord> train_records;
    for (int t = boundary - config.train_window_min; t < boundary; ++t)
      train_records.push_back(*by_minute.at(t));
    const ScenarioWindow window = make_window(std::move(train_records), topo);

    for (int m = 0; m < n_methods; ++m) {
      const MethodSpec& spec = config.methods[m];
      if (!is_kernel_method(spec.kind)) continue;
      const KernelSpec base = base_spec_for(spec.kind);
      try {
        KernelChoice choice;
        choice.spec = base;
        double mu = config.cv.fixed_mu;
        if (config.cv.enabled) {
          if (!config.cv.once || !tuning[m]) {
            CvSelection sel = grid_search(
                window, topo, sens, ct, config.features, base, config.cv.grid,
                derive_seed(config.seed, "cv-folds", boundary), config.threads,
                train_options);
            tuning[m] = std::move(sel);
            result.tunings.push_back({boundary, spec.label(), tuning[m]->mu,
                                      tuning[m]->gamma, tuning[m]->score});
          }
          mu = tuning[m]->mu;
          if (base.kind == KernelKind::Gaussian) {
            choice.spec.gamma = tuning[m]->gamma;
            choice.gamma_is_multiplier = true;
          }
        } else if (base.kind == KernelKind::Gaussian) {
          choice.spec.gamma = config.cv.fixed_gamma_mult;
          choice.gamma_is_multiplier = true;
        }
        policies[m] = train_policies(window, topo, sens, ct, config.features,
                                     choice, mu, train_options);
      } catch (const std::exception& e) {
        log::warn("retraining `" + spec.label() + "` at minute " +
                  std::to_string(boundary) + " failed: " + e.what());
        policies[m].reset();
      }
    }

    IntervalStats stats;
    stats.start_min = boundary;
    stats.avg_cost.assign(n_methods, 0.0);
    stats.gap_to_optimal.assign(n_methods, 0.0);
    std::vector<int> method_steps(n_methods, 0);
    std::vector<double> cost_sum(n_methods, 0.0);
    double optimal_sum = 0.0;
    int optimal_steps = 0;
    bool have_prev_solar = false;
    double prev_total_solar = 0.0;

    const int interval_end =
        std::min(boundary + config.retrain_period_min, config.end_minute);
    for (int t = boundary; t < interval_end; ++t) {
      const ScenarioRecord& rec = *by_minute.at(t);
      const Eigen::VectorXd qbar = qbar_at(rec);
      const Eigen::VectorXd y = compute_y(rec.p_g, rec.p_c, rec.q_c, ct, sens);

      const double total_solar = rec.p_g.sum();
      stats.total_solar_peak = std::max(stats.total_solar_peak, total_solar);
      if (have_prev_solar)
        stats.max_solar_step =
            std::max(stats.max_solar_step, std::abs(total_solar - prev_total_solar));
      prev_total_solar = total_solar;
      have_prev_solar = true;

      Eigen::VectorXd q_optimal;
      try {
        q_optimal = dispatch_at(t).cwiseMin(qbar).cwiseMax(-qbar);
      } catch (const std::exception& e) {
        log::warn("optimal dispatch failed at minute " + std::to_string(t) +
                  ": " + e.what());
        ++result.skipped_steps;
        continue;
      }
      const double optimal_cost = (ct.C * q_optimal + y).squaredNorm();
      optimal_sum += optimal_cost;
      ++optimal_steps;

      for (int m = 0; m < n_methods; ++m) {
        const MethodSpec& spec = config.methods[m];
        Eigen::VectorXd q;
        switch (spec.kind) {
          case MethodKind::Optimal:
            q = q_optimal;
            break;
          case MethodKind::Zero:
            q = Eigen::VectorXd::Zero(n);
            break;
          case MethodKind::Stale: {
            try {
              q = dispatch_at(t - spec.stale_delay_min);
            } catch (const std::exception& e) {
              log::warn("stale dispatch failed at minute " + std::to_string(t) +
                        ": " + e.what());
              ++result.skipped_steps;
              continue;
            }
            break;
          }
          case MethodKind::KernelGaussian:
          case MethodKind::KernelLinear: {
            if (!policies[m]) {
              ++result.skipped_steps;
              continue;
            }
            q = Eigen::VectorXd::Zero(n);
            for (const InverterPolicy& pol : policies[m]->policies) {
              const Eigen::VectorXd z = feature_vector(
                  rec, qbar[pol.bus - 1], pol.bus, config.features, topo);
              q[pol.bus - 1] = pol.evaluate(z);
            }
            break;
          }
        }
        // Projection onto the current limits is enforced for every method.
        const Eigen::VectorXd q_applied = q.cwiseMin(qbar).cwiseMax(-qbar);
        const double violation =
            (q_applied.cwiseAbs() - qbar).maxCoeff();
        result.max_box_violation[m] =
            std::max(result.max_box_violation[m], violation);
        cost_sum[m] += (ct.C * q_applied + y).squaredNorm();
        ++method_steps[m];
      }
    }

    if (optimal_steps == 0) continue;
    const double optimal_avg = optimal_sum / optimal_steps;
    stats.steps = optimal_steps;
    for (int m = 0; m < n_methods; ++m) {
      if (method_steps[m] == 0) {
        stats.avg_cost[m] = std::numeric_limits<double>::quiet_NaN();
        stats.gap_to_optimal[m] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      stats.avg_cost[m] = cost_sum[m] / method_steps[m];
      stats.gap_to_optimal[m] = stats.avg_cost[m] - optimal_avg;
    }
    result.intervals.push_back(std::move(stats));
  }
  return result;
}

void cost_gap_report(const MethodResult& result, const std::string& path) {
  csv::AtomicFile file(path);
  file.stream() << "interval_start_min,method,avg_cost,gap_to_optimal\n";
  for (const IntervalStats& stats : result.intervals)
    for (std::size_t m = 0; m < result.method_labels.size(); ++m)
      file.stream() << stats.start_min << ',' << result.method_labels[m] << ','
                    << csv::g17(stats.avg_cost[m]) << ','
                    << csv::g17(stats.gap_to_optimal[m]) << '\n';
  file.commit();
}

}  // namespace kervolt
