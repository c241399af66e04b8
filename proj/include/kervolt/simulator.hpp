#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kervolt/crossval.hpp"
#include "kervolt/policy.hpp"

namespace kervolt {

enum class MethodKind { Optimal, KernelGaussian, KernelLinear, Stale, Zero };

struct MethodSpec {
  MethodKind kind = MethodKind::Optimal;
  int stale_delay_min = 5;

  std::string label() const;
};

struct CvOptions {
  bool enabled = true;
  bool once = false;  // tune on the first window only, reuse afterwards
  CvGrid grid;
  double fixed_mu = 1e-3;          // used when CV is disabled
  double fixed_gamma_mult = 1.0;   // Gaussian width multiplier when disabled
};

struct SimulationConfig {
  int train_window_min = 30;
  int retrain_period_min = 30;
  // Minute data is held for its duration, so sub-minute cadences evaluate
  // once per minute; the field documents the intended device cadence.
  int eval_cadence_sec = 30;
  double lambda = 0.5;
  std::vector<MethodSpec> methods;
  FeatureSelector features;
  int start_minute = 11 * 60;
  int end_minute = 18 * 60;
  CvOptions cv;
  std::uint64_t seed = 0;
  int threads = 1;
  SolverSettings solver;
  double gram_jitter = 1e-8;

  void validate() const;
};

struct IntervalStats {
  int start_min = 0;
  int steps = 0;
  double total_solar_peak = 0.0;  // max over the interval of sum_n p_g
  double max_solar_step = 0.0;    // max per-minute |Δ sum_n p_g|
  std::vector<double> avg_cost;   // per method, config order
  std::vector<double> gap_to_optimal;
};

struct WindowTuning {
  int boundary_min = 0;
  std::string method;
  double mu = 0.0;
  double gamma = 0.0;
  double score = 0.0;
};

struct MethodResult {
  std::vector<std::string> method_labels;
  std::vector<IntervalStats> intervals;
  std::vector<double> max_box_violation;  // per method, over all steps
  std::vector<WindowTuning> tunings;
  int skipped_steps = 0;
};

// Rolling-horizon run: retrain kernel policies at every retrain boundary on
// the preceding train_window_min minutes, evaluate all methods per minute at
// current data, and average costs per retrain interval. Every applied
// setpoint is projected into the current reactive-limit box.
MethodResult run_simulation(const FeederTopology& topo,
                            const std::vector<ScenarioRecord>& records,
                            const SimulationConfig& config);

// CSV report `interval_start_min,method,avg_cost,gap_to_optimal`.
void cost_gap_report(const MethodResult& result, const std::string& path);

}  // namespace kervolt
