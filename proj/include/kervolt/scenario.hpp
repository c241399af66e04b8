#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kervolt/feeder.hpp"

namespace kervolt {

// One minute of per-bus data, indexed by load bus (entry n-1 for bus n).
struct ScenarioRecord {
  int t_min = 0;
  Eigen::VectorXd p_g;
  Eigen::VectorXd p_c;
  Eigen::VectorXd q_c;
};

// A block of T scenarios plus the reactive headroom derived from the
// inverter ratings: qbar(t, n-1) = sqrt(s̄_n² - p_g²) clipped at zero.
struct ScenarioWindow {
  std::vector<ScenarioRecord> records;
  Eigen::MatrixXd qbar;  // T x N

  int size() const { return static_cast<int>(records.size()); }
};

// Reactive headroom under the apparent-power limit. Generation above the
// rating clips the headroom to zero with a warning instead of failing.
double reactive_limit(double s_bar, double p_g);

ScenarioWindow make_window(std::vector<ScenarioRecord> records,
                           const FeederTopology& topo);
ScenarioWindow window_subset(const ScenarioWindow& window,
                             const std::vector<int>& indices);

// Reads `timeseries.csv` (header t_min,bus,p_load_pu,q_load_pu,p_solar_pu).
// Missing (bus, minute) cells are zero; a duplicate key is an error naming
// the offending row. Records come back sorted by minute.
std::vector<ScenarioRecord> load_timeseries(const std::string& path,
                                            int num_load_buses);

void save_timeseries(const std::vector<ScenarioRecord>& records,
                     const std::string& path);

// Rescales each bus so its active-load peak hits fraction * benchmark peak;
// solar is scaled by the same per-bus factor. Buses with a zero benchmark
// are left untouched.
void scale_profiles(std::vector<ScenarioRecord>& records,
                    double target_peak_fraction,
                    const Eigen::VectorXd& benchmark_peaks);

// Draws one lagging power factor per bus, uniform in [pf_lo, pf_hi], and sets
// q_c = p_c * tan(arccos(pf)).
void draw_reactive_loads(std::vector<ScenarioRecord>& records, double pf_lo,
                         double pf_hi, std::uint64_t seed);

struct SynthesisOptions {
  int solar_noon_min = 12 * 60;
  int daylight_halfwidth_min = 390;
  double clear_sky_peak = 0.8;   // fraction of s̄ reached at noon
  double cloud_noise = 0.15;     // multiplicative solar noise level
  double load_base = 0.6;        // nighttime load fraction of load_scale
  double morning_hump = 0.5;     // hump amplitudes, same unit as load_base
  double evening_hump = 0.8;
  double load_scale = 0.1;       // p.u. load magnitude per bus
  double load_jitter = 0.2;      // per-bus noise on the hump part only
};

// One synthetic day (1440 minute records), deterministic under the seed.
// Loads follow a double-hump residential shape; night load is flat base.
std::vector<ScenarioRecord> synthesize_day(const FeederTopology& topo,
                                           std::uint64_t seed,
                                           const SynthesisOptions& options);

enum class FeatureMode { Local, Global, Hybrid };

struct FeatureSelector {
  FeatureMode mode = FeatureMode::Local;
  std::vector<std::pair<int, int>> lines;  // Hybrid only, (from,to) pairs

  int dimension(const FeederTopology& topo) const;
};

// Per-inverter feature rows; z[i] is T x M for inverter_buses[i].
struct FeatureSet {
  std::vector<int> buses;
  std::vector<Eigen::MatrixXd> z;
};

// Local    -> [p_n^g, q̄_n^g, p_n^c, q_n^c]
// Global   -> [p^c; q^c; p^g] (full grid vector, dimension 3N)
// Hybrid   -> Local followed by the requested line flows
FeatureSet select_features(const ScenarioWindow& window,
                           const FeatureSelector& selector,
                           const FeederTopology& topo);

// Feature row for a single inverter at a single record.
Eigen::VectorXd feature_vector(const ScenarioRecord& record, double qbar_n,
                               int bus, const FeatureSelector& selector,
                               const FeederTopology& topo);

struct FeatureStandardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  Eigen::VectorXd apply(const Eigen::VectorXd& z) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const;
};

// Per-dimension mean/std over feature rows; std floored at 1e-8 so constant
// dimensions standardize to zero. Needs at least two rows.
FeatureStandardizer fit_standardizer(const Eigen::MatrixXd& rows);

}  // namespace kervolt
