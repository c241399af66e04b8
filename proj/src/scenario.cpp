#include "kervolt/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include "kervolt/csv.hpp"
#include "kervolt/log.hpp"
#include "kervolt/rng.hpp"

namespace kervolt {

namespace {

constexpr int kMinutesPerDay = 1440;

// Smooth periodic noise in roughly [-2, 2]: a short random Fourier series
// with 1/k coefficient decay.
class SmoothNoise {
 public:
  SmoothNoise(std::uint64_t seed, int harmonics = 12) {
    Rng rng(seed);
    double norm = 0.0;
    for (int k = 1; k <= harmonics; ++k) norm += 1.0 / (k * k);
    norm = std::sqrt(norm);
    for (int k = 1; k <= harmonics; ++k) {
      amplitudes_.push_back(rng.normal() / (k * norm));
      phases_.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    }
  }

  double operator()(int minute) const {
    double value = 0.0;
    const double base = 2.0 * std::numbers::pi * minute / kMinutesPerDay;
    for (std::size_t k = 0; k < amplitudes_.size(); ++k)
      value += amplitudes_[k] *
               std::sin(static_cast<double>(k + 1) * base + phases_[k]);
    return std::clamp(value, -2.0, 2.0);
  }

 private:
  std::vector<double> amplitudes_;
  std::vector<double> phases_;
};

// cos² bump with compact support [center-halfwidth, center+halfwidth].
double bump(double t, double center, double halfwidth) {
  const double u = (t - center) / halfwidth;
  if (std::abs(u) >= 1.0) return 0.0;
  const double c = std::cos(0.5 * std::numbers::pi * u);
  return c * c;
}

}  // namespace

double reactive_limit(double s_bar, double p_g) {
  if (s_bar < 0.0 || p_g < 0.0)
    throw std::invalid_argument("reactive_limit requires nonnegative inputs");
  if (p_g > s_bar) {
    log::warn("generation " + csv::g17(p_g) + " exceeds rating " +
              csv::g17(s_bar) + "; reactive headroom clipped to zero");
    return 0.0;
  }
  return std::sqrt(s_bar * s_bar - p_g * p_g);
}

ScenarioWindow make_window(std::vector<ScenarioRecord> records,
                           const FeederTopology& topo) {
  const int n = topo.num_load_buses();
  ScenarioWindow window;
  window.qbar.resize(static_cast<Eigen::Index>(records.size()), n);
  for (std::size_t t = 0; t < records.size(); ++t) {
    const ScenarioRecord& rec = records[t];
    if (rec.p_g.size() != n || rec.p_c.size() != n || rec.q_c.size() != n)
      throw std::invalid_argument("scenario record dimension mismatch");
    if ((rec.p_g.array() < 0.0).any() || (rec.p_c.array() < 0.0).any())
      throw std::invalid_argument("solar generation and active load must be nonnegative");
    for (int j = 0; j < n; ++j)
      window.qbar(static_cast<Eigen::Index>(t), j) =
          topo.inverter_ratings()[j] > 0.0
              ? reactive_limit(topo.inverter_ratings()[j], rec.p_g[j])
              : 0.0;
  }
  window.records = std::move(records);
  return window;
}

ScenarioWindow window_subset(const ScenarioWindow& window,
                             const std::vector<int>& indices) {
  ScenarioWindow subset;
  subset.qbar.resize(static_cast<Eigen::Index>(indices.size()),
                     window.qbar.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int t = indices[i];
    if (t < 0 || t >= window.size())
      throw std::invalid_argument("window subset index out of range");
    subset.records.push_back(window.records[t]);
    subset.qbar.row(static_cast<Eigen::Index>(i)) = window.qbar.row(t);
  }
  return subset;
}

std::vector<ScenarioRecord> load_timeseries(const std::string& path,
                                            int num_load_buses) {
  const csv::Table table = csv::read(path);
  csv::expect_header(table, {"t_min", "bus", "p_load_pu", "q_load_pu", "p_solar_pu"},
                     path);
  std::map<int, ScenarioRecord> by_minute;
  std::map<std::pair<int, int>, std::size_t> seen;
  std::size_t filled_cells = 0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t line_no = table.line_numbers[i];
    if (row.size() != 5)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 5 columns");
    const int t = static_cast<int>(csv::to_long(row[0], path, line_no, "t_min"));
    const int bus = static_cast<int>(csv::to_long(row[1], path, line_no, "bus"));
    if (bus < 1 || bus > num_load_buses)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bus " +
                               std::to_string(bus) + " outside 1.." +
                               std::to_string(num_load_buses));
    const auto key = std::make_pair(t, bus);
    if (auto it = seen.find(key); it != seen.end())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": duplicate (bus,timestamp) key, first seen at row " +
                               std::to_string(it->second));
    seen[key] = line_no;
    ScenarioRecord& rec = by_minute[t];
    if (rec.p_g.size() == 0) {
      rec.t_min = t;
      rec.p_g = Eigen::VectorXd::Zero(num_load_buses);
      rec.p_c = Eigen::VectorXd::Zero(num_load_buses);
      rec.q_c = Eigen::VectorXd::Zero(num_load_buses);
    }
    const double p_load = csv::to_double(row[2], path, line_no, "p_load_pu");
    const double q_load = csv::to_double_or(row[3], 0.0, path, line_no, "q_load_pu");
    const double p_solar = csv::to_double(row[4], path, line_no, "p_solar_pu");
    if (p_load < 0.0 || p_solar < 0.0)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": load and solar must be nonnegative");
    rec.p_c[bus - 1] = p_load;
    rec.q_c[bus - 1] = q_load;
    rec.p_g[bus - 1] = p_solar;
    ++filled_cells;
  }
  const std::size_t expected_cells = by_minute.size() * num_load_buses;
  if (filled_cells < expected_cells)
    log::warn(path + ": " + std::to_string(expected_cells - filled_cells) +
              " missing (bus,timestamp) cells treated as zero");
  std::vector<ScenarioRecord> records;
  records.reserve(by_minute.size());
  for (auto& [t, rec] : by_minute) records.push_back(std::move(rec));
  return records;
}

void save_timeseries(const std::vector<ScenarioRecord>& records,
                     const std::string& path) {
  csv::AtomicFile file(path);
  file.stream() << "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n";
  for (const ScenarioRecord& rec : records)
    for (int j = 0; j < rec.p_c.size(); ++j)
      file.stream() << rec.t_min << ',' << j + 1 << ',' << csv::g17(rec.p_c[j])
                    << ',' << csv::g17(rec.q_c[j]) << ','
                    << csv::g17(rec.p_g[j]) << '\n';
  file.commit();
}

void scale_profiles(std::vector<ScenarioRecord>& records,
                    double target_peak_fraction,
                    const Eigen::VectorXd& benchmark_peaks) {
  if (records.empty()) throw std::invalid_argument("no records to scale");
  const int n = static_cast<int>(records.front().p_c.size());
  if (benchmark_peaks.size() != n)
    throw std::invalid_argument("benchmark peak vector dimension mismatch");
  for (int j = 0; j < n; ++j) {
    if (benchmark_peaks[j] <= 0.0) continue;
    double peak = 0.0;
    for (const ScenarioRecord& rec : records) peak = std::max(peak, rec.p_c[j]);
    if (peak <= 0.0)
      throw std::invalid_argument("bus " + std::to_string(j + 1) +
                                  " has an all-zero load series and cannot be scaled");
    const double factor = target_peak_fraction * benchmark_peaks[j] / peak;
    for (ScenarioRecord& rec : records) {
      rec.p_c[j] *= factor;
      rec.p_g[j] *= factor;
    }
  }
}

void draw_reactive_loads(std::vector<ScenarioRecord>& records, double pf_lo,
                         double pf_hi, std::uint64_t seed) {
  if (records.empty())
    throw std::invalid_argument("no records to draw reactive loads for");
  if (!(pf_lo > 0.0 && pf_lo <= pf_hi && pf_hi <= 1.0))
    throw std::invalid_argument("power factor range must satisfy 0 < lo <= hi <= 1");
  const int n = static_cast<int>(records.front().p_c.size());
  Rng rng(derive_seed(seed, "reactive-loads"));
  // One power factor per bus, fixed for the whole series.
  for (int j = 0; j < n; ++j) {
    const double pf = rng.uniform(pf_lo, pf_hi);
    const double tan_phi = std::tan(std::acos(pf));
    for (ScenarioRecord& rec : records) rec.q_c[j] = rec.p_c[j] * tan_phi;
  }
}

std::vector<ScenarioRecord> synthesize_day(const FeederTopology& topo,
                                           std::uint64_t seed,
                                           const SynthesisOptions& options) {
  const int n = topo.num_load_buses();
  // Residential double hump: both bumps have compact support, so deep-night
  // load is exactly the flat base and policies face a static feeder there.
  const double morning_center = 8.0 * 60.0, morning_halfwidth = 150.0;
  const double evening_center = 19.5 * 60.0, evening_halfwidth = 180.0;

  std::vector<SmoothNoise> cloud, jitter;
  std::vector<double> weight;
  Rng rng(derive_seed(seed, "bus-weights"));
  for (int j = 0; j < n; ++j) {
    cloud.emplace_back(derive_seed(seed, "solar-noise", j));
    jitter.emplace_back(derive_seed(seed, "load-noise", j));
    weight.push_back(rng.uniform(0.6, 1.4));
  }

  std::vector<ScenarioRecord> records(kMinutesPerDay);
  for (int t = 0; t < kMinutesPerDay; ++t) {
    ScenarioRecord& rec = records[t];
    rec.t_min = t;
    rec.p_g = Eigen::VectorXd::Zero(n);
    rec.p_c = Eigen::VectorXd::Zero(n);
    rec.q_c = Eigen::VectorXd::Zero(n);

    const double offset =
        static_cast<double>(t - options.solar_noon_min) /
        static_cast<double>(options.daylight_halfwidth_min);
    const double sun = std::abs(offset) < 1.0
                           ? std::cos(0.5 * std::numbers::pi * offset)
                           : 0.0;
    const double humps =
        options.morning_hump * bump(t, morning_center, morning_halfwidth) +
        options.evening_hump * bump(t, evening_center, evening_halfwidth);

    for (int j = 0; j < n; ++j) {
      if (sun > 0.0 && topo.inverter_ratings()[j] > 0.0) {
        const double cloud_mult =
            std::max(0.0, 1.0 + options.cloud_noise * cloud[j](t));
        rec.p_g[j] = options.clear_sky_peak * topo.inverter_ratings()[j] * sun *
                     cloud_mult;
      }
      const double shape =
          options.load_base +
          humps * (1.0 + options.load_jitter * jitter[j](t));
      rec.p_c[j] = std::max(0.0, options.load_scale * weight[j] * shape);
    }
  }
  return records;
}

int FeatureSelector::dimension(const FeederTopology& topo) const {
  switch (mode) {
    case FeatureMode::Local:
      return 4;
    case FeatureMode::Global:
      return 3 * topo.num_load_buses();
    case FeatureMode::Hybrid:
      return 4 + static_cast<int>(lines.size());
  }
  throw std::logic_error("unreachable feature mode");
}

Eigen::VectorXd feature_vector(const ScenarioRecord& record, double qbar_n,
                               int bus, const FeatureSelector& selector,
                               const FeederTopology& topo) {
  if (bus < 1 || bus >= topo.num_buses() || topo.rating(bus) <= 0.0)
    throw std::invalid_argument("bus " + std::to_string(bus) +
                                " does not host an inverter");
  const int n = topo.num_load_buses();
  if (selector.mode == FeatureMode::Global) {
    Eigen::VectorXd z(3 * n);
    z << record.p_c, record.q_c, record.p_g;
    return z;
  }
  Eigen::VectorXd local(4);
  local << record.p_g[bus - 1], qbar_n, record.p_c[bus - 1], record.q_c[bus - 1];
  if (selector.mode == FeatureMode::Local) return local;

  std::vector<int> line_indices;
  for (const auto& [from, to] : selector.lines)
    line_indices.push_back(topo.line_index(from, to));
  GridState state{record.p_g, record.p_c, record.q_c, Eigen::VectorXd::Zero(n)};
  const Eigen::VectorXd flows = line_flow_features(state, topo, line_indices);
  Eigen::VectorXd z(4 + flows.size());
  z << local, flows;
  return z;
}

FeatureSet select_features(const ScenarioWindow& window,
                           const FeatureSelector& selector,
                           const FeederTopology& topo) {
  FeatureSet features;
  features.buses = topo.inverter_buses();
  const int dim = selector.dimension(topo);
  for (int bus : features.buses) {
    Eigen::MatrixXd z(window.size(), dim);
    for (int t = 0; t < window.size(); ++t)
      z.row(t) = feature_vector(window.records[t], window.qbar(t, bus - 1), bus,
                                selector, topo);
    features.z.push_back(std::move(z));
  }
  return features;
}

Eigen::VectorXd FeatureStandardizer::apply(const Eigen::VectorXd& z) const {
  if (z.size() != mean.size())
    throw std::invalid_argument("standardizer dimension mismatch");
  return (z - mean).cwiseQuotient(std);
}

Eigen::VectorXd FeatureStandardizer::invert(const Eigen::VectorXd& z) const {
  if (z.size() != mean.size())
    throw std::invalid_argument("standardizer dimension mismatch");
  return z.cwiseProduct(std) + mean;
}

Eigen::MatrixXd FeatureStandardizer::apply_rows(const Eigen::MatrixXd& rows) const {
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index t = 0; t < rows.rows(); ++t)
    out.row(t) = apply(rows.row(t).transpose()).transpose();
  return out;
}

FeatureStandardizer fit_standardizer(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2)
    throw std::invalid_argument("standardizer needs at least two scenarios");
  FeatureStandardizer st;
  st.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - st.mean.transpose();
  st.std = (centered.array().square().colwise().sum() /
            static_cast<double>(rows.rows() - 1))
               .sqrt()
               .matrix()
               .transpose();
  st.std = st.std.cwiseMax(1e-8);
  return st;
}

}  // namespace kervolt
