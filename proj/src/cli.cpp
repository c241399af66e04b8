#include "kervolt/cli.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "kervolt/csv.hpp"
#include "kervolt/feeder.hpp"
#include "kervolt/policy.hpp"
#include "kervolt/simulator.hpp"

namespace kervolt::cli {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) parts.push_back(part);
  return parts;
}

FeatureSelector parse_features(const std::string& text) {
  FeatureSelector selector;
  if (text == "local") {
    selector.mode = FeatureMode::Local;
  } else if (text == "global") {
    selector.mode = FeatureMode::Global;
  } else if (text.rfind("hybrid:", 0) == 0) {
    selector.mode = FeatureMode::Hybrid;
    for (const std::string& pair : split(text.substr(7), ',')) {
      const auto ends = split(pair, '-');
      if (ends.size() != 2)
        throw CLI::ValidationError("--features",
                                   "hybrid lines must look like `1-2,1-3`");
      selector.lines.push_back({std::stoi(ends[0]), std::stoi(ends[1])});
    }
    if (selector.lines.empty())
      throw CLI::ValidationError("--features", "hybrid needs at least one line");
  } else {
    throw CLI::ValidationError(
        "--features", "expected local, global, or hybrid:<from-to list>");
  }
  return selector;
}

KernelSpec parse_kernel(const std::string& text) {
  KernelSpec spec;
  if (text == "linear") {
    spec.kind = KernelKind::Linear;
  } else if (text.rfind("poly:", 0) == 0) {
    const auto params = split(text.substr(5), ',');
    if (params.size() != 2)
      throw CLI::ValidationError("--kernel", "expected poly:<beta>,<gamma>");
    spec.kind = KernelKind::Polynomial;
    spec.beta = std::stoi(params[0]);
    spec.gamma = std::stod(params[1]);
  } else if (text.rfind("gaussian:", 0) == 0) {
    spec.kind = KernelKind::Gaussian;
    spec.gamma = std::stod(text.substr(9));
  } else if (text == "gaussian") {
    spec.kind = KernelKind::Gaussian;
  } else {
    throw CLI::ValidationError(
        "--kernel", "expected linear, poly:<beta>,<gamma>, or gaussian:<gamma>");
  }
  spec.validate();
  return spec;
}

std::vector<MethodSpec> parse_methods(const std::string& text) {
  std::vector<MethodSpec> methods;
  for (const std::string& name : split(text, ',')) {
    MethodSpec spec;
    if (name == "optimal") {
      spec.kind = MethodKind::Optimal;
    } else if (name == "gaussian") {
      spec.kind = MethodKind::KernelGaussian;
    } else if (name == "linear") {
      spec.kind = MethodKind::KernelLinear;
    } else if (name == "zero") {
      spec.kind = MethodKind::Zero;
    } else if (name == "stale") {
      spec.kind = MethodKind::Stale;
    } else if (name.rfind("stale:", 0) == 0) {
      spec.kind = MethodKind::Stale;
      spec.stale_delay_min = std::stoi(name.substr(6));
    } else {
      throw CLI::ValidationError("--methods", "unknown method `" + name + "`");
    }
    methods.push_back(spec);
  }
  if (methods.empty())
    throw CLI::ValidationError("--methods", "at least one method required");
  return methods;
}

std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  for (const std::string& cell : split(text, ',')) values.push_back(std::stod(cell));
  if (values.empty()) throw CLI::ValidationError(flag, "empty grid");
  return values;
}

std::pair<int, int> parse_hours(const std::string& text) {
  const auto parts = split(text, '-');
  if (parts.size() != 2)
    throw CLI::ValidationError("--hours", "expected <start>-<end>, e.g. 11-18");
  const double lo = std::stod(parts[0]);
  const double hi = std::stod(parts[1]);
  return {static_cast<int>(lo * 60.0), static_cast<int>(hi * 60.0)};
}

std::string feature_text(const FeatureSelector& selector) {
  switch (selector.mode) {
    case FeatureMode::Local:
      return "local";
    case FeatureMode::Global:
      return "global";
    case FeatureMode::Hybrid: {
      std::string text = "hybrid:";
      for (std::size_t i = 0; i < selector.lines.size(); ++i)
        text += (i ? "," : "") + std::to_string(selector.lines[i].first) + "-" +
                std::to_string(selector.lines[i].second);
      return text;
    }
  }
  throw std::logic_error("unreachable feature mode");
}

void write_manifest(const std::string& out_path, json manifest) {
  manifest["tool"] = "kervolt";
  csv::AtomicFile file(out_path + ".manifest.json");
  file.stream() << manifest.dump(1) << "\n";
  file.commit();
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
  csv::AtomicFile file(path);
  file.stream() << "bus";
  for (Eigen::Index j = 0; j < m.cols(); ++j) file.stream() << ',' << j + 1;
  file.stream() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    file.stream() << i + 1;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      file.stream() << ',' << csv::g17(m(i, j));
    file.stream() << '\n';
  }
  file.commit();
}

// Shared flag bundle for subcommands operating on one feeder + timeseries.
struct CommonArgs {
  std::string lines_csv;
  std::string buses_csv;
  std::string timeseries;
  std::string out;
  double lambda = 0.5;
  int window = 30;
  std::uint64_t seed = 0;
  std::string features = "local";
  std::string kernel = "gaussian";
};

void add_feeder_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--lines", args.lines_csv, "line list CSV (from,to,r_pu,x_pu)")
      ->required();
  cmd->add_option("--buses", args.buses_csv, "bus rating CSV (bus,s_rating_pu)")
      ->required();
}

ScenarioWindow load_window(const CommonArgs& args, const FeederTopology& topo,
                           int start_min, int window_min) {
  const auto records = load_timeseries(args.timeseries, topo.num_load_buses());
  std::vector<ScenarioRecord> slice;
  for (const ScenarioRecord& rec : records)
    if (rec.t_min >= start_min && rec.t_min < start_min + window_min)
      slice.push_back(rec);
  if (static_cast<int>(slice.size()) != window_min)
    throw std::runtime_error("timeseries does not cover minutes [" +
                             std::to_string(start_min) + ", " +
                             std::to_string(start_min + window_min) + ")");
  return make_window(std::move(slice), topo);
}

int run_parsed(const std::vector<std::string>& args);

}  // namespace

namespace {

int run_parsed(const std::vector<std::string>& args) {
  CLI::App app{"Kernel-based reactive power control for radial feeders"};
  app.require_subcommand(1);

  CommonArgs common;

  // --- sensitivities ---
  auto* cmd_sens = app.add_subcommand(
      "sensitivities", "Build the voltage sensitivity matrices R and X");
  add_feeder_flags(cmd_sens, common);
  cmd_sens->add_option("--out", common.out, "output prefix (writes .R.csv/.X.csv)")
      ->required();

  // --- dispatch ---
  auto* cmd_dispatch = app.add_subcommand(
      "dispatch", "Per-scenario optimal reactive dispatch at one minute");
  add_feeder_flags(cmd_dispatch, common);
  cmd_dispatch->add_option("--timeseries", common.timeseries, "timeseries CSV")
      ->required();
  int dispatch_minute = 0;
  cmd_dispatch->add_option("--minute", dispatch_minute, "minute of day")->required();
  cmd_dispatch->add_option("--lambda", common.lambda, "objective weight")->capture_default_str();
  cmd_dispatch->add_option("--out", common.out, "setpoint CSV (bus,q_g_pu)")
      ->required();

  // --- train ---
  auto* cmd_train =
      app.add_subcommand("train", "Train kernel policies on one window");
  add_feeder_flags(cmd_train, common);
  cmd_train->add_option("--timeseries", common.timeseries)->required();
  int train_start = 0;
  double train_mu = 1e-3;
  bool unsafe_mu_zero = false;
  cmd_train->add_option("--start", train_start, "window start minute")->required();
  cmd_train->add_option("--window", common.window, "window length, minutes")->capture_default_str();
  cmd_train->add_option("--lambda", common.lambda, "objective weight")->capture_default_str();
  cmd_train->add_option("--kernel", common.kernel,
                        "linear | poly:<beta>,<gamma> | gaussian:<gamma>")->capture_default_str();
  cmd_train->add_option("--features", common.features,
                        "local | global | hybrid:<from-to list>")->capture_default_str();
  cmd_train->add_option("--mu", train_mu, "regularization weight")->capture_default_str();
  cmd_train->add_flag("--unsafe-mu-zero", unsafe_mu_zero,
                      "allow mu = 0 (test oracles only)");
  cmd_train->add_option("--out", common.out, "policy file")->required();

  // --- crossval ---
  auto* cmd_cv = app.add_subcommand(
      "crossval", "k-fold cross-validation over the (mu, gamma) grid");
  add_feeder_flags(cmd_cv, common);
  cmd_cv->add_option("--timeseries", common.timeseries)->required();
  int cv_start = 0;
  std::string mu_grid_text, gamma_grid_text;
  int cv_folds = 5;
  int cv_threads = 1;
  cmd_cv->add_option("--start", cv_start, "window start minute")->required();
  cmd_cv->add_option("--window", common.window, "window length, minutes")->capture_default_str();
  cmd_cv->add_option("--lambda", common.lambda, "objective weight")->capture_default_str();
  cmd_cv->add_option("--kernel", common.kernel, "kernel family")->capture_default_str();
  cmd_cv->add_option("--features", common.features, "feature selector")->capture_default_str();
  cmd_cv->add_option("--mu-grid", mu_grid_text, "comma-separated mu values");
  cmd_cv->add_option("--gamma-grid", gamma_grid_text,
                     "comma-separated Gaussian width multipliers");
  cmd_cv->add_option("--folds", cv_folds, "fold count")->capture_default_str();
  cmd_cv->add_option("--seed", common.seed, "fold shuffle seed")->capture_default_str();
  cmd_cv->add_option("--threads", cv_threads, "worker cap")->capture_default_str();
  cmd_cv->add_option("--out", common.out, "report CSV (mu,gamma,score)")->required();

  // --- simulate ---
  auto* cmd_sim = app.add_subcommand(
      "simulate", "Rolling-horizon comparison against optimal dispatch");
  add_feeder_flags(cmd_sim, common);
  cmd_sim->add_option("--timeseries", common.timeseries)->required();
  std::string methods_text = "optimal,gaussian,linear,stale:5,zero";
  std::string hours_text = "11-18";
  int sim_retrain = 30;
  int sim_folds = 5;
  int sim_threads = 1;
  bool cv_once = false;
  bool no_cv = false;
  double fixed_mu = 1e-3, fixed_gamma_mult = 1.0;
  std::string sim_mu_grid, sim_gamma_grid;
  cmd_sim->add_option("--methods", methods_text,
                      "subset of optimal,gaussian,linear,stale:<min>,zero")->capture_default_str();
  cmd_sim->add_option("--hours", hours_text, "reporting hours, e.g. 11-18")->capture_default_str();
  cmd_sim->add_option("--window", common.window, "training window, minutes")->capture_default_str();
  cmd_sim->add_option("--retrain", sim_retrain, "retrain period, minutes")->capture_default_str();
  cmd_sim->add_option("--lambda", common.lambda, "objective weight")->capture_default_str();
  cmd_sim->add_option("--features", common.features, "feature selector")->capture_default_str();
  cmd_sim->add_option("--mu-grid", sim_mu_grid, "CV mu grid");
  cmd_sim->add_option("--gamma-grid", sim_gamma_grid, "CV gamma multipliers");
  cmd_sim->add_option("--folds", sim_folds, "CV fold count")->capture_default_str();
  cmd_sim->add_flag("--cv-once", cv_once, "tune on the first window only");
  cmd_sim->add_flag("--no-cv", no_cv, "skip CV; use --mu/--gamma-mult");
  cmd_sim->add_option("--mu", fixed_mu, "fixed mu when --no-cv")->capture_default_str();
  cmd_sim->add_option("--gamma-mult", fixed_gamma_mult,
                      "fixed Gaussian width multiplier when --no-cv")->capture_default_str();
  cmd_sim->add_option("--seed", common.seed, "run seed")->capture_default_str();
  cmd_sim->add_option("--threads", sim_threads, "worker cap")->capture_default_str();
  cmd_sim->add_option("--out", common.out, "gap report CSV")->required();

  // --- gen-data ---
  auto* cmd_gen = app.add_subcommand(
      "gen-data", "Synthesize a day of minute-sampled feeder data");
  add_feeder_flags(cmd_gen, common);
  SynthesisOptions synth;
  double pf_lo = 0.90, pf_hi = 0.95;
  std::string pf_text;
  cmd_gen->add_option("--seed", common.seed, "generator seed")->capture_default_str();
  cmd_gen->add_option("--noon", synth.solar_noon_min, "solar noon, minute")->capture_default_str();
  cmd_gen->add_option("--daylight-halfwidth", synth.daylight_halfwidth_min,
                      "half daylight span, minutes")->capture_default_str();
  cmd_gen->add_option("--clear-sky-peak", synth.clear_sky_peak,
                      "noon output as fraction of rating")->capture_default_str();
  cmd_gen->add_option("--cloud-noise", synth.cloud_noise, "solar noise level")->capture_default_str();
  cmd_gen->add_option("--load-scale", synth.load_scale, "per-bus load scale, p.u.")->capture_default_str();
  cmd_gen->add_option("--load-base", synth.load_base, "night base level")->capture_default_str();
  cmd_gen->add_option("--morning-hump", synth.morning_hump, "morning amplitude")->capture_default_str();
  cmd_gen->add_option("--evening-hump", synth.evening_hump, "evening amplitude")->capture_default_str();
  cmd_gen->add_option("--load-jitter", synth.load_jitter, "load noise level")->capture_default_str();
  cmd_gen->add_option("--pf-range", pf_text, "power factor range lo:hi")->capture_default_str()
      ->default_str("0.90:0.95");
  cmd_gen->add_option("--out", common.out, "timeseries CSV")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (cmd_sens->parsed()) {
    const FeederTopology topo = load_feeder(common.lines_csv, common.buses_csv);
    const Sensitivities sens = build_sensitivities(topo);
    write_matrix_csv(sens.R, common.out + ".R.csv");
    write_matrix_csv(sens.X, common.out + ".X.csv");
    write_manifest(common.out,
                   json{{"command", "sensitivities"},
                        {"lines", common.lines_csv},
                        {"buses", common.buses_csv},
                        {"outputs", {common.out + ".R.csv", common.out + ".X.csv"}}});
    return 0;
  }

  if (cmd_dispatch->parsed()) {
    const FeederTopology topo = load_feeder(common.lines_csv, common.buses_csv);
    const Sensitivities sens = build_sensitivities(topo);
    const CostTransform ct = build_cost_transform(sens, common.lambda);
    const ScenarioWindow window = load_window(common, topo, dispatch_minute, 1);
    const ScenarioRecord& rec = window.records.front();
    const Eigen::VectorXd y = compute_y(rec.p_g, rec.p_c, rec.q_c, ct, sens);
    Eigen::VectorXd qbar = Eigen::VectorXd::Zero(topo.num_load_buses());
    for (int j = 0; j < topo.num_load_buses(); ++j)
      if (topo.inverter_ratings()[j] > 0.0)
        qbar[j] = reactive_limit(topo.inverter_ratings()[j], rec.p_g[j]);
    const Eigen::VectorXd q = optimal_dispatch(ct, y, qbar);
    const double cost = (ct.C * q + y).squaredNorm();
    csv::AtomicFile file(common.out);
    file.stream() << "bus,q_g_pu\n";
    for (int j = 0; j < q.size(); ++j)
      file.stream() << j + 1 << ',' << csv::g17(q[j]) << '\n';
    file.commit();
    std::cout << "dispatch cost: " << csv::g17(cost) << "\n";
    write_manifest(common.out, json{{"command", "dispatch"},
                                    {"timeseries", common.timeseries},
                                    {"minute", dispatch_minute},
                                    {"lambda", common.lambda},
                                    {"cost", cost},
                                    {"outputs", {common.out}}});
    return 0;
  }

  if (cmd_train->parsed()) {
    if (train_mu == 0.0 && !unsafe_mu_zero)
      throw CLI::ValidationError("--mu", "mu = 0 requires --unsafe-mu-zero");
    const FeederTopology topo = load_feeder(common.lines_csv, common.buses_csv);
    const Sensitivities sens = build_sensitivities(topo);
    const CostTransform ct = build_cost_transform(sens, common.lambda);
    const ScenarioWindow window =
        load_window(common, topo, train_start, common.window);
    TrainOptions options;
    options.allow_zero_mu = unsafe_mu_zero;
    KernelChoice choice;
    choice.spec = parse_kernel(common.kernel);
    const PolicySet set =
        train_policies(window, topo, sens, ct, parse_features(common.features),
                       choice, train_mu, options);
    save_policies(set, common.out);
    std::cout << "training objective: " << csv::g17(set.training_objective)
              << "\n";
    write_manifest(common.out, json{{"command", "train"},
                                    {"timeseries", common.timeseries},
                                    {"start", train_start},
                                    {"window", common.window},
                                    {"lambda", common.lambda},
                                    {"kernel", common.kernel},
                                    {"features", common.features},
                                    {"mu", train_mu},
                                    {"training_objective", set.training_objective},
                                    {"fit_term", set.fit_term},
                                    {"outputs", {common.out}}});
    return 0;
  }

  if (cmd_cv->parsed()) {
    const FeederTopology topo = load_feeder(common.lines_csv, common.buses_csv);
    const Sensitivities sens = build_sensitivities(topo);
    const CostTransform ct = build_cost_transform(sens, common.lambda);
    const ScenarioWindow window = load_window(common, topo, cv_start, common.window);
    CvGrid grid;
    grid.folds = cv_folds;
    if (!mu_grid_text.empty()) grid.mu_values = parse_grid(mu_grid_text, "--mu-grid");
    if (!gamma_grid_text.empty())
      grid.gamma_multipliers = parse_grid(gamma_grid_text, "--gamma-grid");
    const CvSelection sel =
        grid_search(window, topo, sens, ct, parse_features(common.features),
                    parse_kernel(common.kernel), grid, common.seed, cv_threads);
    csv::AtomicFile file(common.out);
    file.stream() << "mu,gamma,score\n";
    for (const CvRow& row : sel.table)
      file.stream() << csv::g17(row.mu) << ',' << csv::g17(row.gamma) << ','
                    << csv::g17(row.score) << '\n';
    file.commit();
    std::cout << "selected mu=" << csv::g17(sel.mu)
              << " gamma=" << csv::g17(sel.gamma)
              << " score=" << csv::g17(sel.score) << "\n";
    write_manifest(common.out,
                   json{{"command", "crossval"},
                        {"timeseries", common.timeseries},
                        {"start", cv_start},
                        {"window", common.window},
                        {"lambda", common.lambda},
                        {"kernel", common.kernel},
                        {"features", common.features},
                        {"folds", cv_folds},
                        {"seed", common.seed},
                        {"selected", {{"mu", sel.mu}, {"gamma", sel.gamma}}},
                        {"outputs", {common.out}}});
    return 0;
  }

  if (cmd_sim->parsed()) {
    const FeederTopology topo = load_feeder(common.lines_csv, common.buses_csv);
    const auto records = load_timeseries(common.timeseries, topo.num_load_buses());
    SimulationConfig config;
    config.train_window_min = common.window;
    config.retrain_period_min = sim_retrain;
    config.lambda = common.lambda;
    config.methods = parse_methods(methods_text);
    config.features = parse_features(common.features);
    std::tie(config.start_minute, config.end_minute) = parse_hours(hours_text);
    config.cv.enabled = !no_cv;
    config.cv.once = cv_once;
    config.cv.grid.folds = sim_folds;
    if (!sim_mu_grid.empty())
      config.cv.grid.mu_values = parse_grid(sim_mu_grid, "--mu-grid");
    if (!sim_gamma_grid.empty())
      config.cv.grid.gamma_multipliers = parse_grid(sim_gamma_grid, "--gamma-grid");
    config.cv.fixed_mu = fixed_mu;
    config.cv.fixed_gamma_mult = fixed_gamma_mult;
    config.seed = common.seed;
    config.threads = sim_threads;
    const MethodResult result = run_simulation(topo, records, config);
    cost_gap_report(result, common.out);
    json tunings = json::array();
    for (const WindowTuning& t : result.tunings)
      tunings.push_back(json{{"boundary_min", t.boundary_min},
                             {"method", t.method},
                             {"mu", t.mu},
                             {"gamma", t.gamma},
                             {"score", t.score}});
    write_manifest(common.out, json{{"command", "simulate"},
                                    {"timeseries", common.timeseries},
                                    {"methods", methods_text},
                                    {"hours", hours_text},
                                    {"window", common.window},
                                    {"retrain", sim_retrain},
                                    {"lambda", common.lambda},
                                    {"features", common.features},
                                    {"cv_once", cv_once},
                                    {"no_cv", no_cv},
                                    {"folds", sim_folds},
                                    {"seed", common.seed},
                                    {"threads", sim_threads},
                                    {"skipped_steps", result.skipped_steps},
                                    {"tunings", tunings},
                                    {"outputs", {common.out}}});
    return 0;
  }

  if (cmd_gen->parsed()) {
    if (!pf_text.empty()) {
      const auto parts = split(pf_text, ':');
      if (parts.size() != 2)
        throw CLI::ValidationError("--pf-range", "expected lo:hi");
      pf_lo = std::stod(parts[0]);
      pf_hi = std::stod(parts[1]);
    }
    const FeederTopology topo = load_feeder(common.lines_csv, common.buses_csv);
    auto records = synthesize_day(topo, common.seed, synth);
    draw_reactive_loads(records, pf_lo, pf_hi, common.seed);
    save_timeseries(records, common.out);
    write_manifest(common.out,
                   json{{"command", "gen-data"},
                        {"seed", common.seed},
                        {"noon", synth.solar_noon_min},
                        {"daylight_halfwidth", synth.daylight_halfwidth_min},
                        {"clear_sky_peak", synth.clear_sky_peak},
                        {"cloud_noise", synth.cloud_noise},
                        {"load_scale", synth.load_scale},
                        {"load_base", synth.load_base},
                        {"morning_hump", synth.morning_hump},
                        {"evening_hump", synth.evening_hump},
                        {"load_jitter", synth.load_jitter},
                        {"pf_range", {pf_lo, pf_hi}},
                        {"outputs", {common.out}}});
    return 0;
  }

  std::cerr << "error: no subcommand selected\n";
  return 2;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    return run_parsed(args);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace kervolt::cli
