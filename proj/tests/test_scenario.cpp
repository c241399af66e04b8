#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "kervolt/log.hpp"
#include "kervolt/scenario.hpp"
#include "support/oracles.hpp"

using namespace kervolt;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "kervolt_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

FeederTopology two_bus_feeder() {
  return FeederTopology(3, {{0, 1, 0.1, 0.2}, {1, 2, 0.1, 0.2}}, 1.0,
                        (Eigen::VectorXd(2) << 0.5, 0.4).finished());
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("reactive limit") {
  CHECK(reactive_limit(5.0, 3.0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(reactive_limit(0.7, 0.0) == doctest::Approx(0.7).epsilon(1e-14));
  log::reset_warn_count();
  CHECK(reactive_limit(5.0, 6.0) == 0.0);
  CHECK(log::warn_count() == 1);
  CHECK_THROWS(reactive_limit(-1.0, 0.0));
  CHECK_THROWS(reactive_limit(1.0, -0.5));
}

TEST_CASE("timeseries loader") {
  SUBCASE("header-only file gives an empty list") {
    const auto path = temp_file("empty.csv");
    std::ofstream(path) << "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n";
    CHECK(load_timeseries(path.string(), 2).empty());
  }

  SUBCASE("well-formed file echoes values") {
    const auto path = temp_file("echo.csv");
    std::ofstream(path) << "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n"
                           "1,2,0.21,0.05,0.31\n"
                           "0,1,0.10,0.02,0.30\n"
                           "0,2,0.20,0.04,0.00\n"
                           "1,1,0.11,,0.32\n"
                           "2,1,0.12,0.03,0.33\n"
                           "2,2,0.22,0.06,0.34\n";
    const auto records = load_timeseries(path.string(), 2);
    REQUIRE(records.size() == 3);
    CHECK(records[0].t_min == 0);
    CHECK(records[1].t_min == 1);
    CHECK(records[0].p_c[0] == doctest::Approx(0.10));
    CHECK(records[0].q_c[1] == doctest::Approx(0.04));
    CHECK(records[1].q_c[0] == 0.0);  // empty q cell
    CHECK(records[2].p_g[1] == doctest::Approx(0.34));
  }

  SUBCASE("missing cells are zero with a warning") {
    const auto path = temp_file("gaps.csv");
    std::ofstream(path) << "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n"
                           "0,1,0.10,0.02,0.30\n";
    log::reset_warn_count();
    const auto records = load_timeseries(path.string(), 2);
    REQUIRE(records.size() == 1);
    CHECK(records[0].p_c[1] == 0.0);
    CHECK(log::warn_count() == 1);
  }

  SUBCASE("duplicate keys name the row") {
    const auto path = temp_file("dup.csv");
    std::ofstream(path) << "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n"
                           "0,1,0.10,0.02,0.30\n"
                           "0,1,0.11,0.02,0.30\n";
    CHECK_THROWS_WITH_AS(load_timeseries(path.string(), 2),
                         doctest::Contains(":3"), std::runtime_error);
  }

  SUBCASE("malformed numbers are rejected") {
    const auto path = temp_file("bad.csv");
    std::ofstream(path) << "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n"
                           "0,1,zap,0.02,0.30\n";
    CHECK_THROWS(load_timeseries(path.string(), 2));
  }
}

TEST_CASE("scale_profiles") {
  std::vector<ScenarioRecord> records(3);
  for (int t = 0; t < 3; ++t) {
    records[t].t_min = t;
    records[t].p_c = (Eigen::VectorXd(2) << 1.0 + t * 0.5, 0.3).finished();
    records[t].p_g = (Eigen::VectorXd(2) << 0.2, 0.1).finished();
    records[t].q_c = Eigen::VectorXd::Zero(2);
  }

  SUBCASE("peak lands on fraction times benchmark") {
    // peak 2.0, benchmark 1.0, fraction 0.5 -> factor 0.25 on both series
    scale_profiles(records, 0.5, (Eigen::VectorXd(2) << 1.0, 0.0).finished());
    double peak = 0.0;
    for (const auto& rec : records) peak = std::max(peak, rec.p_c[0]);
    CHECK(peak == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(records[0].p_c[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(records[0].p_g[0] == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(records[0].p_c[1] == doctest::Approx(0.3));  // untouched bus
  }

  SUBCASE("identity when the benchmark equals the current peak") {
    auto copy = records;
    scale_profiles(copy, 1.0, (Eigen::VectorXd(2) << 2.0, 0.3).finished());
    for (int t = 0; t < 3; ++t)
      CHECK((copy[t].p_c - records[t].p_c).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("random series hit the target within 1e-12") {
    Rng rng(23);
    std::vector<ScenarioRecord> series(20);
    for (int t = 0; t < 20; ++t) {
      series[t].t_min = t;
      series[t].p_c = oracles::random_vector(rng, 3).cwiseAbs();
      series[t].p_g = oracles::random_vector(rng, 3).cwiseAbs();
      series[t].q_c = Eigen::VectorXd::Zero(3);
    }
    const Eigen::VectorXd bench = (Eigen::VectorXd(3) << 1.2, 0.8, 2.0).finished();
    scale_profiles(series, 0.5, bench);
    for (int j = 0; j < 3; ++j) {
      double peak = 0.0;
      for (const auto& rec : series) peak = std::max(peak, rec.p_c[j]);
      CHECK(peak == doctest::Approx(0.5 * bench[j]).epsilon(1e-12));
    }
  }

  SUBCASE("all-zero series cannot be scaled") {
    for (auto& rec : records) rec.p_c[0] = 0.0;
    CHECK_THROWS(scale_profiles(records, 0.5,
                                (Eigen::VectorXd(2) << 1.0, 0.0).finished()));
  }
}

TEST_CASE("draw_reactive_loads") {
  std::vector<ScenarioRecord> records(4);
  for (int t = 0; t < 4; ++t) {
    records[t].t_min = t;
    records[t].p_c = (Eigen::VectorXd(2) << 0.9, 0.5).finished();
    records[t].p_g = Eigen::VectorXd::Zero(2);
    records[t].q_c = Eigen::VectorXd::Zero(2);
  }

  SUBCASE("unity power factor forces zero reactive load") {
    auto copy = records;
    draw_reactive_loads(copy, 1.0, 1.0, 99);
    for (const auto& rec : copy) CHECK(rec.q_c.cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("fixed 0.9 power factor matches the trig identity") {
    auto copy = records;
    draw_reactive_loads(copy, 0.9, 0.9, 99);
    const double expected = 0.9 * std::tan(std::acos(0.9));
    CHECK(expected == doctest::Approx(0.43589).epsilon(1e-4));
    CHECK(copy[0].q_c[0] == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("same seed reproduces the series") {
    auto a = records, b = records;
    draw_reactive_loads(a, 0.90, 0.95, 123);
    draw_reactive_loads(b, 0.90, 0.95, 123);
    for (int t = 0; t < 4; ++t)
      CHECK((a[t].q_c - b[t].q_c).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("bad ranges and empty input are rejected") {
    std::vector<ScenarioRecord> empty;
    CHECK_THROWS(draw_reactive_loads(empty, 0.9, 0.95, 1));
    CHECK_THROWS(draw_reactive_loads(records, 0.0, 0.95, 1));
    CHECK_THROWS(draw_reactive_loads(records, 0.95, 0.9, 1));
  }
}

TEST_CASE("synthesize_day") {
  const FeederTopology topo = two_bus_feeder();
  SynthesisOptions options;
  options.cloud_noise = 0.0;
  options.load_jitter = 0.0;

  SUBCASE("no sun at midnight") {
    const auto records = synthesize_day(topo, 1, options);
    REQUIRE(records.size() == 1440);
    CHECK(records[0].p_g.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("clear-sky apex hits the configured peak at noon") {
    options.clear_sky_peak = 0.8;
    const auto records = synthesize_day(topo, 1, options);
    CHECK(records[options.solar_noon_min].p_g[0] ==
          doctest::Approx(0.8 * 0.5).epsilon(1e-12));
    CHECK(records[options.solar_noon_min].p_g[1] ==
          doctest::Approx(0.8 * 0.4).epsilon(1e-12));
  }

  SUBCASE("deep night load is flat") {
    options.load_jitter = 0.3;
    const auto records = synthesize_day(topo, 5, options);
    for (int t = 60; t < 240; ++t)
      CHECK((records[t].p_c - records[60].p_c).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("same seed gives identical days") {
    options.cloud_noise = 0.2;
    options.load_jitter = 0.2;
    const auto a = synthesize_day(topo, 42, options);
    const auto b = synthesize_day(topo, 42, options);
    for (int t = 0; t < 1440; ++t) {
      CHECK((a[t].p_g - b[t].p_g).cwiseAbs().maxCoeff() == 0.0);
      CHECK((a[t].p_c - b[t].p_c).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("feature selection") {
  const FeederTopology topo = two_bus_feeder();

  ScenarioRecord rec;
  rec.t_min = 0;
  rec.p_g = (Eigen::VectorXd(2) << 0.3, 0.1).finished();
  rec.p_c = (Eigen::VectorXd(2) << 0.2, 0.15).finished();
  rec.q_c = (Eigen::VectorXd(2) << 0.1, 0.05).finished();
  const ScenarioWindow window = make_window({rec}, topo);

  SUBCASE("local features follow the documented order") {
    FeatureSelector selector;  // local
    const FeatureSet set = select_features(window, selector, topo);
    REQUIRE(set.buses == std::vector<int>{1, 2});
    // s̄=0.5, p_g=0.3 -> headroom 0.4
    const Eigen::VectorXd z = set.z[0].row(0).transpose();
    CHECK(z[0] == doctest::Approx(0.3));
    CHECK(z[1] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(z[2] == doctest::Approx(0.2));
    CHECK(z[3] == doctest::Approx(0.1));
  }

  SUBCASE("global features stack loads then reactive then solar") {
    FeatureSelector selector;
    selector.mode = FeatureMode::Global;
    CHECK(selector.dimension(topo) == 6);
    const FeatureSet set = select_features(window, selector, topo);
    Eigen::VectorXd expected(6);
    expected << 0.2, 0.15, 0.1, 0.05, 0.3, 0.1;
    CHECK((set.z[1].row(0).transpose() - expected).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("hybrid features append the requested flows") {
    FeatureSelector selector;
    selector.mode = FeatureMode::Hybrid;
    selector.lines = {{0, 1}, {1, 2}, {2, 1}};
    CHECK(selector.dimension(topo) == 7);
    const FeatureSet set = select_features(window, selector, topo);
    CHECK(set.z[0].cols() == 7);
    // flow on (0,1): -(p_g - p_c) summed over both buses
    CHECK(set.z[0](0, 4) == doctest::Approx(-(0.3 - 0.2) - (0.1 - 0.15)));
  }

  SUBCASE("inverter-less bus is rejected") {
    FeatureSelector selector;
    FeederTopology bare(3, {{0, 1, 0.1, 0.2}, {1, 2, 0.1, 0.2}}, 1.0,
                        (Eigen::VectorXd(2) << 0.0, 0.4).finished());
    CHECK_THROWS(feature_vector(rec, 0.0, 1, selector, bare));
  }
}

TEST_CASE("standardizer") {
  Eigen::MatrixXd rows(4, 3);
  rows << 1.0, 5.0, 2.0,
          2.0, 5.0, 4.0,
          3.0, 5.0, 6.0,
          4.0, 5.0, 8.0;
  const FeatureStandardizer st = fit_standardizer(rows);

  SUBCASE("constant dimensions map to zero") {
    const Eigen::VectorXd z = st.apply(rows.row(0).transpose());
    CHECK(z[1] == 0.0);
  }

  SUBCASE("training data standardizes to mean zero, unit std") {
    const Eigen::MatrixXd standardized = st.apply_rows(rows);
    const Eigen::VectorXd mean = standardized.colwise().mean().transpose();
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-14);
    const double std0 = std::sqrt(
        (standardized.col(0).array() - mean[0]).square().sum() / 3.0);
    CHECK(std0 == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("round trip is the identity") {
    Rng rng(2);
    const Eigen::VectorXd z = oracles::random_vector(rng, 3);
    CHECK((st.invert(st.apply(z)) - z).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("a single scenario is rejected") {
    CHECK_THROWS(fit_standardizer(rows.topRows(1)));
  }
}

TEST_CASE("window reactive limits stay inside ratings") {
  Rng rng(31);
  const FeederTopology topo = oracles::random_tree(rng, 5);
  SynthesisOptions options;
  const auto records = synthesize_day(topo, 7, options);
  const ScenarioWindow window = make_window(records, topo);
  for (int t = 0; t < window.size(); ++t)
    for (int j = 0; j < topo.num_load_buses(); ++j) {
      CHECK(window.qbar(t, j) >= 0.0);
      CHECK(window.qbar(t, j) <= topo.inverter_ratings()[j] + 1e-12);
      const double pg = window.records[t].p_g[j];
      if (pg <= topo.inverter_ratings()[j] && topo.inverter_ratings()[j] > 0.0) {
        const double rating = topo.inverter_ratings()[j];
        CHECK(window.qbar(t, j) * window.qbar(t, j) + pg * pg ==
              doctest::Approx(rating * rating).epsilon(1e-10));
      }
    }
}

}  // TEST_SUITE
