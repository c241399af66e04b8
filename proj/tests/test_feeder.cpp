#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "kervolt/feeder.hpp"
#include "kervolt/rng.hpp"
#include "support/oracles.hpp"

using namespace kervolt;

namespace {

FeederTopology single_line() {
  return FeederTopology(2, {{0, 1, 0.1, 0.2}}, 1.0, Eigen::VectorXd::Constant(1, 1.0));
}

FeederTopology chain3() {
  return FeederTopology(3, {{0, 1, 0.1, 0.15}, {1, 2, 0.3, 0.45}}, 1.0,
                        Eigen::VectorXd::Constant(2, 1.0));
}

GridState random_state(Rng& rng, int n) {
  GridState state;
  state.p_g = oracles::random_vector(rng, n).cwiseAbs();
  state.p_c = oracles::random_vector(rng, n).cwiseAbs();
  state.q_c = oracles::random_vector(rng, n);
  state.q_g = oracles::random_vector(rng, n);
  return state;
}

}  // namespace

TEST_SUITE("feeder") {

TEST_CASE("single line sensitivities") {
  const Sensitivities sens = build_sensitivities(single_line());
  CHECK(sens.R.rows() == 1);
  CHECK(sens.R(0, 0) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(sens.X(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("chain sensitivities nest paths") {
  const Sensitivities sens = build_sensitivities(chain3());
  Eigen::MatrixXd expected(2, 2);
  expected << 0.1, 0.1, 0.1, 0.4;
  CHECK((sens.R - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("random trees match the path-intersection oracle") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = rng.uniform_int(2, 12);
    const FeederTopology topo = oracles::random_tree(rng, n);
    const Sensitivities sens = build_sensitivities(topo);
    const Sensitivities ref = oracles::path_intersection_sensitivities(topo);
    CHECK((sens.R - ref.R).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((sens.X - ref.X).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sens.R);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK((sens.R - sens.R.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("invalid topologies are rejected") {
  CHECK_THROWS(FeederTopology(3, {{0, 1, 0.1, 0.1}, {0, 1, 0.2, 0.2}}, 1.0,
                              Eigen::VectorXd::Zero(2)));
  CHECK_THROWS(FeederTopology(3, {{0, 1, 0.1, 0.1}, {2, 2, 0.2, 0.2}}, 1.0,
                              Eigen::VectorXd::Zero(2)));
  CHECK_THROWS(FeederTopology(2, {{0, 1, -0.1, 0.2}}, 1.0, Eigen::VectorXd::Zero(1)));
  CHECK_THROWS(FeederTopology(2, {{0, 1, 0.1, 0.2}}, 0.0, Eigen::VectorXd::Zero(1)));
}

TEST_CASE("voltage profile") {
  Rng rng(7);
  const FeederTopology topo = oracles::random_tree(rng, 6);
  const Sensitivities sens = build_sensitivities(topo);
  const int n = topo.num_load_buses();

  SUBCASE("zero injections give flat voltage") {
    GridState state{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                    Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    const Eigen::VectorXd v = voltage_profile(state, sens, 1.02);
    CHECK((v.array() - 1.02).abs().maxCoeff() < 1e-15);
  }

  SUBCASE("pure reactive injection isolates X") {
    GridState state{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                    Eigen::VectorXd::Zero(n), oracles::random_vector(rng, n)};
    const Eigen::VectorXd v = voltage_profile(state, sens, 1.0);
    const Eigen::VectorXd expected = sens.X * state.q_g;
    CHECK((v - expected - Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("random state matches the double-loop oracle") {
    const GridState state = random_state(rng, n);
    const Eigen::VectorXd v = voltage_profile(state, sens, 1.0);
    for (int m = 0; m < n; ++m) {
      double expected = 1.0;
      for (int k = 0; k < n; ++k)
        expected += sens.R(m, k) * (state.p_g[k] - state.p_c[k]) +
                    sens.X(m, k) * (state.q_g[k] - state.q_c[k]);
      CHECK(v[m] == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  SUBCASE("profile is affine in q") {
    GridState s1 = random_state(rng, n);
    GridState s2 = s1;
    s2.q_g = oracles::random_vector(rng, n);
    const double alpha = 0.3;
    GridState blend = s1;
    blend.q_g = alpha * s1.q_g + (1.0 - alpha) * s2.q_g;
    const Eigen::VectorXd expected = alpha * voltage_profile(s1, sens, 1.0) +
                                     (1.0 - alpha) * voltage_profile(s2, sens, 1.0);
    CHECK((voltage_profile(blend, sens, 1.0) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("evaluate_cost") {
  Rng rng(11);
  const FeederTopology topo = oracles::random_tree(rng, 5);
  const Sensitivities sens = build_sensitivities(topo);
  const int n = topo.num_load_buses();

  SUBCASE("zero state costs nothing") {
    GridState state{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                    Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    CHECK(evaluate_cost(state, sens, 0.5) == 0.0);
  }

  SUBCASE("lambda zero reduces to the loss form") {
    GridState state{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                    oracles::random_vector(rng, n), oracles::random_vector(rng, n)};
    const Eigen::VectorXd q = state.q_g - state.q_c;
    CHECK(evaluate_cost(state, sens, 0.0) ==
          doctest::Approx(q.dot(sens.R * q)).epsilon(1e-13));
  }

  SUBCASE("completed square differs by a constant") {
    const double lambda = 0.35;
    const CostTransform ct = build_cost_transform(sens, lambda);
    GridState state = random_state(rng, n);
    const Eigen::VectorXd y = compute_y(state.p_g, state.p_c, state.q_c, ct, sens);
    GridState zero_q = state;
    zero_q.q_g = Eigen::VectorXd::Zero(n);
    const double constant =
        y.squaredNorm() - evaluate_cost(zero_q, sens, lambda);
    for (int trial = 0; trial < 5; ++trial) {
      state.q_g = oracles::random_vector(rng, n);
      const double completed = (ct.C * state.q_g + y).squaredNorm();
      CHECK(completed - constant ==
            doctest::Approx(evaluate_cost(state, sens, lambda)).epsilon(1e-9));
    }
  }
}

TEST_CASE("cost transform") {
  SUBCASE("identity matrices give the identity root") {
    Sensitivities sens;
    sens.R = Eigen::MatrixXd::Identity(3, 3);
    sens.X = Eigen::MatrixXd::Identity(3, 3);
    const CostTransform ct = build_cost_transform(sens, 0.5);
    CHECK((ct.C - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("lambda one recovers X") {
    Rng rng(3);
    const FeederTopology topo = oracles::random_tree(rng, 7);
    const Sensitivities sens = build_sensitivities(topo);
    const CostTransform ct = build_cost_transform(sens, 1.0);
    CHECK((ct.C - sens.X).cwiseAbs().maxCoeff() <
          1e-10 * sens.X.cwiseAbs().maxCoeff());
  }

  SUBCASE("square reconstructs the blend for random SPD inputs") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = rng.uniform_int(2, 9);
      Sensitivities sens{oracles::random_spd(rng, n), oracles::random_spd(rng, n)};
      const double lambda = rng.uniform();
      const CostTransform ct = build_cost_transform(sens, lambda);
      const Eigen::MatrixXd target =
          (1.0 - lambda) * sens.R + lambda * sens.X * sens.X;
      const double rel = (ct.C * ct.C - target).norm() / target.norm();
      CHECK(rel <= 1e-10);
      CHECK((ct.C - ct.C.transpose()).cwiseAbs().maxCoeff() <
            1e-12 * ct.C.cwiseAbs().maxCoeff());
      CHECK((ct.C * ct.C_inv - Eigen::MatrixXd::Identity(n, n))
                .cwiseAbs()
                .maxCoeff() < 1e-8);
    }
  }

  SUBCASE("non-PSD input is rejected") {
    Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS(spd_sqrt(bad));
  }
}

TEST_CASE("compute_y") {
  Rng rng(13);
  const FeederTopology topo = oracles::random_tree(rng, 6);
  const Sensitivities sens = build_sensitivities(topo);
  const int n = topo.num_load_buses();

  SUBCASE("zero data gives zero y") {
    const CostTransform ct = build_cost_transform(sens, 0.5);
    const Eigen::VectorXd y =
        compute_y(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                  Eigen::VectorXd::Zero(n), ct, sens);
    CHECK(y.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("lambda one, no reactive load: y = R p and the cost is the deviation") {
    const CostTransform ct = build_cost_transform(sens, 1.0);
    const Eigen::VectorXd p_g = oracles::random_vector(rng, n).cwiseAbs();
    const Eigen::VectorXd p_c = oracles::random_vector(rng, n).cwiseAbs();
    const Eigen::VectorXd y =
        compute_y(p_g, p_c, Eigen::VectorXd::Zero(n), ct, sens);
    const Eigen::VectorXd rp = sens.R * (p_g - p_c);
    CHECK((y - rp).cwiseAbs().maxCoeff() < 1e-9);
    GridState state{p_g, p_c, Eigen::VectorXd::Zero(n),
                    oracles::random_vector(rng, n)};
    const double completed = (ct.C * state.q_g + y).squaredNorm();
    CHECK(completed ==
          doctest::Approx(evaluate_cost(state, sens, 1.0)).epsilon(1e-8));
  }

  SUBCASE("completing the square leaves a q-independent constant") {
    for (int trial = 0; trial < 3; ++trial) {
      const double lambda = rng.uniform();
      const CostTransform ct = build_cost_transform(sens, lambda);
      GridState state = random_state(rng, n);
      const Eigen::VectorXd y =
          compute_y(state.p_g, state.p_c, state.q_c, ct, sens);
      std::vector<double> gaps;
      for (int k = 0; k < 10; ++k) {
        state.q_g = oracles::random_vector(rng, n);
        gaps.push_back((ct.C * state.q_g + y).squaredNorm() -
                       evaluate_cost(state, sens, lambda));
      }
      double mean = 0.0;
      for (double g : gaps) mean += g;
      mean /= static_cast<double>(gaps.size());
      double variance = 0.0;
      for (double g : gaps) variance += (g - mean) * (g - mean);
      variance /= static_cast<double>(gaps.size());
      CHECK(std::sqrt(variance) <= 1e-9 * std::max(1.0, std::abs(mean)));
    }
  }
}

TEST_CASE("line flows") {
  SUBCASE("zero injections give zero flow") {
    const FeederTopology topo = chain3();
    GridState state{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2),
                    Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    const Eigen::VectorXd flows = line_flow_features(state, topo, {0, 1});
    CHECK(flows.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("chain carries the leaf injection on both lines") {
    const FeederTopology topo = chain3();
    GridState state{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2),
                    Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    state.p_g[1] = 0.7;  // generation at bus 2 only
    const Eigen::VectorXd flows = line_flow_features(state, topo, {0, 1});
    CHECK(flows[0] == doctest::Approx(-0.7));
    CHECK(flows[1] == doctest::Approx(-0.7));
  }

  SUBCASE("random trees match the DFS subtree oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = rng.uniform_int(2, 10);
      const FeederTopology topo = oracles::random_tree(rng, n);
      const GridState state = random_state(rng, n);
      for (int line = 0; line < n; ++line) {
        const Eigen::VectorXd flow = line_flow_features(state, topo, {line});
        CHECK(flow[0] ==
              doctest::Approx(oracles::subtree_flow(state, topo, line))
                  .epsilon(1e-12));
      }
    }
  }

  SUBCASE("unknown line is rejected") {
    const FeederTopology topo = chain3();
    GridState state{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2),
                    Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    CHECK_THROWS(line_flow_features(state, topo, {5}));
  }
}

TEST_CASE("feeder csv loader") {
  const FeederTopology topo = load_feeder(std::string(KERVOLT_DATA_DIR) +
                                              "/feeder13/lines.csv",
                                          std::string(KERVOLT_DATA_DIR) +
                                              "/feeder13/buses.csv");
  CHECK(topo.num_buses() == 13);
  CHECK(topo.inverter_buses().size() == 9);
  CHECK(topo.line_index(1, 5) == topo.line_index(5, 1));
  CHECK_THROWS(topo.line_index(0, 12));
}

}  // TEST_SUITE
