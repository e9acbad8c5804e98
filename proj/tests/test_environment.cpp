#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <boost/multiprecision/cpp_int.hpp>
#include <doctest.h>

#include "cmguard/environment.hpp"
#include "cmguard/scenario.hpp"
#include "fixtures.hpp"

using namespace cmguard;
using cmguard::testing::scenario_from;

namespace {

constexpr double ninf = kUnreported;

ChannelParams unit_channel() {
  ChannelParams ch;
  ch.W = 1.0;
  ch.N0 = 0.0;
  return ch;
}

// Capacity of a link with the given SNR in dB under a unit channel.
double rsrp_for_snr(double snr_db) { return snr_db; }

}  // namespace

TEST_CASE("path loss closed form") {
  ChannelParams ch;
  ch.pl0 = 40.0;
  CHECK(path_loss_rsrp(30.0, 1.0, ch) == doctest::Approx(-10.0).epsilon(1e-15));
  ch.n = 3.0;
  CHECK(path_loss_rsrp(46.0, 100.0, ch) == doctest::Approx(-54.0).epsilon(1e-12));
  // Sub-meter distances clamp to the reference distance.
  CHECK(path_loss_rsrp(30.0, 0.2, ch) == path_loss_rsrp(30.0, 1.0, ch));
}

TEST_CASE("deployment generation is deterministic and well formed") {
  ScenarioSpec spec;
  spec.seed = 7;
  const Scenario a = generate_deployment(spec);
  const Scenario b = generate_deployment(spec);
  REQUIRE(a.P.rows() == 6);
  REQUIRE(a.P.cols() == 50);
  for (Eigen::Index j = 0; j < a.P.cols(); ++j) {
    int finite = 0;
    for (Eigen::Index i = 0; i < a.P.rows(); ++i) {
      // Bitwise identity, including the -inf sentinels.
      CHECK(std::memcmp(&a.P(i, j), &b.P(i, j), sizeof(double)) == 0);
      if (std::isfinite(a.P(i, j))) {
        ++finite;
        CHECK(a.P(i, j) >= spec.channel.visibility_floor);
      }
    }
    CHECK(finite >= 1);
    CHECK(finite <= spec.channel.top_k_reports);
  }
  for (const auto& c : a.deployment.cells) {
    CHECK(c.position.x >= 0.0);
    CHECK(c.position.x <= spec.area);
    CHECK(c.position.y <= spec.area);
  }
  CHECK(a.deployment.cells[0].kind == CellKind::macro);
  CHECK(a.deployment.cells[0].tx_power > a.deployment.cells[5].tx_power);

  spec.seed = 8;
  CHECK_FALSE((generate_deployment(spec).P.array() == a.P.array()).all());
}

TEST_CASE("infeasible scenario is reported") {
  ScenarioSpec spec;
  spec.channel.visibility_floor = 500.0;  // nothing can be heard
  CHECK_THROWS_AS(generate_deployment(spec), DataError);
}

TEST_CASE("capacity and rate") {
  const ChannelParams ch = unit_channel();
  CHECK(link_capacity(rsrp_for_snr(0.0), ch) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(link_capacity(rsrp_for_snr(10.0), ch) == doctest::Approx(std::log2(11.0)).epsilon(1e-14));
  CHECK(link_capacity(rsrp_for_snr(10.0), ch) == doctest::Approx(3.4594).epsilon(1e-4));
  CHECK(link_capacity(ninf, ch) == 0.0);

  Eigen::MatrixXd C(2, 3);
  C << 4, 4, 1,
       2, 3, 5;
  const std::vector<int> serving{0, 0, 1};
  const Eigen::MatrixXd R = rate_matrix(C, serving);
  CHECK(R(0, 0) == 2.0);
  CHECK(R(0, 1) == 2.0);
  CHECK(R(1, 2) == 5.0);  // single UE on cell 1: R = C
  CHECK(R(0, 2) == 0.5);  // would-be rate uses the current load
}

TEST_CASE("capacity/rate properties on generated scenarios") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scenario s = cmguard::testing::small_generated(seed);
    const GraphState g = initial_graph(s);
    const auto cr = capacity_and_rate(s.P, g.serving, s.spec.channel);
    CHECK((cr.C.array() >= 0.0).all());
    CHECK((cr.R.array() <= cr.C.array()).all());
    const auto load = g.loads();
    for (int i = 0; i < s.num_cells(); ++i)
      if (load[static_cast<size_t>(i)] == 1) CHECK((cr.R.row(i).array() == cr.C.row(i).array()).all());
  }
}

TEST_CASE("classify_ues gap rule") {
  RsrpMatrix P(3, 3);
  P << -70, -70, -70,
       -80, -73, ninf,
       ninf, ninf, ninf;
  const auto k = classify_ues(P, 6.0);
  CHECK(k[0] == UeClass::cell_center);
  CHECK(k[1] == UeClass::cell_edge);
  CHECK(k[2] == UeClass::cell_center);  // single report
}

TEST_CASE("classify_ues is invariant to a per-UE offset") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-110.0, -40.0);
  std::uniform_real_distribution<double> off(-30.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    RsrpMatrix P(4, 6);
    for (Eigen::Index i = 0; i < P.size(); ++i) P(i) = (rng() % 4 == 0) ? ninf : u(rng);
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      if (!std::isfinite(P(0, j))) P(0, j) = u(rng);
    RsrpMatrix Q = P;
    const Eigen::Index col = static_cast<Eigen::Index>(rng() % 6);
    // Quarter-dB offsets keep the gaps exactly representable.
    const double delta = std::round(off(rng) * 4.0) / 4.0;
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
      P(i, col) = std::round(P(i, col) * 4.0) / 4.0;
      Q(i, col) = P(i, col) + delta;
    }
    CHECK(classify_ues(P, 6.0) == classify_ues(Q, 6.0));
  }
}

TEST_CASE("initial graph") {
  RsrpMatrix P(2, 3);
  P << -70, -70, -70,
       -80, -72, -90;
  Scenario s = scenario_from(P, 6.0);
  s.spec.cell_virtual_edge_dist = 500.0;
  const GraphState g = initial_graph(s);
  CHECK(g.cell_adjacency(0, 1) == 1.0);
  CHECK(g.cell_adjacency(1, 0) == 1.0);
  CHECK(g.cell_adjacency(0, 0) == 0.0);
  CHECK(g.serving[0] == 0);
  CHECK(g.serving[1] == -1);  // edge UE (gap 2 dB)
  CHECK(g.serving[2] == 0);
  CHECK(g.unconnected == std::vector<int>{1});
  CHECK(g.ue_adjacency().col(0).sum() == 1.0);

  s.spec.cell_virtual_edge_dist = 50.0;
  CHECK(initial_graph(s).cell_adjacency.isZero());
}

TEST_CASE("all cell-center UEs: episode already terminal") {
  RsrpMatrix P(2, 2);
  P << -60, -70,
       -90, ninf;
  const GraphState g = initial_graph(scenario_from(P));
  CHECK(g.terminal());
  CHECK_THROWS_WITH_AS(valid_actions(g, P), "episode finished", std::logic_error);
}

TEST_CASE("valid actions and transitions") {
  RsrpMatrix P(3, 3);
  P << -70, -70, -70,
       -72, -71, -60,
       -73, ninf, ninf;
  const Scenario s = scenario_from(P, 6.0);
  GraphState g = initial_graph(s);
  REQUIRE(g.unconnected == std::vector<int>{0, 1});

  auto acts = valid_actions(g, P);
  CHECK(acts.size() == 3);
  CHECK(acts[0] == Action{0, 0});
  CHECK(acts[2] == Action{0, 2});

  g = apply_action(g, acts[2], P);
  CHECK(g.step == 1);
  CHECK(g.serving[0] == 2);
  CHECK(g.ue_adjacency().col(0).sum() == 1.0);
  CHECK_THROWS_AS(apply_action(g, acts[2], P), std::invalid_argument);  // same action twice

  acts = valid_actions(g, P);
  CHECK(acts.size() == 2);
  CHECK_THROWS_AS(apply_action(g, Action{1, 2}, P), std::invalid_argument);  // unreported link
  g = apply_action(g, acts[1], P);
  CHECK(g.terminal());
  for (int j = 0; j < 3; ++j) CHECK(g.ue_adjacency().col(j).sum() == 1.0);
}

TEST_CASE("forced action when a UE reports one cell") {
  RsrpMatrix P(2, 2);
  P << -70, ninf,
       -71, -50;
  GraphState g = initial_graph(scenario_from(P, 6.0));
  g.unconnected = {1};
  g.serving[1] = -1;
  CHECK(valid_actions(g, P).size() == 1);
}

TEST_CASE("network throughput") {
  Eigen::MatrixXd C(2, 2);
  C << 4, 4,
       1, 1;
  CHECK(network_throughput(C, std::vector<int>{-1, -1}) == 0.0);
  CHECK(network_throughput(C, std::vector<int>{0, -1}) == 4.0);
  CHECK(network_throughput(C, std::vector<int>{0, 0}) == 4.0);
  CHECK(network_throughput(C, std::vector<int>{0, 1}) == 5.0);
}

TEST_CASE("reward terms") {
  CHECK(reward_from_terms(10.0, 8.0, 1.0 + 3.0, 0.5, 2) == 3.0);
  CHECK(reward_from_terms(10.0, 8.0, 4.0, 0.0, 2) == 2.0);
  CHECK(reward_from_terms(5.0, 5.0, 4.0, 0.5, 2) == 1.0);

  RsrpMatrix P(2, 3);
  P << -70, -70, -70,
       -80, -72, -71;
  const Scenario s = scenario_from(P, 6.0);
  const GraphState g0 = initial_graph(s);
  const GraphState g1 = apply_action(g0, valid_actions(g0, P)[1], P);
  for (Utility u : {Utility::sum_rate, Utility::log_rate}) {
    RewardConfig cfg;
    cfg.utility = u;
    cfg.lambda = 0.0;
    const auto b = reward_breakdown(g0, g1, P, s.spec.channel, cfg);
    CHECK(b.total == b.utility_next - b.utility_prev);
    cfg.lambda = 0.5;
    const Eigen::MatrixXd C = capacity_matrix(P, s.spec.channel);
    const double mins = min_capacity_sum(C, g1.serving) / cfg.rate_unit;
    CHECK(reward(g0, g1, P, s.spec.channel, cfg) == doctest::Approx(b.total + 0.25 * mins).epsilon(1e-12));
  }
  // Sum-rate utility in raw bits/s equals network throughput.
  RewardConfig raw;
  raw.utility = Utility::sum_rate;
  raw.rate_unit = 1.0;
  const Eigen::MatrixXd C = capacity_matrix(P, s.spec.channel);
  CHECK(utility(C, g1.serving, raw) == network_throughput(g1, P, s.spec.channel));
}

TEST_CASE("empty cells contribute nothing to the fairness term") {
  Eigen::MatrixXd C(3, 2);
  C << 4, 2,
       1, 1,
       9, 9;
  CHECK(min_capacity_sum(C, std::vector<int>{0, 0}) == 2.0);
  CHECK(min_capacity_sum(C, std::vector<int>{0, 1}) == 5.0);
}

TEST_CASE("reward telescoping is exact") {
  using Rational = boost::multiprecision::cpp_rational;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario s = cmguard::testing::small_generated(seed, 5, 20, 10.0);
    GraphState g = initial_graph(s);
    if (g.terminal()) continue;
    RewardConfig cfg;
    const double u0 = utility(capacity_matrix(s.P, s.spec.channel), g.serving, cfg);
    double last_next = u0;
    Rational sum = 0;
    std::mt19937_64 rng(seed);
    while (!g.terminal()) {
      const auto acts = valid_actions(g, s.P);
      const GraphState next = apply_action(g, acts[rng() % acts.size()], s.P);
      const auto b = reward_breakdown(g, next, s.P, s.spec.channel, cfg);
      CHECK(b.utility_prev == last_next);  // consecutive steps share U(G_t) bit for bit
      sum += Rational(b.utility_next) - Rational(b.utility_prev);
      last_next = b.utility_next;
      g = next;
    }
    CHECK(sum == Rational(last_next) - Rational(u0));
    for (int j = 0; j < g.num_ues(); ++j) CHECK(g.serving[static_cast<size_t>(j)] >= 0);
  }
}

TEST_CASE("scenario file round trip") {
  ScenarioSpec spec;
  spec.seed = 11;
  const Scenario s = make_scenario(spec);
  const auto path = std::filesystem::temp_directory_path() / "cmguard_scenario_test.json";
  save_scenario(s, path);
  const Scenario r = load_scenario(path);
  CHECK(r.spec.seed == 11);
  CHECK(r.deployment.cells.size() == 6);
  for (Eigen::Index i = 0; i < s.P.size(); ++i) CHECK(std::memcmp(&s.P(i), &r.P(i), sizeof(double)) == 0);
  for (size_t j = 0; j < s.deployment.ues.size(); ++j)
    CHECK(r.deployment.ues[j].klass == s.deployment.ues[j].klass);

  {
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text.find("\"-inf\"") != std::string::npos);
    std::ofstream out(path);
    out << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(load_scenario(path), DataError);
  std::filesystem::remove(path);
}
