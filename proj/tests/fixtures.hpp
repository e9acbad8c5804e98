#pragma once

#include <random>

#include "cmguard/chain.hpp"
#include "cmguard/environment.hpp"
#include "cmguard/features.hpp"
#include "cmguard/gnn.hpp"
#include "cmguard/scenario.hpp"

namespace cmguard::testing {

// Hand-built scenario from an RSRP matrix; cells on a line 100 m apart.
inline Scenario scenario_from(const RsrpMatrix& P, double edge_gap = 6.0, int num_macro = 1) {
  Scenario s;
  s.spec.N = static_cast<int>(P.rows());
  s.spec.M = static_cast<int>(P.cols());
  s.spec.num_macro = num_macro;
  s.spec.edge_gap_threshold = edge_gap;
  s.P = P;
  for (int i = 0; i < s.spec.N; ++i)
    s.deployment.cells.push_back({i, {100.0 * i, 0.0}, i < num_macro ? CellKind::macro : CellKind::small,
                                  i < num_macro ? 46.0 : 30.0});
  const auto klass = classify_ues(P, edge_gap);
  for (int j = 0; j < s.spec.M; ++j) s.deployment.ues.push_back({j, {0.0, 10.0 * j}, klass[static_cast<size_t>(j)]});
  return s;
}

// Small seeded scenario from the generator (N cells, M UEs).
inline Scenario small_generated(std::uint64_t seed, int N = 4, int M = 12, double edge_gap = 8.0) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.N = N;
  spec.M = M;
  spec.num_macro = 1;
  spec.area = 600.0;
  spec.edge_gap_threshold = edge_gap;
  return make_scenario(spec);
}

// Random scorer input: features in [0, 1), random cell graph, some UEs unserved.
struct ScorerFixture {
  Eigen::MatrixXd xc, xu, A;
  std::vector<int> serving;
  GraphInput input() const {
    GraphInput in;
    in.cell_x = xc;
    in.ue_x = xu;
    in.cell_adjacency = &A;
    in.serving = serving;
    return in;
  }
};

inline ScorerFixture random_scorer_fixture(std::mt19937_64& rng, int N, int M) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScorerFixture f;
  f.xc = Eigen::MatrixXd::NullaryExpr(N, 4, [&] { return u(rng); });
  f.xu = Eigen::MatrixXd::NullaryExpr(M, 2, [&] { return u(rng); });
  f.A = Eigen::MatrixXd::Zero(N, N);
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b)
      if (rng() % 2) f.A(a, b) = f.A(b, a) = 1.0;
  for (int j = 0; j < M; ++j) f.serving.push_back(static_cast<int>(rng() % static_cast<unsigned>(N + 1)) - 1);
  return f;
}

struct ChainFixture {
  Scenario scenario;
  GraphState state;
  NormStats norm;
  GnnParams params;
};

inline ChainFixture chain_fixture(std::uint64_t seed) {
  ChainFixture f;
  f.scenario = small_generated(seed, 4, 10, 12.0);
  f.state = initial_graph(f.scenario);
  f.params = GnnParams::random(seed + 1000);
  // Move a few steps in so the fixture is not always at t = 0.
  std::mt19937_64 rng(seed);
  const int skip = f.state.unconnected.empty() ? 0 : static_cast<int>(rng() % f.state.unconnected.size());
  for (int s = 0; s < skip; ++s) {
    const auto acts = valid_actions(f.state, f.scenario.P);
    f.state = apply_action(f.state, acts[rng() % acts.size()], f.scenario.P);
  }
  std::vector<FeatureSet> suite;
  if (!f.state.terminal()) {
    NormStats identity;
    identity.max.fill(1.0);
    for (const auto& c : build_candidates(f.state, f.scenario.P, f.scenario.spec.channel, identity).candidates)
      suite.push_back(c.raw);
  }
  if (!suite.empty()) f.norm = fit_norm(suite);
  return f;
}

}  // namespace cmguard::testing
