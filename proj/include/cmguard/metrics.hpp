#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "cmguard/environment.hpp"
#include "cmguard/scenario.hpp"

namespace cmguard {

/// Picks an index into valid_actions(state, P) given the true RSRP. Attacks
/// and noisy baselines wrap the observation inside the chooser; transitions
/// always use the true matrix.
using Chooser = std::function<int(const GraphState& state, const RsrpMatrix& P)>;

struct EpisodeOutcome {
  GraphState final_state;
  std::vector<Action> actions;
  double episode_return = 0.0;
};

EpisodeOutcome run_episode(const Scenario& s, const Chooser& choose, const RewardConfig& reward_cfg = {});

/// Index of the strongest observed cell among the valid actions (lowest id on ties).
int maxrsrp_choice(const GraphState& state, const RsrpMatrix& observed);
/// Completes the assignment: every pending UE goes to its strongest finite cell.
GraphState maxrsrp_policy(const GraphState& state, const RsrpMatrix& P);

/// Nearest-rank 5th percentile: the ceil(0.05 n)-th smallest value (1-based).
double coverage_rate(std::span<const double> rates);
double capacity_metric(const GraphState& state, const RsrpMatrix& P, const ChannelParams& ch);

/// Served rate of every UE at the end of an episode, bits/s.
std::vector<double> final_rates(const Scenario& s, const GraphState& final_state);

/// Aggregate over a scenario suite: coverage pools per-UE rates across all
/// scenarios; capacity and mean rate are averaged per scenario.
struct SuiteMetrics {
  double coverage = 0.0;
  double capacity = 0.0;
  double mean_rate = 0.0;
  double episode_len = 0.0;
  std::vector<double> scenario_coverage;
  std::vector<double> scenario_capacity;
  std::vector<double> scenario_mean_rate;
  std::vector<double> scenario_episode_len;
};

SuiteMetrics suite_metrics(std::span<const Scenario> suite, std::span<const GraphState> finals);

/// Runs one episode per scenario with choosers built by make_chooser(scenario index).
SuiteMetrics evaluate_suite(std::span<const Scenario> suite, const std::function<Chooser(int)>& make_chooser);

SuiteMetrics maxrsrp_suite(std::span<const Scenario> suite);

/// maxRSRP on P + U(-pnr, pnr) dB (finite entries), averaged over instances.
/// Coverage is pooled per instance across the suite, then averaged.
SuiteMetrics noisy_maxrsrp_eval(std::span<const Scenario> suite, double pnr_db, int instances, std::uint64_t seed);

/// Uniform noise on finite entries of P.
RsrpMatrix add_uniform_noise(const RsrpMatrix& P, double pnr_db, std::mt19937_64& rng);

}  // namespace cmguard
