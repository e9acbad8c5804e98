#include "cmguard/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmguard {

EpisodeOutcome run_episode(const Scenario& s, const Chooser& choose, const RewardConfig& reward_cfg) {
  EpisodeOutcome out;
  GraphState g = initial_graph(s);
  const auto& ch = s.spec.channel;
  while (!g.terminal()) {
    const auto acts = valid_actions(g, s.P);
    const int k = choose(g, s.P);
    if (k < 0 || k >= static_cast<int>(acts.size())) throw std::logic_error("chooser returned an invalid index");
    GraphState next = apply_action(g, acts[static_cast<size_t>(k)], s.P);
    out.episode_return += reward(g, next, s.P, ch, reward_cfg);
    out.actions.push_back(acts[static_cast<size_t>(k)]);
    g = std::move(next);
  }
  out.final_state = std::move(g);
  return out;
}

int maxrsrp_choice(const GraphState& state, const RsrpMatrix& observed) {
  const auto acts = valid_actions(state, observed);
  int best = 0;
  for (size_t k = 1; k < acts.size(); ++k)
    if (observed(acts[k].cell_id, acts[k].ue_id) > observed(acts[static_cast<size_t>(best)].cell_id, acts[k].ue_id))
      best = static_cast<int>(k);
  return best;
}

GraphState maxrsrp_policy(const GraphState& state, const RsrpMatrix& P) {
  GraphState g = state;
  while (!g.terminal()) g = apply_action(g, valid_actions(g, P)[static_cast<size_t>(maxrsrp_choice(g, P))], P);
  return g;
}

double coverage_rate(std::span<const double> rates) {
  if (rates.empty()) throw std::invalid_argument("coverage_rate of an empty population");
  std::vector<double> v(rates.begin(), rates.end());
  // ceil(0.05 n) computed in integers to stay exact.
  const size_t rank = std::max<size_t>(1, (v.size() + 19) / 20);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
  return v[rank - 1];
}

double capacity_metric(const GraphState& state, const RsrpMatrix& P, const ChannelParams& ch) {
  return network_throughput(state, P, ch);
}

std::vector<double> final_rates(const Scenario& s, const GraphState& final_state) {
  return served_rates(capacity_matrix(s.P, s.spec.channel), final_state.serving);
}

SuiteMetrics suite_metrics(std::span<const Scenario> suite, std::span<const GraphState> finals) {
  if (suite.size() != finals.size() || suite.empty()) throw std::invalid_argument("suite/finals size mismatch");
  SuiteMetrics m;
  std::vector<double> pooled;
  double rate_sum = 0.0;
  for (size_t k = 0; k < suite.size(); ++k) {
    const auto rates = final_rates(suite[k], finals[k]);
    pooled.insert(pooled.end(), rates.begin(), rates.end());
    m.scenario_coverage.push_back(coverage_rate(rates));
    m.scenario_capacity.push_back(capacity_metric(finals[k], suite[k].P, suite[k].spec.channel));
    m.capacity += m.scenario_capacity.back();
    double sum = 0.0;
    for (double r : rates) sum += r;
    rate_sum += sum;
    m.scenario_mean_rate.push_back(sum / static_cast<double>(rates.size()));
    m.scenario_episode_len.push_back(finals[k].step);
    m.episode_len += finals[k].step;
  }
  const double S = static_cast<double>(suite.size());
  m.coverage = coverage_rate(pooled);
  m.capacity /= S;
  m.mean_rate = rate_sum / static_cast<double>(pooled.size());
  m.episode_len /= S;
  return m;
}

SuiteMetrics evaluate_suite(std::span<const Scenario> suite, const std::function<Chooser(int)>& make_chooser) {
  std::vector<GraphState> finals;
  for (size_t k = 0; k < suite.size(); ++k)
    finals.push_back(run_episode(suite[k], make_chooser(static_cast<int>(k))).final_state);
  return suite_metrics(suite, finals);
}

SuiteMetrics maxrsrp_suite(std::span<const Scenario> suite) {
  return evaluate_suite(suite, [](int) -> Chooser { return maxrsrp_choice; });
}

RsrpMatrix add_uniform_noise(const RsrpMatrix& P, double pnr_db, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-pnr_db, pnr_db);
  RsrpMatrix out = P;
  for (Eigen::Index j = 0; j < P.cols(); ++j)
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      if (std::isfinite(P(i, j)) && pnr_db > 0.0) out(i, j) += u(rng);
  return out;
}

SuiteMetrics noisy_maxrsrp_eval(std::span<const Scenario> suite, double pnr_db, int instances, std::uint64_t seed) {
  if (instances < 1) throw std::invalid_argument("noisy_maxrsrp_eval needs at least one instance");
  std::mt19937_64 rng(seed);
  SuiteMetrics avg;
  avg.scenario_coverage.assign(suite.size(), 0.0);
  avg.scenario_capacity.assign(suite.size(), 0.0);
  avg.scenario_mean_rate.assign(suite.size(), 0.0);
  avg.scenario_episode_len.assign(suite.size(), 0.0);
  for (int n = 0; n < instances; ++n) {
    std::vector<RsrpMatrix> noisy;
    for (const auto& s : suite) noisy.push_back(add_uniform_noise(s.P, pnr_db, rng));
    const auto m = evaluate_suite(suite, [&](int k) -> Chooser {
      const RsrpMatrix* obs = &noisy[static_cast<size_t>(k)];
      return [obs](const GraphState& g, const RsrpMatrix&) { return maxrsrp_choice(g, *obs); };
    });
    avg.coverage += m.coverage;
    avg.capacity += m.capacity;
    avg.mean_rate += m.mean_rate;
    avg.episode_len += m.episode_len;
    for (size_t k = 0; k < suite.size(); ++k) {
      avg.scenario_coverage[k] += m.scenario_coverage[k];
      avg.scenario_capacity[k] += m.scenario_capacity[k];
      avg.scenario_mean_rate[k] += m.scenario_mean_rate[k];
      avg.scenario_episode_len[k] += m.scenario_episode_len[k];
    }
  }
  const double I = instances;
  avg.coverage /= I;
  avg.capacity /= I;
  avg.mean_rate /= I;
  avg.episode_len /= I;
  for (auto* vec : {&avg.scenario_coverage, &avg.scenario_capacity, &avg.scenario_mean_rate, &avg.scenario_episode_len})
    for (auto& v : *vec) v /= I;
  return avg;
}

}  // namespace cmguard
