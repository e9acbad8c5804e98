#include "cmguard/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmguard {

Eigen::MatrixXd GraphState::ue_adjacency() const {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(num_cells(), num_ues());
  for (int j = 0; j < num_ues(); ++j)
    if (serving[static_cast<size_t>(j)] >= 0) A(serving[static_cast<size_t>(j)], j) = 1.0;
  return A;
}

std::vector<int> GraphState::loads() const { return cell_loads(serving, num_cells()); }

std::vector<int> cell_loads(std::span<const int> serving, int num_cells) {
  std::vector<int> load(static_cast<size_t>(num_cells), 0);
  for (int c : serving)
    if (c >= 0) ++load[static_cast<size_t>(c)];
  return load;
}

double link_capacity(double rsrp_dbm, const ChannelParams& ch) {
  if (!std::isfinite(rsrp_dbm)) return 0.0;
  return ch.W * std::log2(1.0 + std::pow(10.0, (rsrp_dbm - ch.N0) / 10.0));
}

double link_capacity_slope(double rsrp_dbm, const ChannelParams& ch) {
  if (!std::isfinite(rsrp_dbm)) return 0.0;
  const double snr = std::pow(10.0, (rsrp_dbm - ch.N0) / 10.0);
  return ch.W * (snr / (1.0 + snr)) * std::log(10.0) / (10.0 * std::log(2.0));
}

Eigen::MatrixXd capacity_matrix(const RsrpMatrix& P, const ChannelParams& ch) {
  Eigen::MatrixXd C(P.rows(), P.cols());
  for (Eigen::Index j = 0; j < P.cols(); ++j)
    for (Eigen::Index i = 0; i < P.rows(); ++i) C(i, j) = link_capacity(P(i, j), ch);
  return C;
}

Eigen::MatrixXd rate_matrix(const Eigen::MatrixXd& C, std::span<const int> serving) {
  const auto load = cell_loads(serving, static_cast<int>(C.rows()));
  Eigen::MatrixXd R = C;
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    const int l = load[static_cast<size_t>(i)];
    if (l > 1) R.row(i) /= static_cast<double>(l);
  }
  return R;
}

CapacityRate capacity_and_rate(const RsrpMatrix& P, std::span<const int> serving, const ChannelParams& ch) {
  CapacityRate out;
  out.C = capacity_matrix(P, ch);
  out.R = rate_matrix(out.C, serving);
  return out;
}

GraphState initial_graph(const Scenario& s) {
  const int N = s.num_cells();
  const int M = s.num_ues();
  GraphState g;
  g.cell_adjacency = Eigen::MatrixXd::Zero(N, N);
  const auto& cells = s.deployment.cells;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      if (a != b && distance(cells[static_cast<size_t>(a)].position, cells[static_cast<size_t>(b)].position) <
                        s.spec.cell_virtual_edge_dist)
        g.cell_adjacency(a, b) = 1.0;

  g.serving.assign(static_cast<size_t>(M), -1);
  for (int j = 0; j < M; ++j) {
    const auto klass = s.deployment.ues[static_cast<size_t>(j)].klass;
    if (klass == UeClass::unassigned) throw std::logic_error("UE classes must be assigned before episode start");
    if (klass == UeClass::cell_edge) {
      g.unconnected.push_back(j);
      continue;
    }
    int best = -1;
    for (int i = 0; i < N; ++i)
      if (std::isfinite(s.P(i, j)) && (best < 0 || s.P(i, j) > s.P(best, j))) best = i;
    g.serving[static_cast<size_t>(j)] = best;
  }
  return g;
}

std::vector<Action> valid_actions(const GraphState& state, const RsrpMatrix& P) {
  if (state.terminal()) throw std::logic_error("episode finished");
  const int ue = state.unconnected.front();
  std::vector<Action> out;
  for (int i = 0; i < state.num_cells(); ++i)
    if (std::isfinite(P(i, ue))) out.push_back({ue, i});
  return out;
}

GraphState apply_action(const GraphState& state, const Action& a, const RsrpMatrix& P) {
  if (a.ue_id < 0 || a.ue_id >= state.num_ues() || a.cell_id < 0 || a.cell_id >= state.num_cells())
    throw std::invalid_argument("action out of range");
  if (state.serving[static_cast<size_t>(a.ue_id)] >= 0) throw std::invalid_argument("UE already connected");
  if (!std::isfinite(P(a.cell_id, a.ue_id))) throw std::invalid_argument("action uses an unreported link");
  auto it = std::find(state.unconnected.begin(), state.unconnected.end(), a.ue_id);
  if (it == state.unconnected.end()) throw std::invalid_argument("UE is not awaiting placement");

  GraphState next = state;
  next.serving[static_cast<size_t>(a.ue_id)] = a.cell_id;
  next.unconnected.erase(next.unconnected.begin() + (it - state.unconnected.begin()));
  ++next.step;
  return next;
}

std::vector<double> served_rates(const Eigen::MatrixXd& C, std::span<const int> serving) {
  const auto load = cell_loads(serving, static_cast<int>(C.rows()));
  std::vector<double> out(serving.size(), 0.0);
  for (size_t j = 0; j < serving.size(); ++j) {
    const int c = serving[j];
    if (c >= 0) out[j] = C(c, static_cast<Eigen::Index>(j)) / load[static_cast<size_t>(c)];
  }
  return out;
}

double network_throughput(const Eigen::MatrixXd& C, std::span<const int> serving) {
  double u = 0.0;
  const auto rates = served_rates(C, serving);
  for (size_t j = 0; j < serving.size(); ++j)
    if (serving[j] >= 0) u += rates[j];
  return u;
}

double network_throughput(const GraphState& state, const RsrpMatrix& P, const ChannelParams& ch) {
  return network_throughput(capacity_matrix(P, ch), state.serving);
}

double utility(const Eigen::MatrixXd& C, std::span<const int> serving, const RewardConfig& cfg) {
  const auto rates = served_rates(C, serving);
  double u = 0.0;
  for (size_t j = 0; j < serving.size(); ++j) {
    if (serving[j] < 0) continue;
    const double r = rates[j] / cfg.rate_unit;
    u += cfg.utility == Utility::log_rate ? std::log(r) : r;
  }
  return u;
}

double min_capacity_sum(const Eigen::MatrixXd& C, std::span<const int> serving) {
  const auto N = C.rows();
  std::vector<double> mins(static_cast<size_t>(N), std::numeric_limits<double>::infinity());
  for (size_t j = 0; j < serving.size(); ++j) {
    const int c = serving[j];
    if (c >= 0) mins[static_cast<size_t>(c)] = std::min(mins[static_cast<size_t>(c)], C(c, static_cast<Eigen::Index>(j)));
  }
  double sum = 0.0;
  for (double m : mins)
    if (std::isfinite(m)) sum += m;
  return sum;
}

double reward_from_terms(double utility_next, double utility_prev, double min_sum, double lambda, int num_cells) {
  return utility_next - utility_prev + lambda / num_cells * min_sum;
}

RewardBreakdown reward_breakdown(const GraphState& prev, const GraphState& next, const RsrpMatrix& P,
                                 const ChannelParams& ch, const RewardConfig& cfg) {
  const Eigen::MatrixXd C = capacity_matrix(P, ch);
  RewardBreakdown b;
  b.utility_prev = utility(C, prev.serving, cfg);
  b.utility_next = utility(C, next.serving, cfg);
  const double min_sum = min_capacity_sum(C, next.serving) / cfg.rate_unit;
  b.fairness = cfg.lambda / next.num_cells() * min_sum;
  b.total = reward_from_terms(b.utility_next, b.utility_prev, min_sum, cfg.lambda, next.num_cells());
  return b;
}

double reward(const GraphState& prev, const GraphState& next, const RsrpMatrix& P, const ChannelParams& ch,
              const RewardConfig& cfg) {
  return reward_breakdown(prev, next, P, ch, cfg).total;
}

}  // namespace cmguard
