#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cmguard/scenario.hpp"

namespace cmguard {

/// Connection graph at one episode step.
///
/// The UE-to-cell adjacency A_u is held as a serving-cell index per UE
/// (-1 = unconnected); ue_adjacency() materializes the binary matrix.
struct GraphState {
  Eigen::MatrixXd cell_adjacency;  // A_c, N x N, symmetric, zero diagonal
  std::vector<int> serving;        // length M
  std::vector<int> unconnected;    // UE ids still to be placed, in placement order
  int step = 0;

  int num_cells() const { return static_cast<int>(cell_adjacency.rows()); }
  int num_ues() const { return static_cast<int>(serving.size()); }
  bool terminal() const { return unconnected.empty(); }
  Eigen::MatrixXd ue_adjacency() const;
  std::vector<int> loads() const;
};

struct Action {
  int ue_id = -1;
  int cell_id = -1;
  friend bool operator==(const Action&, const Action&) = default;
};

enum class Utility {
  sum_rate,  // U(G) = sum of served rates
  log_rate,  // U(G) = sum of log served rates (proportional fair)
};

struct RewardConfig {
  double lambda = 0.2;
  Utility utility = Utility::log_rate;
  /// Rates are divided by this before entering the reward (1e9 -> Gbps).
  double rate_unit = 1e9;
};

struct CapacityRate {
  Eigen::MatrixXd C;  // N x M, bits/s
  Eigen::MatrixXd R;  // N x M, C(i,j) / max(1, load_i)
};

/// Shannon capacity of one link; 0 for unreported links.
double link_capacity(double rsrp_dbm, const ChannelParams& ch);
/// d capacity / d rsrp (per dB); 0 for unreported links.
double link_capacity_slope(double rsrp_dbm, const ChannelParams& ch);

Eigen::MatrixXd capacity_matrix(const RsrpMatrix& P, const ChannelParams& ch);
Eigen::MatrixXd rate_matrix(const Eigen::MatrixXd& C, std::span<const int> serving);
CapacityRate capacity_and_rate(const RsrpMatrix& P, std::span<const int> serving, const ChannelParams& ch);

std::vector<int> cell_loads(std::span<const int> serving, int num_cells);

/// A_c from the virtual-edge distance rule; center UEs on their strongest
/// cell; edge UEs left unconnected in id order.
GraphState initial_graph(const Scenario& s);

/// Candidate actions for the head of the unconnected list, ordered by cell id.
/// Throws std::logic_error("episode finished") on a terminal state.
std::vector<Action> valid_actions(const GraphState& state, const RsrpMatrix& P);

/// Throws std::invalid_argument on an unreported link or a connected UE.
GraphState apply_action(const GraphState& state, const Action& a, const RsrpMatrix& P);

/// Sum of served rates R(i,j) over connected pairs, bits/s.
double network_throughput(const GraphState& state, const RsrpMatrix& P, const ChannelParams& ch);
double network_throughput(const Eigen::MatrixXd& C, std::span<const int> serving);

/// Per-UE served rate (0 for unconnected UEs), bits/s.
std::vector<double> served_rates(const Eigen::MatrixXd& C, std::span<const int> serving);

double utility(const Eigen::MatrixXd& C, std::span<const int> serving, const RewardConfig& cfg);

/// Sum over cells of the minimum link capacity among connected UEs
/// (empty cells contribute 0), bits/s.
double min_capacity_sum(const Eigen::MatrixXd& C, std::span<const int> serving);

struct RewardBreakdown {
  double utility_prev = 0.0;
  double utility_next = 0.0;
  double fairness = 0.0;  // (lambda / N) * sum of per-cell minimum capacities
  double total = 0.0;
};

double reward_from_terms(double utility_next, double utility_prev, double min_sum, double lambda, int num_cells);

RewardBreakdown reward_breakdown(const GraphState& prev, const GraphState& next, const RsrpMatrix& P,
                                 const ChannelParams& ch, const RewardConfig& cfg);
double reward(const GraphState& prev, const GraphState& next, const RsrpMatrix& P, const ChannelParams& ch,
              const RewardConfig& cfg);

}  // namespace cmguard
