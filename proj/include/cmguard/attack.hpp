#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmguard/chain.hpp"
#include "cmguard/metrics.hpp"

namespace cmguard {

enum class Surface { digital, physical, patch };
enum class AttackMode { whitebox, blackbox };

struct TargetSpec {
  enum class Kind { macro_overload, worst_action };
  Kind kind = Kind::macro_overload;
  int macro_cell = 0;
};

struct PgdSettings {
  int steps = 20;
  /// Negative means 2.5 * budget / steps.
  double step_size = -1.0;
  int restarts = 1;

  double resolved_step(double budget) const;
};

struct AttackConfig {
  Surface surface = Surface::physical;
  /// Normalized feature units (digital) or dB (physical, patch).
  double budget = 0.0;
  PgdSettings pgd;
  std::vector<int> patch_mask;  // UE ids; patch surface only
  AttackMode mode = AttackMode::whitebox;
  TargetSpec target;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on a negative budget or steps, an empty
  /// or out-of-range patch mask, or a target cell that is not a macro.
  void validate(const Scenario* s = nullptr) const;
};

/// Objective for PGD: value at delta, gradient written to grad if non-null.
using PgdObjective = std::function<double(const Eigen::VectorXd& delta, Eigen::VectorXd* grad)>;

struct PgdResult {
  Eigen::VectorXd delta;
  double objective = 0.0;
  double clean_objective = 0.0;
  std::vector<double> trace;  // every evaluated iterate, restarts concatenated
};

/// Sign-gradient ascent on delta within the L-infinity ball of radius budget
/// around 0. Entries with free_mask == 0 stay at 0 (empty mask = all free).
/// Returns the best iterate over all steps and restarts; restart 0 starts at
/// 0, later restarts at seeded uniform points. Ties keep the earlier iterate.
PgdResult pgd_solve(const PgdObjective& f, Eigen::Index dim, const Eigen::VectorXd& free_mask, double budget,
                    const PgdSettings& settings, std::mt19937_64& rng);

/// Index of the target candidate: the designated macro for the pending UE,
/// falling back to the least likely action.
int select_target(const CandidateBatch& batch, const std::vector<double>& probs, const TargetSpec& spec);

struct PerturbationResult {
  FeatureSet delta_x;       // digital surface: offset on entries shared by all candidates
  std::vector<FeatureSet> candidate_delta_x;  // digital surface: total offset per candidate
  Eigen::MatrixXd delta_p;  // physical/patch surface, dB, N x M
  std::vector<double> objective_trace;
  double objective = 0.0;
  double clean_objective = 0.0;
  double achieved_norm = 0.0;
  int target = -1;
  int action_before = -1;
  int action_after = -1;
};

/// One perturbation of the physical/patch surface at a single episode step.
/// The attacker's chain (params) builds the perturbation; the victim picks
/// greedily on P + delta_p.
PerturbationResult rsrp_step_attack(const GnnParams& attacker, const GnnParams& victim, const GraphState& state,
                                    const RsrpMatrix& P, const ChannelParams& ch, const NormStats& norm,
                                    const AttackConfig& cfg, std::mt19937_64& rng);

/// Offsets on the normalized features of the step's candidates. An entry
/// whose clean value is identical in every candidate is one measurement and
/// gets one offset; entries that differ between candidates are perturbed per
/// candidate. Throws std::invalid_argument when norm carries no statistics.
PerturbationResult digital_step_attack(const GnnParams& attacker, const GnnParams& victim, const GraphState& state,
                                       const RsrpMatrix& P, const ChannelParams& ch, const NormStats& norm,
                                       const AttackConfig& cfg, std::mt19937_64& rng);

struct AttackedEpisode {
  EpisodeOutcome outcome;
  std::vector<PerturbationResult> steps;
};

/// Greedy episode where every step is re-attacked. The attacker chain is the
/// victim (white-box) or the surrogate (black-box).
AttackedEpisode attacked_episode(const GnnParams& victim, const GnnParams& attacker, const Scenario& s,
                                 const NormStats& norm, const AttackConfig& cfg);

AttackedEpisode digital_attack(const GnnParams& params, const Scenario& s, const NormStats& norm,
                               const AttackConfig& cfg);
AttackedEpisode physical_attack(const GnnParams& params, const Scenario& s, const NormStats& norm,
                                const AttackConfig& cfg);
AttackedEpisode patch_attack(const GnnParams& params, const Scenario& s, const NormStats& norm,
                             const AttackConfig& cfg);
/// Throws std::invalid_argument if the surrogate's architecture differs.
AttackedEpisode blackbox_transfer(const GnnParams& victim, const GnnParams& surrogate, const Scenario& s,
                                  const NormStats& norm, const AttackConfig& cfg);

/// Lowest `width` UE ids.
std::vector<int> default_patch_mask(int width);

std::string to_string(Surface s);
std::string to_string(AttackMode m);
Surface surface_from(const std::string& s);
AttackMode mode_from(const std::string& s);

}  // namespace cmguard
