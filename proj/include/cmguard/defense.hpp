#pragma once

#include <random>
#include <span>

#include "cmguard/attack.hpp"
#include "cmguard/checkpoint.hpp"
#include "cmguard/defense_config.hpp"
#include "cmguard/dqn.hpp"

namespace cmguard {

/// max(margin, -cap).
double hinge(double margin, double cap);

struct HingeTerm {
  double margin = 0.0;  // worst-case margin found by the inner search
  double value = 0.0;   // max(margin, -hinge_cap)
  bool skipped = false; // K < 2
};

/// Worst-case margin of one state: max over P* in the L-inf ball of radius
/// pnr around P and over a != a* of Qbar(P*, a) - Qbar(P*, a*), where a* is
/// the benign greedy action. Adds d value / d params (times scale) to grad
/// when grad is non-null and the hinge is active.
HingeTerm hinge_term(const GnnParams& params, const GraphState& state, const RsrpMatrix& P, const ChannelParams& ch,
                     const NormStats& norm, double pnr, const DefenseConfig& cfg, std::mt19937_64& rng,
                     GnnParams* grad = nullptr, double scale = 1.0);

struct HingeResult {
  double value = 0.0;  // R_DQN, sum over states
  std::vector<HingeTerm> terms;
};

/// Sum of hinge terms over the first cfg.hinge_states experiences of the
/// batch (all of them when hinge_states <= 0). The PNR of each state is
/// drawn uniformly from cfg.pnr_train_range.
HingeResult hinge_regularizer(const GnnParams& params, std::span<const Experience* const> batch,
                              const NormStats& norm, const DefenseConfig& cfg, std::mt19937_64& rng,
                              GnnParams* grad = nullptr, double scale = 1.0);

/// TD-MSE + kappa * R_DQN, one plain SGD step. With kappa = 0 this is
/// exactly dqn_update. Returns the combined loss.
double regularized_update(GnnParams& params, const GnnParams& target, std::span<const Experience* const> batch,
                          double gamma, double lr, const NormStats& norm, const DefenseConfig& cfg,
                          std::mt19937_64& rng, double grad_clip = 0.0);

/// Attack used while collecting perturbed rollouts: white-box physical PGD
/// against the current parameters, targeting the base attack's macro.
struct AdversarialRollout {
  TargetSpec target;
  PgdSettings pgd{10, -1.0, 1};
};

/// Fine-tunes ck on the suite. Regularized: benign rollouts, hinge term in
/// every update. Adversarial: benign and attacked episodes alternate;
/// attacked episodes act on PGD-perturbed P (budget drawn per step from
/// pnr_train_range) while rewards and transitions use the true P.
Checkpoint finetune_defense(const Checkpoint& ck, std::span<const Scenario> suite, const DefenseConfig& cfg,
                            const AdversarialRollout& adv = {}, std::vector<TrainLogRow>* log = nullptr);

Checkpoint adversarial_finetune(const Checkpoint& ck, std::span<const Scenario> suite, DefenseConfig cfg,
                                const AdversarialRollout& adv = {});
Checkpoint regularized_finetune(const Checkpoint& ck, std::span<const Scenario> suite, DefenseConfig cfg);

}  // namespace cmguard
