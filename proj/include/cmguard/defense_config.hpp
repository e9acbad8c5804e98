#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cmguard {

enum class DefenseKind { adversarial, regularized };

/// Which per-action quantity the hinge regularizer compares.
enum class MarginOn { probs, raw_q };

struct DefenseConfig {
  DefenseKind kind = DefenseKind::regularized;
  std::vector<double> pnr_train_range{3, 6, 9, 12, 15};  // dB
  double kappa = 0.5;
  double hinge_cap = 0.5;
  MarginOn margin_on = MarginOn::probs;
  int inner_steps = 10;
  int inner_restarts = 1;
  /// States per update that receive the hinge term (the head of the batch).
  int hinge_states = 4;
  /// Fine-tuning episodes from the base checkpoint.
  int episodes = 600;
  /// Benign episodes per attacked episode (adversarial kind).
  int benign_per_attacked = 1;
  /// Adversarial kind: replay attacked steps with the perturbed RSRP as the
  /// observation (false: with the true RSRP, so only the actions differ).
  bool store_perturbed = true;
  double lr = 3e-4;
  double epsilon = 0.05;
  std::uint64_t seed = 11;
  /// Keep-best selection every eval_every episodes (0 = keep the final
  /// parameters). The score is the mean coverage under the physical attack
  /// over select_pnrs (0 dB is the benign coverage).
  int eval_every = 25;
  std::vector<double> select_pnrs{0, 6, 12};

  void validate() const;
};

std::string to_string(DefenseKind k);
DefenseKind defense_kind_from(const std::string& s);

}  // namespace cmguard
