#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cmguard/chain.hpp"
#include "cmguard/environment.hpp"
#include "cmguard/features.hpp"
#include "cmguard/gnn.hpp"
#include "cmguard/metrics.hpp"
#include "cmguard/scenario.hpp"

namespace cmguard {

/// One transition. The scenario (true P) is shared, not copied.
struct Experience {
  std::shared_ptr<const Scenario> scenario;
  GraphState state;
  int action = 0;  // index into valid_actions(state, scenario->P)
  double reward = 0.0;
  GraphState next;
  bool terminal = false;
  /// RSRP the agent observed when acting, if it differed from scenario->P.
  /// Q(s, a) is then evaluated on it; the TD target always uses the true P.
  std::shared_ptr<const RsrpMatrix> observed;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Uniform sample with replacement.
  std::vector<const Experience*> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Experience> items_;
};

struct TrainConfig {
  int episodes = 2000;
  double gamma = 0.95;
  double eps_start = 1.0;
  double eps_end = 0.05;
  /// Fraction of episodes over which epsilon decays linearly.
  double eps_decay_fraction = 0.5;
  std::size_t buffer_capacity = 10000;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  int target_sync = 100;
  /// Episode steps between gradient updates.
  int update_every = 1;
  /// Global L2 clip on the update gradient; 0 disables.
  double grad_clip = 10.0;
  /// Greedy evaluation on the suite every this many episodes (0 = never).
  int eval_every = 50;
  /// Return the parameters with the best evaluation coverage seen.
  bool keep_best = true;
  std::uint64_t seed = 1;
  GnnDims dims;
  RewardConfig reward;

  void validate() const;
  double epsilon(int episode) const;
};

/// Chooses the highest-scoring candidate (lowest index on ties).
int greedy_choice(const GnnParams& params, const GraphState& state, const RsrpMatrix& observed,
                  const ChannelParams& ch, const NormStats& norm);
Chooser greedy_chooser(const GnnParams& params, const NormStats& norm, const ChannelParams& ch);

struct RolloutResult {
  std::vector<Experience> experiences;
  double episode_return = 0.0;
  GraphState final_state;
};

/// Epsilon-greedy episode from the initial graph.
RolloutResult rollout_episode(const GnnParams& params, const std::shared_ptr<const Scenario>& scenario,
                              const NormStats& norm, double explore_eps, const RewardConfig& reward_cfg,
                              std::mt19937_64& rng);

/// Q(s, a): score of the graph reached by the stored action.
double q_value(const GnnParams& params, const Experience& e, const NormStats& norm);
/// TD target r (terminal) or r + gamma * max_a' Q_target(s', a').
double td_target(const GnnParams& target, const Experience& e, double gamma, const NormStats& norm);

/// Gradient of the mean squared TD error w.r.t. params; returns the loss.
double td_loss_gradient(const GnnParams& params, const GnnParams& target, std::span<const Experience* const> batch,
                        double gamma, const NormStats& norm, GnnParams& grad);

/// Scales grad so its L2 norm is at most max_norm (no-op for max_norm <= 0).
void clip_gradient(GnnParams& grad, double max_norm);

/// One plain SGD step on the TD loss; returns the pre-step loss.
/// Throws std::invalid_argument on an empty batch.
double dqn_update(GnnParams& params, const GnnParams& target, std::span<const Experience* const> batch,
                  double gamma, double lr, const NormStats& norm, double grad_clip = 0.0);

/// Min/max feature statistics over candidate graphs seen by maxRSRP and
/// uniform-random rollouts on the suite.
NormStats fit_suite_norm(std::span<const Scenario> suite, std::uint64_t seed);

struct TrainLogRow {
  int episode = 0;
  double episode_return = 0.0;
  double loss = 0.0;  // mean over the episode's updates (0 if none)
  std::optional<double> eval_coverage;
};

void write_train_log(const std::string& path, std::span<const TrainLogRow> rows);

/// Extra loss term added to each update (used by the regularized defense).
/// Accumulates its gradient into grad and returns its value.
using UpdateHook = std::function<double(const GnnParams& params, std::span<const Experience* const> batch,
                                        GnnParams& grad, std::mt19937_64& rng)>;
struct ActingPolicy {
  Chooser choose;
  /// Hands over the RSRP the last choose() call acted on, or null if that
  /// was the true P or choose() was not called (exploration).
  std::function<std::shared_ptr<const RsrpMatrix>()> take_observation;
};
/// Replaces the observation used for acting in an episode (used by
/// adversarial fine-tuning); called once per episode with the episode index.
using ActingHook = std::function<std::optional<ActingPolicy>(int episode, const Scenario& scenario,
                                                             const GnnParams& params, std::mt19937_64& rng)>;

struct TrainResult {
  GnnParams params;
  std::vector<TrainLogRow> log;
  double best_eval_coverage = 0.0;
};

struct TrainHooks {
  UpdateHook extra_loss;
  ActingHook acting;
  /// Replaces greedy suite coverage as the keep-best selection score.
  std::function<double(const GnnParams& params)> evaluate;
};

/// DQN training from init over the suite (scenarios visited round-robin).
/// Greedy evaluation runs on `validation` (the training suite when empty).
TrainResult train(const GnnParams& init, std::span<const Scenario> suite, const NormStats& norm,
                  const TrainConfig& cfg, const TrainHooks& hooks = {}, std::span<const Scenario> validation = {});

}  // namespace cmguard
