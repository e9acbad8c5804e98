#include "cmguard/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace cmguard {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::push(Experience e) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
    return;
  }
  items_[head_] = std::move(e);
  head_ = (head_ + 1) % capacity_;
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Experience*> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(&items_[pick(rng)]);
  return out;
}

void TrainConfig::validate() const {
  if (episodes < 0) throw std::invalid_argument("episodes must be >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(eps_start >= eps_end && eps_end >= 0.0 && eps_start <= 1.0))
    throw std::invalid_argument("epsilon schedule must be non-increasing within [0, 1]");
  if (eps_decay_fraction < 0.0) throw std::invalid_argument("eps_decay_fraction must be >= 0");
  if (batch_size == 0 || buffer_capacity == 0) throw std::invalid_argument("batch and buffer sizes must be positive");
  if (lr < 0.0 || target_sync < 1 || update_every < 1 || eval_every < 0 || grad_clip < 0.0)
    throw std::invalid_argument("invalid training hyper-parameters");
}

double TrainConfig::epsilon(int episode) const {
  const double horizon = eps_decay_fraction * episodes;
  if (horizon <= 0.0 || episode >= horizon) return eps_end;
  return eps_start + (eps_end - eps_start) * (episode / horizon);
}

int greedy_choice(const GnnParams& params, const GraphState& state, const RsrpMatrix& observed,
                  const ChannelParams& ch, const NormStats& norm) {
  return argmax(score_candidates(params, build_candidates(state, observed, ch, norm)));
}

Chooser greedy_chooser(const GnnParams& params, const NormStats& norm, const ChannelParams& ch) {
  return [&params, norm, ch](const GraphState& g, const RsrpMatrix& P) { return greedy_choice(params, g, P, ch, norm); };
}

namespace {

int explore_or(const Chooser& choose, const GraphState& g, const RsrpMatrix& P, int K, double eps,
               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (eps > 0.0 && u(rng) < eps) return std::uniform_int_distribution<int>(0, K - 1)(rng);
  return choose(g, P);
}

RolloutResult rollout_with(const Chooser& choose, const std::shared_ptr<const Scenario>& scenario, double eps,
                           const RewardConfig& reward_cfg, std::mt19937_64& rng,
                           const std::function<std::shared_ptr<const RsrpMatrix>()>& take_observation = {}) {
  RolloutResult out;
  const Scenario& s = *scenario;
  GraphState g = initial_graph(s);
  while (!g.terminal()) {
    const auto acts = valid_actions(g, s.P);
    const int k = explore_or(choose, g, s.P, static_cast<int>(acts.size()), eps, rng);
    GraphState next = apply_action(g, acts[static_cast<size_t>(k)], s.P);
    const double r = reward(g, next, s.P, s.spec.channel, reward_cfg);
    out.episode_return += r;
    const bool done = next.terminal();
    out.experiences.push_back({scenario, g, k, r, next, done, take_observation ? take_observation() : nullptr});
    g = std::move(next);
  }
  out.final_state = std::move(g);
  return out;
}

Candidate stored_candidate(const Experience& e, const NormStats& norm) {
  const Scenario& s = *e.scenario;
  const auto acts = valid_actions(e.state, s.P);
  const Action& a = acts.at(static_cast<size_t>(e.action));
  std::vector<int> serving = e.state.serving;
  serving[static_cast<size_t>(a.ue_id)] = a.cell_id;
  return build_candidate(e.state, serving, a, capacity_matrix(e.observed ? *e.observed : s.P, s.spec.channel), norm);
}

}  // namespace

RolloutResult rollout_episode(const GnnParams& params, const std::shared_ptr<const Scenario>& scenario,
                              const NormStats& norm, double explore_eps, const RewardConfig& reward_cfg,
                              std::mt19937_64& rng) {
  return rollout_with(greedy_chooser(params, norm, scenario->spec.channel), scenario, explore_eps, reward_cfg, rng);
}

double q_value(const GnnParams& params, const Experience& e, const NormStats& norm) {
  const Candidate c = stored_candidate(e, norm);
  return forward_score(params, graph_input(c, e.state.cell_adjacency));
}

double td_target(const GnnParams& target, const Experience& e, double gamma, const NormStats& norm) {
  if (e.terminal) return e.reward;
  const Scenario& s = *e.scenario;
  const auto scores = score_candidates(target, build_candidates(e.next, s.P, s.spec.channel, norm));
  return e.reward + gamma * *std::max_element(scores.begin(), scores.end());
}

double td_loss_gradient(const GnnParams& params, const GnnParams& target, std::span<const Experience* const> batch,
                        double gamma, const NormStats& norm, GnnParams& grad) {
  if (batch.empty()) throw std::invalid_argument("dqn_update on an empty batch");
  if (!grad.same_architecture(params)) grad = GnnParams::zeros(params.dims);
  const double B = static_cast<double>(batch.size());
  double loss = 0.0;
  for (const Experience* e : batch) {
    const double y = td_target(target, *e, gamma, norm);
    const Candidate c = stored_candidate(*e, norm);
    const GraphInput in = graph_input(c, e->state.cell_adjacency);
    GnnTrace tr;
    const double q = forward_score(params, in, &tr);
    loss += (q - y) * (q - y) / B;
    if (q != y) backward_score(params, in, tr, 2.0 * (q - y) / B, &grad, nullptr);
  }
  return loss;
}

void clip_gradient(GnnParams& grad, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = grad.flatten().norm();
  if (n > max_norm) grad.axpy(max_norm / n - 1.0, GnnParams(grad));
}

double dqn_update(GnnParams& params, const GnnParams& target, std::span<const Experience* const> batch, double gamma,
                  double lr, const NormStats& norm, double grad_clip) {
  GnnParams grad = GnnParams::zeros(params.dims);
  const double loss = td_loss_gradient(params, target, batch, gamma, norm, grad);
  clip_gradient(grad, grad_clip);
  if (lr != 0.0) params.axpy(-lr, grad);
  return loss;
}

NormStats fit_suite_norm(std::span<const Scenario> suite, std::uint64_t seed) {
  NormStats identity;
  identity.max.fill(1.0);
  std::mt19937_64 rng(seed);
  std::vector<FeatureSet> feats;
  const auto collect = [&](const Scenario& s, const Chooser& choose) {
    GraphState g = initial_graph(s);
    while (!g.terminal()) {
      for (const auto& c : build_candidates(g, s.P, s.spec.channel, identity).candidates) feats.push_back(c.raw);
      const auto acts = valid_actions(g, s.P);
      g = apply_action(g, acts[static_cast<size_t>(choose(g, s.P))], s.P);
    }
  };
  for (const auto& s : suite) {
    collect(s, maxrsrp_choice);
    collect(s, [&](const GraphState& g, const RsrpMatrix& P) {
      const int K = static_cast<int>(valid_actions(g, P).size());
      return std::uniform_int_distribution<int>(0, K - 1)(rng);
    });
  }
  if (feats.empty()) throw std::invalid_argument("suite has no cell-edge UEs to fit feature statistics on");
  return fit_norm(feats);
}

void write_train_log(const std::string& path, std::span<const TrainLogRow> rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "episode,return,loss,eval_coverage\n" << std::setprecision(10);
  for (const auto& r : rows) {
    f << r.episode << ',' << r.episode_return << ',' << r.loss << ',';
    if (r.eval_coverage) f << *r.eval_coverage;
    f << '\n';
  }
}

TrainResult train(const GnnParams& init, std::span<const Scenario> suite, const NormStats& norm,
                  const TrainConfig& cfg, const TrainHooks& hooks, std::span<const Scenario> validation) {
  cfg.validate();
  TrainResult res;
  res.params = init;
  if (cfg.episodes == 0) return res;
  if (suite.empty()) throw std::invalid_argument("training needs at least one scenario");

  std::vector<std::shared_ptr<const Scenario>> shared;
  for (const auto& s : suite) shared.push_back(std::make_shared<const Scenario>(s));

  std::mt19937_64 rng(cfg.seed);
  ReplayBuffer buffer(cfg.buffer_capacity);
  GnnParams& params = res.params;
  GnnParams target = params;
  GnnParams best = params;
  double best_cov = -1.0;
  long updates = 0, steps = 0;

  const auto eval_set = validation.empty() ? suite : validation;
  const auto evaluate = [&] {
    if (hooks.evaluate) return hooks.evaluate(params);
    return evaluate_suite(eval_set, [&](int k) {
             return greedy_chooser(params, norm, eval_set[static_cast<size_t>(k)].spec.channel);
           }).coverage;
  };

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const auto& sc = shared[static_cast<size_t>(ep) % shared.size()];
    std::optional<ActingPolicy> acting;
    if (hooks.acting) acting = hooks.acting(ep, *sc, params, rng);
    const Chooser choose = acting ? acting->choose : greedy_chooser(params, norm, sc->spec.channel);
    RolloutResult roll =
        rollout_with(choose, sc, cfg.epsilon(ep), cfg.reward, rng, acting ? acting->take_observation : nullptr);

    TrainLogRow row;
    row.episode = ep;
    row.episode_return = roll.episode_return;
    int n_updates = 0;
    for (auto& e : roll.experiences) {
      buffer.push(std::move(e));
      if (buffer.size() < cfg.batch_size || ++steps % cfg.update_every != 0) continue;
      const auto batch = buffer.sample(cfg.batch_size, rng);
      GnnParams grad = GnnParams::zeros(params.dims);
      double loss = td_loss_gradient(params, target, batch, cfg.gamma, norm, grad);
      if (hooks.extra_loss) loss += hooks.extra_loss(params, batch, grad, rng);
      clip_gradient(grad, cfg.grad_clip);
      if (cfg.lr != 0.0) params.axpy(-cfg.lr, grad);
      row.loss += loss;
      ++n_updates;
      if (++updates % cfg.target_sync == 0) target = params;
    }
    if (n_updates) row.loss /= n_updates;
    if (cfg.eval_every > 0 && ((ep + 1) % cfg.eval_every == 0 || ep + 1 == cfg.episodes)) {
      row.eval_coverage = evaluate();
      if (*row.eval_coverage > best_cov) {
        best_cov = *row.eval_coverage;
        best = params;
      }
    }
    res.log.push_back(row);
  }
  if (!params.all_finite()) throw std::runtime_error("training diverged: non-finite parameters");
  res.best_eval_coverage = best_cov;
  if (cfg.keep_best && best_cov >= 0.0) params = best;
  return res;
}

}  // namespace cmguard
