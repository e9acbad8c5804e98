#include "cmguard/defense.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "cmguard/metrics.hpp"

namespace cmguard {

void DefenseConfig::validate() const {
  if (kappa < 0.0) throw std::invalid_argument("kappa must be >= 0");
  if (hinge_cap < 0.0) throw std::invalid_argument("hinge_cap must be >= 0");
  if (pnr_train_range.empty()) throw std::invalid_argument("pnr_train_range must be non-empty");
  for (double p : pnr_train_range)
    if (!(p >= 0.0)) throw std::invalid_argument("training PNR values must be >= 0");
  if (inner_steps < 0 || inner_restarts < 1 || episodes < 0 || benign_per_attacked < 0 || lr < 0.0 ||
      epsilon < 0.0 || epsilon > 1.0 || eval_every < 0)
    throw std::invalid_argument("invalid defense hyper-parameters");
  if (eval_every > 0 && select_pnrs.empty()) throw std::invalid_argument("keep-best selection needs select_pnrs");
  for (double p : select_pnrs)
    if (!(p >= 0.0)) throw std::invalid_argument("selection PNR values must be >= 0");
}

std::string to_string(DefenseKind k) { return k == DefenseKind::adversarial ? "adversarial" : "regularized"; }

DefenseKind defense_kind_from(const std::string& s) {
  if (s == "adversarial") return DefenseKind::adversarial;
  if (s == "regularized") return DefenseKind::regularized;
  throw std::invalid_argument("unknown defense kind '" + s + "'");
}

namespace {

double draw_pnr(const std::vector<double>& range, std::mt19937_64& rng) {
  // A single-value range consumes no randomness, so {0} replays benign runs exactly.
  if (range.size() == 1) return range.front();
  return range[std::uniform_int_distribution<std::size_t>(0, range.size() - 1)(rng)];
}

struct Margin {
  double value = 0.0;
  int rival = -1;
  std::vector<double> d_scores;  // d value / d scores
};

// max over a != star of qbar_a - qbar_star, with its gradient w.r.t. scores.
Margin margin_of(const std::vector<double>& scores, int star, MarginOn on) {
  const std::vector<double> q = on == MarginOn::probs ? softmax(scores) : scores;
  Margin m;
  for (int k = 0; k < static_cast<int>(q.size()); ++k)
    if (k != star && (m.rival < 0 || q[static_cast<size_t>(k)] > q[static_cast<size_t>(m.rival)])) m.rival = k;
  const auto a = static_cast<size_t>(m.rival);
  const auto b = static_cast<size_t>(star);
  m.value = q[a] - q[b];
  m.d_scores.assign(q.size(), 0.0);
  if (on == MarginOn::raw_q) {
    m.d_scores[a] = 1.0;
    m.d_scores[b] = -1.0;
  } else {
    for (size_t k = 0; k < q.size(); ++k)
      m.d_scores[k] = q[a] * ((k == a) - q[k]) - q[b] * ((k == b) - q[k]);
  }
  return m;
}

}  // namespace

double hinge(double margin, double cap) { return std::max(margin, -cap); }

HingeTerm hinge_term(const GnnParams& params, const GraphState& state, const RsrpMatrix& P, const ChannelParams& ch,
                     const NormStats& norm, double pnr, const DefenseConfig& cfg, std::mt19937_64& rng,
                     GnnParams* grad, double scale) {
  HingeTerm h;
  const CandidateBatch clean = build_candidates(state, P, ch, norm);
  if (clean.size() < 2) {
    h.skipped = true;
    return h;
  }
  const int star = argmax(score_candidates(params, clean));

  Eigen::VectorXd mask(P.size());
  for (Eigen::Index k = 0; k < P.size(); ++k) mask(k) = std::isfinite(P.reshaped()(k)) ? 1.0 : 0.0;
  const auto perturbed = [&](const Eigen::VectorXd& delta) {
    RsrpMatrix out = P;
    out.reshaped() += delta;
    return out;
  };
  const PgdObjective f = [&](const Eigen::VectorXd& delta, Eigen::VectorXd* g) {
    auto tape = StepTape::from_rsrp(params, state, perturbed(delta), ch, norm);
    const Margin m = margin_of(tape.scores(), star, cfg.margin_on);
    if (g) *g = tape.backward(m.d_scores, {Leaf::rsrp}).P.reshaped();
    return m.value;
  };
  const PgdResult r = pgd_solve(f, P.size(), mask, pnr, PgdSettings{cfg.inner_steps, -1.0, cfg.inner_restarts}, rng);
  h.margin = r.objective;
  h.value = hinge(h.margin, cfg.hinge_cap);
  if (grad && h.margin > -cfg.hinge_cap) {
    auto tape = StepTape::from_rsrp(params, state, perturbed(r.delta), ch, norm);
    const Margin m = margin_of(tape.scores(), star, cfg.margin_on);
    grad->axpy(scale, tape.backward(m.d_scores, {Leaf::params}).params);
  }
  return h;
}

HingeResult hinge_regularizer(const GnnParams& params, std::span<const Experience* const> batch,
                              const NormStats& norm, const DefenseConfig& cfg, std::mt19937_64& rng,
                              GnnParams* grad, double scale) {
  HingeResult res;
  const std::size_t n =
      cfg.hinge_states > 0 ? std::min(batch.size(), static_cast<std::size_t>(cfg.hinge_states)) : batch.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Experience& e = *batch[k];
    const Scenario& s = *e.scenario;
    const double pnr = draw_pnr(cfg.pnr_train_range, rng);
    res.terms.push_back(hinge_term(params, e.state, s.P, s.spec.channel, norm, pnr, cfg, rng, grad, scale));
    res.value += res.terms.back().value;
  }
  return res;
}

double regularized_update(GnnParams& params, const GnnParams& target, std::span<const Experience* const> batch,
                          double gamma, double lr, const NormStats& norm, const DefenseConfig& cfg,
                          std::mt19937_64& rng, double grad_clip) {
  GnnParams grad = GnnParams::zeros(params.dims);
  double loss = td_loss_gradient(params, target, batch, gamma, norm, grad);
  if (cfg.kappa != 0.0) loss += cfg.kappa * hinge_regularizer(params, batch, norm, cfg, rng, &grad, cfg.kappa).value;
  clip_gradient(grad, grad_clip);
  if (lr != 0.0) params.axpy(-lr, grad);
  return loss;
}

Checkpoint finetune_defense(const Checkpoint& ck, std::span<const Scenario> suite, const DefenseConfig& cfg,
                            const AdversarialRollout& adv, std::vector<TrainLogRow>* log) {
  cfg.validate();
  TrainConfig tc = ck.train;
  tc.episodes = cfg.episodes;
  tc.eps_start = tc.eps_end = cfg.epsilon;
  tc.lr = cfg.lr;
  tc.seed = cfg.seed;
  tc.keep_best = cfg.eval_every > 0;
  tc.eval_every = cfg.eval_every;

  const NormStats norm = ck.norm;
  TrainHooks hooks;
  if (cfg.kind == DefenseKind::regularized && cfg.kappa != 0.0) {
    hooks.extra_loss = [&](const GnnParams& params, std::span<const Experience* const> batch, GnnParams& grad,
                           std::mt19937_64& rng) {
      return cfg.kappa * hinge_regularizer(params, batch, norm, cfg, rng, &grad, cfg.kappa).value;
    };
  }
  if (cfg.kind == DefenseKind::adversarial) {
    hooks.acting = [&](int episode, const Scenario& sc, const GnnParams& params,
                       std::mt19937_64& rng) -> std::optional<ActingPolicy> {
      if (episode % (cfg.benign_per_attacked + 1) != cfg.benign_per_attacked) return std::nullopt;
      const ChannelParams ch = sc.spec.channel;
      auto seen = std::make_shared<std::shared_ptr<const RsrpMatrix>>();
      ActingPolicy policy;
      policy.choose = [&params, &rng, &cfg, &adv, norm, ch, seen](const GraphState& g, const RsrpMatrix& P) {
        AttackConfig ac;
        ac.surface = Surface::physical;
        ac.budget = draw_pnr(cfg.pnr_train_range, rng);
        ac.pgd = adv.pgd;
        ac.target = adv.target;
        const PerturbationResult r = rsrp_step_attack(params, params, g, P, ch, norm, ac, rng);
        if (cfg.store_perturbed && ac.budget > 0.0) *seen = std::make_shared<const RsrpMatrix>(P + r.delta_p);
        return r.action_after;
      };
      policy.take_observation = [seen] { return std::exchange(*seen, nullptr); };
      return policy;
    };
  }
  if (cfg.eval_every > 0) {
    hooks.evaluate = [&](const GnnParams& params) {
      double score = 0.0;
      for (double pnr : cfg.select_pnrs) {
        AttackConfig ac;
        ac.budget = pnr;
        ac.pgd = adv.pgd;
        ac.target = adv.target;
        std::vector<GraphState> finals;
        for (const auto& s : suite) finals.push_back(attacked_episode(params, params, s, norm, ac).outcome.final_state);
        score += suite_metrics(suite, finals).coverage;
      }
      return score / static_cast<double>(cfg.select_pnrs.size());
    };
  }
  TrainResult tr = train(ck.params, suite, norm, tc, hooks);
  if (log) *log = std::move(tr.log);
  Checkpoint out = ck;
  out.params = std::move(tr.params);
  out.defense = cfg;
  return out;
}

Checkpoint adversarial_finetune(const Checkpoint& ck, std::span<const Scenario> suite, DefenseConfig cfg,
                                const AdversarialRollout& adv) {
  cfg.kind = DefenseKind::adversarial;
  return finetune_defense(ck, suite, cfg, adv);
}

Checkpoint regularized_finetune(const Checkpoint& ck, std::span<const Scenario> suite, DefenseConfig cfg) {
  cfg.kind = DefenseKind::regularized;
  return finetune_defense(ck, suite, cfg);
}

}  // namespace cmguard
