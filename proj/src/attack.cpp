#include "cmguard/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cmguard/dqn.hpp"

namespace cmguard {

double PgdSettings::resolved_step(double budget) const {
  if (step_size >= 0.0) return step_size;
  return steps > 0 ? 2.5 * budget / steps : 0.0;
}

void AttackConfig::validate(const Scenario* s) const {
  if (!(budget >= 0.0)) throw std::invalid_argument("attack budget must be >= 0");
  if (pgd.steps < 0 || pgd.restarts < 1) throw std::invalid_argument("PGD needs steps >= 0 and restarts >= 1");
  if (surface == Surface::patch && patch_mask.empty()) throw std::invalid_argument("patch attack needs a non-empty mask");
  if (!s) return;
  for (int j : patch_mask)
    if (j < 0 || j >= s->num_ues()) throw std::invalid_argument("patch mask names an unknown UE");
  if (target.kind == TargetSpec::Kind::macro_overload) {
    const int c = target.macro_cell;
    if (c < 0 || c >= s->num_cells() || s->deployment.cells[static_cast<size_t>(c)].kind != CellKind::macro)
      throw std::invalid_argument("target cell is not a macro cell");
  }
}

PgdResult pgd_solve(const PgdObjective& f, Eigen::Index dim, const Eigen::VectorXd& free_mask, double budget,
                    const PgdSettings& settings, std::mt19937_64& rng) {
  if (free_mask.size() != 0 && free_mask.size() != dim) throw std::invalid_argument("PGD mask has the wrong size");
  const Eigen::VectorXd mask = free_mask.size() ? free_mask : Eigen::VectorXd::Ones(dim);
  const double alpha = settings.resolved_step(budget);
  std::uniform_real_distribution<double> u(-budget, budget);

  PgdResult best;
  best.delta = Eigen::VectorXd::Zero(dim);
  bool have_best = false;
  for (int r = 0; r < settings.restarts; ++r) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(dim);
    if (r > 0)
      for (Eigen::Index k = 0; k < dim; ++k) delta(k) = mask(k) != 0.0 ? u(rng) : 0.0;
    Eigen::VectorXd grad(dim);
    for (int t = 0; t <= settings.steps; ++t) {
      const bool last = t == settings.steps;
      const double v = f(delta, last ? nullptr : &grad);
      best.trace.push_back(v);
      if (r == 0 && t == 0) best.clean_objective = v;
      if (!have_best || v > best.objective) {
        best.objective = v;
        best.delta = delta;
        have_best = true;
      }
      if (last) break;
      for (Eigen::Index k = 0; k < dim; ++k) {
        if (mask(k) == 0.0) continue;
        const double g = grad(k);
        const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        delta(k) = std::clamp(delta(k) + alpha * s, -budget, budget);
      }
    }
  }
  return best;
}

int select_target(const CandidateBatch& batch, const std::vector<double>& probs, const TargetSpec& spec) {
  if (batch.candidates.empty()) throw std::invalid_argument("select_target: K = 0");
  if (spec.kind == TargetSpec::Kind::macro_overload)
    for (int k = 0; k < batch.size(); ++k)
      if (batch.candidates[static_cast<size_t>(k)].action.cell_id == spec.macro_cell) return k;
  return argmin(probs);
}

namespace {

// d log p_T / d scores = e_T - p.
std::vector<double> log_prob_grad(const std::vector<double>& probs, int target) {
  std::vector<double> d(probs.size());
  for (size_t k = 0; k < d.size(); ++k) d[k] = (static_cast<int>(k) == target ? 1.0 : 0.0) - probs[k];
  return d;
}

Eigen::VectorXd rsrp_mask(const RsrpMatrix& P, const AttackConfig& cfg) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(P.rows(), P.cols());
  std::vector<char> col(static_cast<size_t>(P.cols()), cfg.surface != Surface::patch);
  for (int j : cfg.patch_mask)
    if (cfg.surface == Surface::patch) col.at(static_cast<size_t>(j)) = 1;
  for (Eigen::Index j = 0; j < P.cols(); ++j)
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      if (col[static_cast<size_t>(j)] && std::isfinite(P(i, j))) m(i, j) = 1.0;
  return m.reshaped();
}

RsrpMatrix perturbed(const RsrpMatrix& P, const Eigen::VectorXd& delta) {
  RsrpMatrix out = P;
  // Masked entries carry delta 0, so -inf + 0 stays -inf.
  out.reshaped() += delta;
  return out;
}

bool has_norm(const NormStats& n) {
  for (int c = 0; c < 6; ++c)
    if (n.span(c) != 0.0) return true;
  return false;
}

}  // namespace

PerturbationResult rsrp_step_attack(const GnnParams& attacker, const GnnParams& victim, const GraphState& state,
                                    const RsrpMatrix& P, const ChannelParams& ch, const NormStats& norm,
                                    const AttackConfig& cfg, std::mt19937_64& rng) {
  const CandidateBatch clean = build_candidates(state, P, ch, norm);
  PerturbationResult res;
  res.target = select_target(clean, action_probs(attacker, clean), cfg.target);
  res.action_before = argmax(score_candidates(victim, clean));

  const PgdObjective f = [&](const Eigen::VectorXd& delta, Eigen::VectorXd* grad) {
    auto tape = StepTape::from_rsrp(attacker, state, perturbed(P, delta), ch, norm);
    const auto probs = tape.probs();
    const double v = std::log(std::max(probs[static_cast<size_t>(res.target)], 1e-300));
    if (grad) *grad = tape.backward(log_prob_grad(probs, res.target), {Leaf::rsrp}).P.reshaped();
    return v;
  };
  const Eigen::VectorXd mask = rsrp_mask(P, cfg);
  const PgdResult r = pgd_solve(f, P.size(), mask, cfg.budget, cfg.pgd, rng);
  res.delta_p = r.delta.reshaped(P.rows(), P.cols());
  res.objective = r.objective;
  res.clean_objective = r.clean_objective;
  res.objective_trace = r.trace;
  res.achieved_norm = r.delta.size() ? r.delta.cwiseAbs().maxCoeff() : 0.0;
  res.action_after = greedy_choice(victim, state, perturbed(P, r.delta), ch, norm);
  return res;
}

PerturbationResult digital_step_attack(const GnnParams& attacker, const GnnParams& victim, const GraphState& state,
                                       const RsrpMatrix& P, const ChannelParams& ch, const NormStats& norm,
                                       const AttackConfig& cfg, std::mt19937_64& rng) {
  if (!has_norm(norm)) throw std::invalid_argument("digital attack needs fitted feature statistics");
  const CandidateBatch clean = build_candidates(state, P, ch, norm);
  PerturbationResult res;
  res.target = select_target(clean, action_probs(attacker, clean), cfg.target);
  res.action_before = argmax(score_candidates(victim, clean));

  // Layout of delta: E shared entries, then |own| entries per candidate.
  const size_t K = clean.candidates.size();
  std::vector<Eigen::VectorXd> flat;
  for (const auto& c : clean.candidates) flat.push_back(c.normalized.flatten());
  const Eigen::Index E = flat.front().size();
  std::vector<Eigen::Index> own;
  Eigen::VectorXd shared_mask = Eigen::VectorXd::Ones(E);
  for (Eigen::Index e = 0; e < E; ++e)
    for (size_t k = 1; k < K; ++k)
      if (flat[k](e) != flat[0](e)) {
        own.push_back(e);
        shared_mask(e) = 0.0;
        break;
      }
  const Eigen::Index O = static_cast<Eigen::Index>(own.size());
  const Eigen::Index dim = E + static_cast<Eigen::Index>(K) * O;
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(dim);
  mask.head(E) = shared_mask;

  const FeatureSet shape = FeatureSet::zeros_like(clean.candidates.front().normalized);
  const auto unpack = [&](const Eigen::VectorXd& delta, FeatureSet& shared, std::vector<FeatureSet>& per) {
    shared = shape;
    shared.unflatten(delta.head(E));
    per.assign(K, shape);
    for (size_t k = 0; k < K; ++k) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(E);
      for (Eigen::Index o = 0; o < O; ++o) v(own[static_cast<size_t>(o)]) = delta(E + static_cast<Eigen::Index>(k) * O + o);
      per[k].unflatten(v);
    }
  };
  const PgdObjective f = [&](const Eigen::VectorXd& delta, Eigen::VectorXd* grad) {
    FeatureSet shared;
    std::vector<FeatureSet> per;
    unpack(delta, shared, per);
    auto tape = StepTape::from_features(attacker, clean, shared, per);
    const auto probs = tape.probs();
    const double v = std::log(std::max(probs[static_cast<size_t>(res.target)], 1e-300));
    if (grad) {
      const auto g = tape.backward(log_prob_grad(probs, res.target), {Leaf::features});
      grad->resize(dim);
      grad->head(E) = g.features.flatten().cwiseProduct(shared_mask);
      for (size_t k = 0; k < K; ++k) {
        const Eigen::VectorXd gk = g.candidate_features[k].flatten();
        for (Eigen::Index o = 0; o < O; ++o)
          (*grad)(E + static_cast<Eigen::Index>(k) * O + o) = gk(own[static_cast<size_t>(o)]);
      }
    }
    return v;
  };
  const PgdResult r = pgd_solve(f, dim, mask, cfg.budget, cfg.pgd, rng);
  std::vector<FeatureSet> per;
  unpack(r.delta, res.delta_x, per);
  for (auto& p : per) {
    p += res.delta_x;
    res.candidate_delta_x.push_back(std::move(p));
  }
  res.objective = r.objective;
  res.clean_objective = r.clean_objective;
  res.objective_trace = r.trace;
  res.achieved_norm = r.delta.size() ? r.delta.cwiseAbs().maxCoeff() : 0.0;
  const FeatureSet none = shape;
  auto victim_tape = StepTape::from_features(victim, clean, none, res.candidate_delta_x);
  res.action_after = argmax(victim_tape.scores());
  return res;
}

AttackedEpisode attacked_episode(const GnnParams& victim, const GnnParams& attacker, const Scenario& s,
                                 const NormStats& norm, const AttackConfig& cfg) {
  cfg.validate(&s);
  if (!attacker.same_architecture(victim)) throw std::invalid_argument("surrogate architecture differs from victim");
  AttackedEpisode ep;
  std::mt19937_64 rng(cfg.seed);
  const auto& ch = s.spec.channel;
  const Chooser choose = [&](const GraphState& g, const RsrpMatrix& P) {
    PerturbationResult r = cfg.surface == Surface::digital
                               ? digital_step_attack(attacker, victim, g, P, ch, norm, cfg, rng)
                               : rsrp_step_attack(attacker, victim, g, P, ch, norm, cfg, rng);
    ep.steps.push_back(std::move(r));
    return ep.steps.back().action_after;
  };
  ep.outcome = run_episode(s, choose, RewardConfig{});
  return ep;
}

AttackedEpisode digital_attack(const GnnParams& params, const Scenario& s, const NormStats& norm,
                               const AttackConfig& cfg) {
  if (cfg.surface != Surface::digital) throw std::invalid_argument("digital_attack needs surface=digital");
  return attacked_episode(params, params, s, norm, cfg);
}

AttackedEpisode physical_attack(const GnnParams& params, const Scenario& s, const NormStats& norm,
                                const AttackConfig& cfg) {
  if (cfg.surface != Surface::physical) throw std::invalid_argument("physical_attack needs surface=physical");
  return attacked_episode(params, params, s, norm, cfg);
}

AttackedEpisode patch_attack(const GnnParams& params, const Scenario& s, const NormStats& norm,
                             const AttackConfig& cfg) {
  if (cfg.surface != Surface::patch) throw std::invalid_argument("patch_attack needs surface=patch");
  return attacked_episode(params, params, s, norm, cfg);
}

AttackedEpisode blackbox_transfer(const GnnParams& victim, const GnnParams& surrogate, const Scenario& s,
                                  const NormStats& norm, const AttackConfig& cfg) {
  return attacked_episode(victim, surrogate, s, norm, cfg);
}

std::vector<int> default_patch_mask(int width) {
  if (width < 1) throw std::invalid_argument("patch width must be positive");
  std::vector<int> m(static_cast<size_t>(width));
  std::iota(m.begin(), m.end(), 0);
  return m;
}

std::string to_string(Surface s) {
  switch (s) {
    case Surface::digital: return "digital";
    case Surface::physical: return "physical";
    case Surface::patch: return "patch";
  }
  return "?";
}

std::string to_string(AttackMode m) { return m == AttackMode::whitebox ? "whitebox" : "blackbox"; }

Surface surface_from(const std::string& s) {
  if (s == "digital") return Surface::digital;
  if (s == "physical") return Surface::physical;
  if (s == "patch") return Surface::patch;
  throw std::invalid_argument("unknown surface '" + s + "'");
}

AttackMode mode_from(const std::string& s) {
  if (s == "whitebox") return AttackMode::whitebox;
  if (s == "blackbox") return AttackMode::blackbox;
  throw std::invalid_argument("unknown attack mode '" + s + "'");
}

}  // namespace cmguard
