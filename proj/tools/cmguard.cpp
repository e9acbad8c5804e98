// Command-line front end: scenario generation, training, defenses,
// evaluation, attacks and sweeps. Every run writes manifest.json to --out.

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmguard/defense.hpp"
#include "cmguard/experiment.hpp"

namespace fs = std::filesystem;
using namespace cmguard;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  fs::path out = "out";
  std::string suite;  // scenario dir/file; empty = default suite
  int suite_count = 5;
  std::uint64_t suite_seed = 100;
};

std::vector<Scenario> suite_of(const Globals& g, std::vector<std::string>* names) {
  if (!g.suite.empty()) return load_scenarios(g.suite, names);
  return default_suite(g.suite_count, g.suite_seed);
}

nlohmann::json manifest_config(const CLI::App& app, const CLI::App* sub) {
  nlohmann::json j;
  j["resolved"] = app.config_to_str(true, false);
  j["subcommand"] = sub ? sub->get_name() : "";
  return j;
}

const std::map<std::string, Utility> kUtilities{{"log_rate", Utility::log_rate}, {"sum_rate", Utility::sum_rate}};
const std::map<std::string, Surface> kSurfaces{
    {"digital", Surface::digital}, {"physical", Surface::physical}, {"patch", Surface::patch}};
const std::map<std::string, AttackMode> kModes{{"whitebox", AttackMode::whitebox}, {"blackbox", AttackMode::blackbox}};
const std::map<std::string, DefenseKind> kDefenses{{"adversarial", DefenseKind::adversarial},
                                                   {"regularized", DefenseKind::regularized}};
const std::map<std::string, MarginOn> kMargins{{"probs", MarginOn::probs}, {"raw_q", MarginOn::raw_q}};
const std::map<std::string, TargetSpec::Kind> kTargets{{"macro", TargetSpec::Kind::macro_overload},
                                                       {"worst", TargetSpec::Kind::worst_action}};

void write_outputs(const fs::path& out, const ExperimentResult& res, const std::string& title) {
  write_metrics_csv(out / "metrics.csv", res.rows);
  if (!res.steps.empty()) write_attack_csv(out / "attack.csv", res.steps);
  write_coverage_svg(out / "coverage.svg", res.rows, title);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmguard: GNN-based connection management under adversarial attack"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_config("--config", "", "TOML/INI file with option values");
  Globals g;
  app.add_option("--seed", g.seed, "Seed for generation, training and attacks")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--suite", g.suite, "Scenario directory or file (default: generated suite)");
  app.add_option("--suite-count", g.suite_count, "Scenarios in the generated suite")->capture_default_str();
  app.add_option("--suite-seed", g.suite_seed, "First seed of the generated suite")->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "Generate scenario files");
  int gen_count = 5;
  ScenarioSpec spec;
  gen->add_option("--scenarios", gen_count, "Number of scenarios")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--cells", spec.N, "Cells per scenario")->capture_default_str();
  gen->add_option("--ues", spec.M, "UEs per scenario")->capture_default_str();
  gen->add_option("--macros", spec.num_macro, "Macro cells")->capture_default_str();
  gen->add_option("--area", spec.area, "Square side, meters")->capture_default_str();
  gen->add_option("--edge-gap", spec.edge_gap_threshold, "Cell-edge RSRP gap, dB")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train the DQN policy");
  TrainConfig tc;
  bool no_keep_best = false;
  tr->add_option("--episodes", tc.episodes)->capture_default_str();
  tr->add_option("--gamma", tc.gamma)->capture_default_str();
  tr->add_option("--lr", tc.lr)->capture_default_str();
  tr->add_option("--batch", tc.batch_size)->capture_default_str();
  tr->add_option("--buffer", tc.buffer_capacity)->capture_default_str();
  tr->add_option("--target-sync", tc.target_sync)->capture_default_str();
  tr->add_option("--eps-start", tc.eps_start)->capture_default_str();
  tr->add_option("--eps-end", tc.eps_end)->capture_default_str();
  tr->add_option("--eps-decay", tc.eps_decay_fraction, "Fraction of episodes for the epsilon decay")
      ->capture_default_str();
  tr->add_option("--grad-clip", tc.grad_clip)->capture_default_str();
  tr->add_option("--eval-every", tc.eval_every)->capture_default_str();
  tr->add_flag("--no-keep-best", no_keep_best, "Return the final rather than the best-evaluated parameters");
  tr->add_option("--hidden", tc.dims.hidden)->capture_default_str();
  tr->add_option("--layers", tc.dims.layers)->capture_default_str();
  tr->add_option("--lambda", tc.reward.lambda, "Fairness weight in the reward")->capture_default_str();
  tr->add_option("--utility", tc.reward.utility)->transform(CLI::CheckedTransformer(kUtilities));

  // finetune
  auto* ft = app.add_subcommand("finetune", "Fine-tune a checkpoint with a defense");
  DefenseConfig dc;
  fs::path ft_model;
  ft->add_option("--model", ft_model, "Base checkpoint")->required()->check(CLI::ExistingFile);
  ft->add_option("--kind", dc.kind)->transform(CLI::CheckedTransformer(kDefenses));
  ft->add_option("--episodes", dc.episodes)->capture_default_str();
  ft->add_option("--kappa", dc.kappa)->capture_default_str();
  ft->add_option("--hinge-cap", dc.hinge_cap)->capture_default_str();
  ft->add_option("--pnr-range", dc.pnr_train_range, "Training PNR values, dB")->capture_default_str();
  ft->add_option("--inner-steps", dc.inner_steps)->capture_default_str();
  ft->add_option("--hinge-states", dc.hinge_states)->capture_default_str();
  ft->add_option("--margin", dc.margin_on)->transform(CLI::CheckedTransformer(kMargins));
  ft->add_option("--lr", dc.lr)->capture_default_str();
  ft->add_option("--epsilon", dc.epsilon)->capture_default_str();
  ft->add_option("--eval-every", dc.eval_every, "Keep-best selection interval (0 keeps the final parameters)")
      ->capture_default_str();
  ft->add_option("--select-pnr", dc.select_pnrs, "Attack PNRs in the selection score, dB")->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a policy on the suite");
  std::string policy = "gnn";
  fs::path ev_model;
  std::vector<double> noise;
  int noise_instances = 8;
  ev->add_option("--policy", policy)->check(CLI::IsMember({"gnn", "maxrsrp"}))->capture_default_str();
  ev->add_option("--model", ev_model, "Checkpoint (gnn policy)")->check(CLI::ExistingFile);
  ev->add_option("--noise-pnr", noise, "Uniform-noise PNRs for maxrsrp, dB");
  ev->add_option("--noise-instances", noise_instances)->capture_default_str();

  // attack and sweep share the grid options
  auto* at = app.add_subcommand("attack", "Attack a checkpoint");
  auto* sw = app.add_subcommand("sweep", "Full grid over models, attacks and noise");
  fs::path at_model;
  std::vector<std::string> sweep_models;
  Surface surface = Surface::physical;
  std::vector<Surface> surfaces;
  std::vector<double> budgets;
  std::vector<int> widths{10};
  AttackMode mode = AttackMode::whitebox;
  std::vector<AttackMode> modes;
  std::vector<std::uint64_t> seeds;
  PgdSettings pgd;
  TargetSpec target;
  at->add_option("--model", at_model, "Checkpoint to attack")->required()->check(CLI::ExistingFile);
  at->add_option("--surface", surface)->transform(CLI::CheckedTransformer(kSurfaces));
  at->add_option("--pnr,--budget", budgets, "Budgets: dB for physical/patch, normalized units for digital")
      ->required();
  at->add_option("--mode", mode)->transform(CLI::CheckedTransformer(kModes));
  sw->add_option("--model", sweep_models, "label=checkpoint, repeatable (e.g. none=m.ckpt)");
  sw->add_option("--surfaces", surfaces)->transform(CLI::CheckedTransformer(kSurfaces));
  sw->add_option("--budgets", budgets);
  sw->add_option("--modes", modes)->transform(CLI::CheckedTransformer(kModes));
  sw->add_option("--noise-pnr", noise);
  sw->add_option("--noise-instances", noise_instances)->capture_default_str();
  for (auto* sub : {at, sw}) {
    sub->add_option("--width", widths, "Patch widths (lowest UE ids)")->capture_default_str();
    sub->add_option("--seeds", seeds, "Attack seeds (default: --seed)");
    sub->add_option("--steps", pgd.steps)->capture_default_str();
    sub->add_option("--step-size", pgd.step_size, "Negative: 2.5 * budget / steps")->capture_default_str();
    sub->add_option("--restarts", pgd.restarts)->capture_default_str();
    sub->add_option("--target", target.kind)->transform(CLI::CheckedTransformer(kTargets));
    sub->add_option("--macro-cell", target.macro_cell)->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    fs::create_directories(g.out);
    const CLI::App* sub = app.get_subcommands().front();
    write_manifest(g.out, sub->get_name(), manifest_config(app, sub));

    if (sub == gen) {
      for (int k = 0; k < gen_count; ++k) {
        ScenarioSpec s = spec;
        s.seed = g.seed + static_cast<std::uint64_t>(k);
        std::ostringstream name;
        name << "scenario_" << std::setw(3) << std::setfill('0') << k << ".json";
        save_scenario(make_scenario(s), g.out / name.str());
      }
      std::cout << "wrote " << gen_count << " scenarios to " << g.out.string() << "\n";
      return 0;
    }

    std::vector<std::string> names;
    const auto suite = suite_of(g, &names);

    if (sub == tr) {
      tc.seed = g.seed;
      tc.keep_best = !no_keep_best;
      Checkpoint ck;
      ck.norm = fit_suite_norm(suite, g.seed);
      ck.train = tc;
      const auto res = train(GnnParams::random(g.seed, tc.dims), suite, ck.norm, tc);
      ck.params = res.params;
      save_checkpoint(ck, g.out / "model.ckpt");
      write_train_log((g.out / "train_log.csv").string(), res.log);
      std::cout << "best eval coverage " << res.best_eval_coverage / 1e6 << " Mbps; wrote "
                << (g.out / "model.ckpt").string() << "\n";
      return 0;
    }

    if (sub == ft) {
      dc.seed = g.seed;
      const Checkpoint base = load_checkpoint(ft_model);
      std::vector<TrainLogRow> log;
      const Checkpoint out = finetune_defense(base, suite, dc, {}, &log);
      const auto path = g.out / (to_string(dc.kind) + ".ckpt");
      save_checkpoint(out, path);
      write_train_log((g.out / "finetune_log.csv").string(), log);
      std::cout << "wrote " << path.string() << "\n";
      return 0;
    }

    ExperimentPlan plan;
    plan.scenarios = suite;
    plan.scenario_names = names;
    plan.seeds = seeds.empty() ? std::vector<std::uint64_t>{g.seed} : seeds;
    plan.pgd = pgd;
    plan.target = target;
    plan.noise_pnrs = noise;
    plan.noise_instances = noise_instances;

    if (sub == ev) {
      plan.include_gnn = policy == "gnn";
      plan.include_maxrsrp = policy == "maxrsrp";
      if (plan.include_gnn) {
        if (ev_model.empty()) throw std::invalid_argument("--model is required for the gnn policy");
        plan.models["none"] = load_checkpoint(ev_model);
      }
      const auto res = run_experiment(plan);
      write_outputs(g.out, res, "coverage, " + policy);
      const auto& row = find_row(res.rows, policy, plan.include_gnn ? "none" : "-", "none", 0.0, "-", 0,
                                 plan.seeds.front());
      std::cout << policy << " coverage " << row.coverage / 1e6 << " Mbps, capacity " << row.capacity / 1e9
                << " Gbps\n";
      return 0;
    }

    if (sub == at) {
      const Checkpoint ck = load_checkpoint(at_model);
      plan.models[ck.defense ? to_string(ck.defense->kind) : "none"] = ck;
      plan.include_maxrsrp = false;
      plan.attacks = {{surface}, budgets, widths, {mode}};
    } else {
      for (const auto& m : sweep_models) {
        const auto eq = m.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--model expects label=path, got " + m);
        plan.models[m.substr(0, eq)] = load_checkpoint(m.substr(eq + 1));
      }
      plan.include_gnn = !plan.models.empty();
      plan.attacks = {surfaces, budgets, widths, modes.empty() ? std::vector<AttackMode>{AttackMode::whitebox} : modes};
    }
    const auto res = run_experiment(plan);
    write_outputs(g.out, res, sub == at ? "coverage under " + to_string(surface) + " attack" : "sweep");
    std::cout << "wrote " << res.rows.size() << " metric rows and " << res.steps.size() << " attack-step rows to "
              << g.out.string() << "\n";
    return 0;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
