#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmguard/attack.hpp"
#include "cmguard/checkpoint.hpp"
#include "cmguard/metrics.hpp"

namespace cmguard {

struct AttackGrid {
  std::vector<Surface> surfaces;
  std::vector<double> budgets;
  std::vector<int> widths{10};  // patch surface only
  std::vector<AttackMode> modes{AttackMode::whitebox};

  bool empty() const { return surfaces.empty() || budgets.empty(); }
};

struct ExperimentPlan {
  std::vector<Scenario> scenarios;
  std::vector<std::string> scenario_names;  // defaults to s000, s001, ...
  bool include_gnn = true;
  bool include_maxrsrp = true;
  /// Defense label ("none", "adversarial", ...) -> model.
  std::map<std::string, Checkpoint> models;
  AttackGrid attacks;
  /// Uniform-noise PNRs for the maxRSRP baseline (dB).
  std::vector<double> noise_pnrs;
  int noise_instances = 8;
  /// Attack and noise seeds.
  std::vector<std::uint64_t> seeds{1};
  /// A black-box surrogate is GnnParams::random(surrogate_offset + seed),
  /// kept apart from the small seeds used to initialize training.
  std::uint64_t surrogate_offset = 7919;
  PgdSettings pgd;
  TargetSpec target;

  /// Throws std::invalid_argument on an empty suite, no seeds, a gnn policy
  /// without models, or a partially specified attack grid.
  void validate() const;
};

struct MetricsRow {
  std::string scenario;  // scenario name, or "suite" for the pooled row
  std::uint64_t seed = 0;
  std::string policy;    // gnn | maxrsrp
  std::string defense;   // model label; "-" for maxrsrp
  std::string surface;   // none | noise | digital | physical | patch
  std::string mode;      // whitebox | blackbox | -
  double budget = 0.0;
  int patch_width = 0;
  double coverage = 0.0;
  double capacity = 0.0;
  double mean_rate = 0.0;
  double episode_len = 0.0;
};

struct AttackStepRow {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string defense;
  std::string surface;
  std::string mode;
  double budget = 0.0;
  int patch_width = 0;
  int step = 0;
  double objective = 0.0;
  double coverage = 0.0;  // of the whole attacked episode
  double capacity = 0.0;
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::vector<AttackStepRow> steps;
};

/// Runs the grid in sorted key order. Deterministic for a fixed plan.
ExperimentResult run_experiment(const ExperimentPlan& plan);

/// Pooled-suite row matching the given keys; throws std::out_of_range if absent.
const MetricsRow& find_row(const std::vector<MetricsRow>& rows, const std::string& policy,
                           const std::string& defense, const std::string& surface, double budget,
                           const std::string& mode = "whitebox", int patch_width = 0, std::uint64_t seed = 1);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
void write_attack_csv(const std::filesystem::path& path, const std::vector<AttackStepRow>& rows);

/// One line per (policy, defense, surface, mode, width) series: pooled
/// coverage vs budget, averaged over seeds. Returns the number of series.
int write_coverage_svg(const std::filesystem::path& path, const std::vector<MetricsRow>& rows,
                       const std::string& title);

/// Loads every *.json scenario in a directory (sorted by name, manifest.json
/// skipped) or a single file.
std::vector<Scenario> load_scenarios(const std::filesystem::path& path, std::vector<std::string>* names = nullptr);

/// Default evaluation suite: N=6, M=50 scenarios with seeds first, first+1, ...
std::vector<Scenario> default_suite(int count, std::uint64_t first_seed);

/// Writes manifest.json: the given config plus build and library versions.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const nlohmann::json& config);

}  // namespace cmguard
