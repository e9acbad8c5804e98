#include "cmguard/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "cmguard/dqn.hpp"
#include "json_util.hpp"

namespace cmguard {

void ExperimentPlan::validate() const {
  if (scenarios.empty()) throw std::invalid_argument("experiment needs at least one scenario");
  if (!scenario_names.empty() && scenario_names.size() != scenarios.size())
    throw std::invalid_argument("scenario_names must match scenarios");
  if (seeds.empty()) throw std::invalid_argument("experiment seeds must be explicit");
  if (include_gnn && models.empty()) throw std::invalid_argument("gnn policy needs at least one model");
  if (attacks.surfaces.empty() != attacks.budgets.empty())
    throw std::invalid_argument("attack grid needs both surfaces and budgets");
  if (!attacks.empty() && attacks.modes.empty()) throw std::invalid_argument("attack grid needs a mode");
  for (double b : attacks.budgets)
    if (!(b >= 0.0)) throw std::invalid_argument("attack budgets must be >= 0");
  for (double p : noise_pnrs)
    if (!(p >= 0.0)) throw std::invalid_argument("noise PNRs must be >= 0");
  if (std::find(attacks.surfaces.begin(), attacks.surfaces.end(), Surface::patch) != attacks.surfaces.end() &&
      attacks.widths.empty())
    throw std::invalid_argument("patch surface needs widths");
  if (!noise_pnrs.empty() && noise_instances < 1) throw std::invalid_argument("noise_instances must be >= 1");
}

namespace {

std::string name_of(const ExperimentPlan& plan, size_t k) {
  if (!plan.scenario_names.empty()) return plan.scenario_names[k];
  std::ostringstream s;
  s << 's' << std::setw(3) << std::setfill('0') << k;
  return s.str();
}

// One row per scenario plus the pooled "suite" row.
void emit(const ExperimentPlan& plan, const SuiteMetrics& m, const MetricsRow& key, std::vector<MetricsRow>& out) {
  MetricsRow r = key;
  r.scenario = "suite";
  r.coverage = m.coverage;
  r.capacity = m.capacity;
  r.mean_rate = m.mean_rate;
  r.episode_len = m.episode_len;
  out.push_back(r);
  for (size_t k = 0; k < plan.scenarios.size(); ++k) {
    r.scenario = name_of(plan, k);
    r.coverage = m.scenario_coverage[k];
    r.capacity = m.scenario_capacity[k];
    r.mean_rate = m.scenario_mean_rate[k];
    r.episode_len = m.scenario_episode_len[k];
    out.push_back(r);
  }
}

auto sort_key(const MetricsRow& r) {
  return std::tie(r.policy, r.defense, r.surface, r.mode, r.patch_width, r.budget, r.seed, r.scenario);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  ExperimentResult res;
  const auto& suite = plan.scenarios;

  if (plan.include_gnn) {
    for (const auto& [label, ck] : plan.models) {
      const SuiteMetrics benign = evaluate_suite(suite, [&](int k) {
        return greedy_chooser(ck.params, ck.norm, suite[static_cast<size_t>(k)].spec.channel);
      });
      for (auto seed : plan.seeds) emit(plan, benign, {"", seed, "gnn", label, "none", "-", 0.0, 0}, res.rows);

      for (Surface surface : plan.attacks.surfaces) {
        const std::vector<int> widths = surface == Surface::patch ? plan.attacks.widths : std::vector<int>{0};
        for (AttackMode mode : plan.attacks.modes)
          for (int width : widths)
            for (double budget : plan.attacks.budgets)
              for (auto seed : plan.seeds) {
                AttackConfig cfg;
                cfg.surface = surface;
                cfg.budget = budget;
                cfg.pgd = plan.pgd;
                cfg.mode = mode;
                cfg.target = plan.target;
                cfg.seed = seed;
                if (surface == Surface::patch) cfg.patch_mask = default_patch_mask(width);
                const GnnParams attacker = mode == AttackMode::blackbox
                                               ? GnnParams::random(plan.surrogate_offset + seed, ck.params.dims)
                                               : ck.params;
                std::vector<GraphState> finals;
                std::vector<AttackedEpisode> episodes;
                for (const auto& s : suite) {
                  episodes.push_back(attacked_episode(ck.params, attacker, s, ck.norm, cfg));
                  finals.push_back(episodes.back().outcome.final_state);
                }
                const SuiteMetrics m = suite_metrics(suite, finals);
                emit(plan, m, {"", seed, "gnn", label, to_string(surface), to_string(mode), budget, width}, res.rows);
                for (size_t k = 0; k < suite.size(); ++k)
                  for (size_t t = 0; t < episodes[k].steps.size(); ++t)
                    res.steps.push_back({name_of(plan, k), seed, label, to_string(surface), to_string(mode), budget,
                                         width, static_cast<int>(t), episodes[k].steps[t].objective,
                                         m.scenario_coverage[k], m.scenario_capacity[k]});
              }
      }
    }
  }

  if (plan.include_maxrsrp) {
    const SuiteMetrics clean = maxrsrp_suite(suite);
    for (auto seed : plan.seeds) emit(plan, clean, {"", seed, "maxrsrp", "-", "none", "-", 0.0, 0}, res.rows);
    for (double pnr : plan.noise_pnrs)
      for (auto seed : plan.seeds)
        emit(plan, noisy_maxrsrp_eval(suite, pnr, plan.noise_instances, seed),
             {"", seed, "maxrsrp", "-", "noise", "-", pnr, 0}, res.rows);
  }

  std::stable_sort(res.rows.begin(), res.rows.end(),
                   [](const MetricsRow& a, const MetricsRow& b) { return sort_key(a) < sort_key(b); });
  return res;
}

const MetricsRow& find_row(const std::vector<MetricsRow>& rows, const std::string& policy,
                           const std::string& defense, const std::string& surface, double budget,
                           const std::string& mode, int patch_width, std::uint64_t seed) {
  const std::string m = surface == "none" || surface == "noise" ? "-" : mode;
  for (const auto& r : rows)
    if (r.scenario == "suite" && r.policy == policy && r.defense == defense && r.surface == surface &&
        r.budget == budget && r.mode == m && r.patch_width == patch_width && r.seed == seed)
      return r;
  throw std::out_of_range("no metrics row for " + policy + "/" + defense + "/" + surface);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  // Listed columns first; the attack mode trails so the fixed order holds.
  f << "scenario,seed,policy,defense,surface,budget,patch_width,coverage,capacity,mean_rate,episode_len,mode\n"
    << std::setprecision(12);
  for (const auto& r : rows)
    f << r.scenario << ',' << r.seed << ',' << r.policy << ',' << r.defense << ',' << r.surface << ',' << r.budget << ','
      << r.patch_width << ',' << r.coverage << ',' << r.capacity << ',' << r.mean_rate << ',' << r.episode_len << ','
      << r.mode << '\n';
}

void write_attack_csv(const std::filesystem::path& path, const std::vector<AttackStepRow>& rows) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "scenario,seed,surface,mode,budget,patch_width,step,objective,coverage,capacity,defense\n"
    << std::setprecision(12);
  for (const auto& r : rows)
    f << r.scenario << ',' << r.seed << ',' << r.surface << ',' << r.mode << ',' << r.budget << ',' << r.patch_width
      << ',' << r.step << ',' << r.objective << ',' << r.coverage << ',' << r.capacity << ',' << r.defense << '\n';
}

int write_coverage_svg(const std::filesystem::path& path, const std::vector<MetricsRow>& rows,
                       const std::string& title) {
  // series -> budget -> (sum, count); benign rows sit at budget 0 of every
  // attacked series of the same policy/defense.
  using Series = std::map<double, std::pair<double, int>>;
  std::map<std::string, Series> series;
  std::map<std::string, Series> benign;
  for (const auto& r : rows) {
    if (r.scenario != "suite") continue;
    const std::string base = r.policy + (r.defense == "-" ? "" : " " + r.defense);
    if (r.surface == "none") {
      auto& c = benign[base][0.0];
      c.first += r.coverage;
      c.second += 1;
      continue;
    }
    std::string name = base + " " + r.surface + (r.mode == "-" ? "" : " " + r.mode);
    if (r.patch_width > 0) name += " w" + std::to_string(r.patch_width);
    auto& c = series[name][r.budget];
    c.first += r.coverage;
    c.second += 1;
  }
  for (auto& [name, pts] : series)
    for (const auto& [base, b] : benign)
      if (name.rfind(base + " ", 0) == 0 && !pts.count(0.0)) pts[0.0] = b.at(0.0);
  if (series.empty()) series = benign;

  double xmax = 0.0, ymax = 0.0;
  for (const auto& [name, pts] : series)
    for (const auto& [x, c] : pts) {
      xmax = std::max(xmax, x);
      ymax = std::max(ymax, c.first / c.second / 1e6);
    }
  if (xmax <= 0.0) xmax = 1.0;
  if (ymax <= 0.0) ymax = 1.0;
  ymax *= 1.1;

  const double W = 640, H = 400, L = 60, R = 200, T = 40, B = 50;
  const auto sx = [&](double x) { return L + (W - L - R) * x / xmax; };
  const auto sy = [&](double y) { return H - B - (H - T - B) * y / ymax; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << std::fixed << std::setprecision(2);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << L << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  f << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double x = xmax * k / 4, y = ymax * k / 4;
    f << "<text x=\"" << sx(x) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << x << "</text>\n";
    f << "<text x=\"" << L - 5 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
  }
  f << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">budget</text>\n";
  f << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 15 " << (T + H - B) / 2
    << ")\" text-anchor=\"middle\">coverage (Mbps)</text>\n";
  int i = 0;
  for (const auto& [name, pts] : series) {
    const char* color = palette[i % 10];
    f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, c] : pts) f << sx(x) << ',' << sy(c.first / c.second / 1e6) << ' ';
    f << "\"/>\n";
    for (const auto& [x, c] : pts)
      f << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(c.first / c.second / 1e6) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    const double ly = T + 16.0 * i;
    f << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    f << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
    ++i;
  }
  f << "</svg>\n";
  return i;
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& path, std::vector<std::string>* names) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json")
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  if (files.empty()) throw DataError("no scenario files in " + path.string());
  std::vector<Scenario> out;
  for (const auto& f : files) {
    out.push_back(load_scenario(f));
    if (names) names->push_back(f.stem().string());
  }
  return out;
}

std::vector<Scenario> default_suite(int count, std::uint64_t first_seed) {
  std::vector<Scenario> out;
  for (int k = 0; k < count; ++k) {
    ScenarioSpec spec;
    spec.seed = first_seed + static_cast<std::uint64_t>(k);
    out.push_back(make_scenario(spec));
  }
  return out;
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const nlohmann::json& config) {
  nlohmann::json m;
  m["tool"] = "cmguard";
  m["version"] = "0.1.0";
  m["command"] = command;
  m["config"] = config;
  m["build"] = {{"compiler", __VERSION__},
                {"cxx_standard", __cplusplus},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                {"checkpoint_version", kCheckpointVersion}};
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "manifest.json");
  if (!f) throw DataError("cannot write manifest in " + dir.string());
  f << m.dump(2) << '\n';
}

}  // namespace cmguard
