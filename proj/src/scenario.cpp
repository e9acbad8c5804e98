#include "cmguard/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json_util.hpp"

namespace cmguard {

using detail::json;

double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

void ChannelParams::validate() const {
  if (!(n > 0.0)) throw std::invalid_argument("path-loss exponent must be > 0");
  if (!(W > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
  if (!(shadow_sigma >= 0.0)) throw std::invalid_argument("shadow_sigma must be >= 0");
  if (top_k_reports < 1) throw std::invalid_argument("top_k_reports must be >= 1");
  if (!std::isfinite(pl0) || !std::isfinite(N0) || !std::isfinite(visibility_floor))
    throw std::invalid_argument("channel parameters must be finite");
}

void ScenarioSpec::validate() const {
  channel.validate();
  if (N < 1 || M < 1) throw std::invalid_argument("scenario needs at least one cell and one UE");
  if (num_macro < 0 || num_macro > N) throw std::invalid_argument("num_macro out of range");
  if (!(area > 0.0)) throw std::invalid_argument("area must be > 0");
  if (!std::isfinite(macro_tx_power) || !std::isfinite(small_tx_power))
    throw std::invalid_argument("tx powers must be finite");
}

double path_loss_rsrp(double tx_power, double distance_m, const ChannelParams& ch) {
  const double d = std::max(distance_m, 1.0);
  return tx_power - (ch.pl0 + 10.0 * ch.n * std::log10(d));
}

Scenario generate_deployment(const ScenarioSpec& spec) {
  spec.validate();
  const auto& ch = spec.channel;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coord(0.0, spec.area);
  std::normal_distribution<double> shadow(0.0, 1.0);

  Scenario s;
  s.spec = spec;
  for (int i = 0; i < spec.N; ++i) {
    CellSite c;
    c.id = i;
    c.position.x = coord(rng);
    c.position.y = coord(rng);
    c.kind = i < spec.num_macro ? CellKind::macro : CellKind::small;
    c.tx_power = c.kind == CellKind::macro ? spec.macro_tx_power : spec.small_tx_power;
    s.deployment.cells.push_back(c);
  }

  s.P = RsrpMatrix::Constant(spec.N, spec.M, kUnreported);
  std::vector<double> column(static_cast<size_t>(spec.N));
  std::vector<int> order(static_cast<size_t>(spec.N));
  for (int j = 0; j < spec.M; ++j) {
    UserEquipment ue;
    ue.id = j;
    bool placed = false;
    for (int attempt = 0; attempt <= 100 && !placed; ++attempt) {
      ue.position.x = coord(rng);
      ue.position.y = coord(rng);
      for (int i = 0; i < spec.N; ++i) {
        const auto& cell = s.deployment.cells[static_cast<size_t>(i)];
        column[static_cast<size_t>(i)] =
            path_loss_rsrp(cell.tx_power, distance(cell.position, ue.position), ch) +
            ch.shadow_sigma * shadow(rng);
      }
      placed = std::any_of(column.begin(), column.end(),
                           [&](double p) { return p >= ch.visibility_floor; });
    }
    if (!placed) throw DataError("infeasible scenario: UE " + std::to_string(j) + " sees no cell");

    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return column[static_cast<size_t>(a)] > column[static_cast<size_t>(b)];
    });
    int kept = 0;
    for (int i : order) {
      if (kept == ch.top_k_reports) break;
      const double p = column[static_cast<size_t>(i)];
      if (p < ch.visibility_floor) break;
      s.P(i, j) = p;
      ++kept;
    }
    s.deployment.ues.push_back(ue);
  }
  return s;
}

std::vector<UeClass> classify_ues(const RsrpMatrix& P, double edge_gap_threshold) {
  std::vector<UeClass> out(static_cast<size_t>(P.cols()), UeClass::cell_center);
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    double best = kUnreported;
    double second = kUnreported;
    int reports = 0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      const double p = P(i, j);
      if (!std::isfinite(p)) continue;
      ++reports;
      if (p > best) {
        second = best;
        best = p;
      } else if (p > second) {
        second = p;
      }
    }
    if (reports >= 2 && best - second < edge_gap_threshold) out[static_cast<size_t>(j)] = UeClass::cell_edge;
  }
  return out;
}

Scenario make_scenario(const ScenarioSpec& spec) {
  Scenario s = generate_deployment(spec);
  const auto klass = classify_ues(s.P, spec.edge_gap_threshold);
  for (size_t j = 0; j < klass.size(); ++j) s.deployment.ues[j].klass = klass[j];
  return s;
}

int count_edge_ues(const Scenario& s) {
  return static_cast<int>(std::count_if(s.deployment.ues.begin(), s.deployment.ues.end(),
                                        [](const UserEquipment& u) { return u.klass == UeClass::cell_edge; }));
}

std::string to_string(CellKind k) { return k == CellKind::macro ? "macro" : "small"; }

std::string to_string(UeClass k) {
  switch (k) {
    case UeClass::cell_center: return "cell-center";
    case UeClass::cell_edge: return "cell-edge";
    default: return "unassigned";
  }
}

namespace {

CellKind cell_kind_from(const std::string& s) {
  if (s == "macro") return CellKind::macro;
  if (s == "small") return CellKind::small;
  throw DataError("unknown cell kind '" + s + "'");
}

UeClass ue_class_from(const std::string& s) {
  if (s == "cell-center") return UeClass::cell_center;
  if (s == "cell-edge") return UeClass::cell_edge;
  if (s == "unassigned") return UeClass::unassigned;
  throw DataError("unknown UE class '" + s + "'");
}

json position_json(const Position& p) { return json::array({p.x, p.y}); }

Position position_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("position must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  const auto& sp = s.spec;
  json channel = {{"pl0", sp.channel.pl0},
                  {"n", sp.channel.n},
                  {"shadow_sigma", sp.channel.shadow_sigma},
                  {"N0", sp.channel.N0},
                  {"W", sp.channel.W},
                  {"visibility_floor", sp.channel.visibility_floor},
                  {"top_k_reports", sp.channel.top_k_reports}};
  json cells = json::array();
  for (const auto& c : s.deployment.cells)
    cells.push_back({{"id", c.id},
                     {"position", position_json(c.position)},
                     {"kind", to_string(c.kind)},
                     {"tx_power", c.tx_power}});
  json ues = json::array();
  for (const auto& u : s.deployment.ues)
    ues.push_back({{"id", u.id}, {"position", position_json(u.position)}, {"klass", to_string(u.klass)}});

  json doc = {{"format", "cmguard-scenario"},
              {"version", 1},
              {"seed", sp.seed},
              {"N", sp.N},
              {"M", sp.M},
              {"num_macro", sp.num_macro},
              {"area", sp.area},
              {"macro_tx_power", sp.macro_tx_power},
              {"small_tx_power", sp.small_tx_power},
              {"channel", channel},
              {"edge_gap_threshold", sp.edge_gap_threshold},
              {"cell_virtual_edge_dist", sp.cell_virtual_edge_dist},
              {"cells", cells},
              {"ues", ues},
              {"P", detail::matrix_to_json(s.P)}};
  detail::write_json_file(path, doc);
}

Scenario load_scenario(const std::filesystem::path& path) {
  const json doc = detail::read_json_file(path);
  using detail::field;
  if (field<std::string>(doc, "format") != "cmguard-scenario") throw DataError("not a scenario file");
  if (field<int>(doc, "version") != 1) throw DataError("unsupported scenario version");

  Scenario s;
  auto& sp = s.spec;
  sp.seed = field<std::uint64_t>(doc, "seed");
  sp.N = field<int>(doc, "N");
  sp.M = field<int>(doc, "M");
  sp.num_macro = field<int>(doc, "num_macro");
  sp.area = field<double>(doc, "area");
  sp.macro_tx_power = field<double>(doc, "macro_tx_power");
  sp.small_tx_power = field<double>(doc, "small_tx_power");
  const json& ch = doc.at("channel");
  sp.channel.pl0 = field<double>(ch, "pl0");
  sp.channel.n = field<double>(ch, "n");
  sp.channel.shadow_sigma = field<double>(ch, "shadow_sigma");
  sp.channel.N0 = field<double>(ch, "N0");
  sp.channel.W = field<double>(ch, "W");
  sp.channel.visibility_floor = field<double>(ch, "visibility_floor");
  sp.channel.top_k_reports = field<int>(ch, "top_k_reports");
  sp.edge_gap_threshold = field<double>(doc, "edge_gap_threshold");
  sp.cell_virtual_edge_dist = field<double>(doc, "cell_virtual_edge_dist");
  try {
    sp.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid scenario: ") + e.what());
  }

  const json& cells = doc.at("cells");
  const json& ues = doc.at("ues");
  if (!cells.is_array() || static_cast<int>(cells.size()) != sp.N) throw DataError("cells do not match N");
  if (!ues.is_array() || static_cast<int>(ues.size()) != sp.M) throw DataError("ues do not match M");
  for (const auto& c : cells) {
    CellSite site;
    site.id = field<int>(c, "id");
    site.position = position_from(c.at("position"));
    site.kind = cell_kind_from(field<std::string>(c, "kind"));
    site.tx_power = field<double>(c, "tx_power");
    s.deployment.cells.push_back(site);
  }
  for (const auto& u : ues) {
    UserEquipment ue;
    ue.id = field<int>(u, "id");
    ue.position = position_from(u.at("position"));
    ue.klass = ue_class_from(field<std::string>(u, "klass"));
    s.deployment.ues.push_back(ue);
  }
  s.P = detail::matrix_from_json(doc.at("P"), sp.N, sp.M, "P");
  for (Eigen::Index j = 0; j < s.P.cols(); ++j) {
    bool any = false;
    for (Eigen::Index i = 0; i < s.P.rows(); ++i) {
      const double p = s.P(i, j);
      if (std::isnan(p) || p == std::numeric_limits<double>::infinity()) throw DataError("P holds NaN/+inf");
      any = any || std::isfinite(p);
    }
    if (!any) throw DataError("P column " + std::to_string(j) + " has no finite report");
  }
  return s;
}

}  // namespace cmguard
