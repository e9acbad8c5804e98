#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cmguard {

/// Thrown for bad input data (malformed files, infeasible scenarios).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kUnreported = -std::numeric_limits<double>::infinity();

/// N x M matrix of RSRP in dBm, cells by rows and UEs by columns.
/// Unreported links hold kUnreported.
using RsrpMatrix = Eigen::MatrixXd;

enum class CellKind { macro, small };
enum class UeClass { unassigned, cell_center, cell_edge };

struct Position {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Position& a, const Position& b);

struct CellSite {
  int id = 0;
  Position position;
  CellKind kind = CellKind::small;
  double tx_power = 0.0;  // dBm
};

struct UserEquipment {
  int id = 0;
  Position position;
  UeClass klass = UeClass::unassigned;
};

struct ChannelParams {
  double pl0 = 40.0;        // dB at d0 = 1 m
  double n = 3.0;           // path-loss exponent
  double shadow_sigma = 6.0;
  double N0 = -104.0;       // dBm
  double W = 100e6;         // Hz
  double visibility_floor = -110.0;
  int top_k_reports = 3;

  void validate() const;
};

struct ScenarioSpec {
  std::uint64_t seed = 0;
  int N = 6;
  int M = 50;
  int num_macro = 2;
  double area = 1000.0;  // square side, meters
  double macro_tx_power = 46.0;
  double small_tx_power = 30.0;
  ChannelParams channel;
  double edge_gap_threshold = 6.0;        // dB
  double cell_virtual_edge_dist = 500.0;  // meters

  void validate() const;
};

struct Deployment {
  std::vector<CellSite> cells;
  std::vector<UserEquipment> ues;
};

/// A generated (or loaded) scenario: geometry plus the frozen RSRP matrix.
/// UE classes are assigned by classify_ues before any episode starts.
struct Scenario {
  ScenarioSpec spec;
  Deployment deployment;
  RsrpMatrix P;

  int num_cells() const { return static_cast<int>(P.rows()); }
  int num_ues() const { return static_cast<int>(P.cols()); }
};

/// Received power over the log-distance model, without shadowing.
/// Distances below the 1 m reference are clamped to it.
double path_loss_rsrp(double tx_power, double distance_m, const ChannelParams& ch);

/// Seeded placement + channel evaluation. Each UE keeps its top_k strongest
/// reports at or above the visibility floor; a UE with none is re-placed up
/// to 100 times before DataError("infeasible scenario").
Scenario generate_deployment(const ScenarioSpec& spec);

/// Gap rule: cell-edge iff it reports >= 2 cells and best - second < threshold.
std::vector<UeClass> classify_ues(const RsrpMatrix& P, double edge_gap_threshold);

/// generate_deployment followed by classification.
Scenario make_scenario(const ScenarioSpec& spec);

int count_edge_ues(const Scenario& s);

void save_scenario(const Scenario& s, const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

std::string to_string(CellKind k);
std::string to_string(UeClass k);

}  // namespace cmguard
