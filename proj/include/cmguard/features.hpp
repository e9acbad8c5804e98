#pragma once

#include <array>
#include <span>

#include <Eigen/Dense>

namespace cmguard {

/// GNN input matrices built from capacities, rates and adjacency.
struct FeatureSet {
  Eigen::MatrixXd cell1;  // N x 2: [A_c R 1_M | R 1_M]
  Eigen::MatrixXd cell2;  // N x 2: [A_u R^T 1_N | C 1_M]
  Eigen::MatrixXd ue;     // M x 2: [C^T 1_N | R^T 1_N]

  FeatureSet& operator+=(const FeatureSet& o);
  /// Number of scalar entries; flat order is cell1, cell2, ue (row-major).
  Eigen::Index size() const { return cell1.size() + cell2.size() + ue.size(); }
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& v);
  static FeatureSet zeros_like(const FeatureSet& f);
  /// [cell1 | cell2], the N x 4 cell input of the scorer.
  Eigen::MatrixXd cell_input() const;
};

FeatureSet build_features(const Eigen::MatrixXd& C, const Eigen::MatrixXd& R, const Eigen::MatrixXd& A_c,
                          const Eigen::MatrixXd& A_u);

/// Reverse of build_features: accumulates dL/dC and dL/dR given dL/dFeatures.
void build_features_backward(const FeatureSet& grad, const Eigen::MatrixXd& A_c, const Eigen::MatrixXd& A_u,
                             Eigen::MatrixXd& dC, Eigen::MatrixXd& dR);

/// Per-column min/max over a benign suite. Column order: cell1[0..1],
/// cell2[0..1], ue[0..1].
struct NormStats {
  std::array<double, 6> min{};
  std::array<double, 6> max{};

  double span(int column) const { return max[static_cast<size_t>(column)] - min[static_cast<size_t>(column)]; }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

NormStats fit_norm(std::span<const FeatureSet> suite);
FeatureSet normalize(const FeatureSet& f, const NormStats& stats);
FeatureSet denormalize(const FeatureSet& f, const NormStats& stats);
/// Chain rule through normalize: scales each column by 1/span (0 for constant columns).
FeatureSet normalize_backward(const FeatureSet& grad_normalized, const NormStats& stats);

}  // namespace cmguard
