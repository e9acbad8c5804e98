#include "cmguard/features.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace cmguard {

FeatureSet& FeatureSet::operator+=(const FeatureSet& o) {
  cell1 += o.cell1;
  cell2 += o.cell2;
  ue += o.ue;
  return *this;
}

Eigen::VectorXd FeatureSet::flatten() const {
  Eigen::VectorXd v(size());
  Eigen::Index k = 0;
  for (const auto* m : {&cell1, &cell2, &ue})
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) v(k++) = (*m)(r, c);
  return v;
}

void FeatureSet::unflatten(const Eigen::VectorXd& v) {
  if (v.size() != size()) throw std::invalid_argument("flat feature vector has the wrong size");
  Eigen::Index k = 0;
  for (auto* m : {&cell1, &cell2, &ue})
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = v(k++);
}

FeatureSet FeatureSet::zeros_like(const FeatureSet& f) {
  return {Eigen::MatrixXd::Zero(f.cell1.rows(), 2), Eigen::MatrixXd::Zero(f.cell2.rows(), 2),
          Eigen::MatrixXd::Zero(f.ue.rows(), 2)};
}

Eigen::MatrixXd FeatureSet::cell_input() const {
  Eigen::MatrixXd x(cell1.rows(), 4);
  x << cell1, cell2;
  return x;
}

FeatureSet build_features(const Eigen::MatrixXd& C, const Eigen::MatrixXd& R, const Eigen::MatrixXd& A_c,
                          const Eigen::MatrixXd& A_u) {
  const auto N = C.rows();
  const auto M = C.cols();
  if (R.rows() != N || R.cols() != M || A_c.rows() != N || A_c.cols() != N || A_u.rows() != N ||
      A_u.cols() != M)
    throw std::invalid_argument("build_features: shape mismatch");

  const Eigen::VectorXd r_cell = R.rowwise().sum();  // R 1_M
  const Eigen::VectorXd c_cell = C.rowwise().sum();  // C 1_M
  const Eigen::VectorXd r_ue = R.colwise().sum().transpose();  // R^T 1_N
  const Eigen::VectorXd c_ue = C.colwise().sum().transpose();  // C^T 1_N

  FeatureSet f;
  f.cell1.resize(N, 2);
  f.cell1.col(0) = A_c * r_cell;
  f.cell1.col(1) = r_cell;
  f.cell2.resize(N, 2);
  f.cell2.col(0) = A_u * r_ue;
  f.cell2.col(1) = c_cell;
  f.ue.resize(M, 2);
  f.ue.col(0) = c_ue;
  f.ue.col(1) = r_ue;
  return f;
}

void build_features_backward(const FeatureSet& grad, const Eigen::MatrixXd& A_c, const Eigen::MatrixXd& A_u,
                             Eigen::MatrixXd& dC, Eigen::MatrixXd& dR) {
  const auto N = A_u.rows();
  const auto M = A_u.cols();
  if (dC.rows() != N || dC.cols() != M) dC = Eigen::MatrixXd::Zero(N, M);
  if (dR.rows() != N || dR.cols() != M) dR = Eigen::MatrixXd::Zero(N, M);

  // Gradients w.r.t. the four reduced vectors, then broadcast back.
  const Eigen::VectorXd d_r_cell = A_c.transpose() * grad.cell1.col(0) + grad.cell1.col(1);
  const Eigen::VectorXd d_c_cell = grad.cell2.col(1);
  const Eigen::VectorXd d_r_ue = A_u.transpose() * grad.cell2.col(0) + grad.ue.col(1);
  const Eigen::VectorXd d_c_ue = grad.ue.col(0);

  dR.colwise() += d_r_cell;
  dR.rowwise() += d_r_ue.transpose();
  dC.colwise() += d_c_cell;
  dC.rowwise() += d_c_ue.transpose();
}

namespace {

template <typename F>
void for_each_column(FeatureSet& f, F&& fn) {
  fn(f.cell1.col(0), 0);
  fn(f.cell1.col(1), 1);
  fn(f.cell2.col(0), 2);
  fn(f.cell2.col(1), 3);
  fn(f.ue.col(0), 4);
  fn(f.ue.col(1), 5);
}

}  // namespace

NormStats fit_norm(std::span<const FeatureSet> suite) {
  if (suite.empty()) throw std::invalid_argument("fit_norm: empty suite");
  NormStats s;
  s.min.fill(std::numeric_limits<double>::infinity());
  s.max.fill(-std::numeric_limits<double>::infinity());
  for (const auto& fs : suite) {
    FeatureSet copy = fs;
    for_each_column(copy, [&](auto col, int k) {
      s.min[static_cast<size_t>(k)] = std::min(s.min[static_cast<size_t>(k)], col.minCoeff());
      s.max[static_cast<size_t>(k)] = std::max(s.max[static_cast<size_t>(k)], col.maxCoeff());
    });
  }
  return s;
}

FeatureSet normalize(const FeatureSet& f, const NormStats& stats) {
  FeatureSet out = f;
  for_each_column(out, [&](auto col, int k) {
    const double span = stats.span(k);
    if (span > 0.0)
      col = (col.array() - stats.min[static_cast<size_t>(k)]) / span;
    else
      col.setZero();
  });
  return out;
}

FeatureSet denormalize(const FeatureSet& f, const NormStats& stats) {
  FeatureSet out = f;
  for_each_column(out, [&](auto col, int k) {
    col = col.array() * stats.span(k) + stats.min[static_cast<size_t>(k)];
  });
  return out;
}

FeatureSet normalize_backward(const FeatureSet& grad_normalized, const NormStats& stats) {
  FeatureSet out = grad_normalized;
  for_each_column(out, [&](auto col, int k) {
    const double span = stats.span(k);
    if (span > 0.0)
      col /= span;
    else
      col.setZero();
  });
  return out;
}

}  // namespace cmguard
