#include "cmguard/gnn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace cmguard {

namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

// Gradient gate for y = relu(x), evaluated on y (y > 0 iff x > 0).
Eigen::MatrixXd relu_gate(const Eigen::MatrixXd& grad, const Eigen::MatrixXd& y) {
  return (y.array() > 0.0).select(grad, 0.0);
}

void check_dims(const GnnParams& p, const GraphInput& in) {
  const int d = p.dims.hidden;
  if (in.cell_x.cols() != kCellInputs || in.ue_x.cols() != kUeInputs)
    throw std::invalid_argument("scorer input has the wrong feature width");
  if (in.cell_adjacency == nullptr || in.cell_adjacency->rows() != in.cell_x.rows() ||
      in.cell_adjacency->cols() != in.cell_x.rows())
    throw std::invalid_argument("cell adjacency does not match cell count");
  if (static_cast<Eigen::Index>(in.serving.size()) != in.ue_x.rows())
    throw std::invalid_argument("serving vector does not match UE count");
  if (p.in_c.rows() != kCellInputs || p.in_c.cols() != d || p.in_u.rows() != kUeInputs || p.in_u.cols() != d ||
      static_cast<int>(p.layers.size()) != p.dims.layers || p.readout.rows() != 2 * d || p.out.rows() != d)
    throw std::invalid_argument("scorer parameter dimensions are inconsistent");
}

}  // namespace

GnnParams GnnParams::zeros(const GnnDims& dims) {
  const int d = dims.hidden;
  if (d < 1 || dims.layers < 0) throw std::invalid_argument("invalid scorer dimensions");
  GnnParams p;
  p.dims = dims;
  p.in_c = Eigen::MatrixXd::Zero(kCellInputs, d);
  p.in_c_bias = Eigen::MatrixXd::Zero(1, d);
  p.in_u = Eigen::MatrixXd::Zero(kUeInputs, d);
  p.in_u_bias = Eigen::MatrixXd::Zero(1, d);
  for (int l = 0; l < dims.layers; ++l) {
    GnnLayer L;
    L.self_c = L.cc = L.cu = L.self_u = L.uc = Eigen::MatrixXd::Zero(d, d);
    L.bias_c = L.bias_u = Eigen::MatrixXd::Zero(1, d);
    p.layers.push_back(L);
  }
  p.readout = Eigen::MatrixXd::Zero(2 * d, d);
  p.readout_bias = Eigen::MatrixXd::Zero(1, d);
  p.out = Eigen::MatrixXd::Zero(d, 1);
  return p;
}

GnnParams GnnParams::random(std::uint64_t seed, const GnnDims& dims) {
  GnnParams p = zeros(dims);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
  std::uniform_real_distribution<double> u(-bound, bound);
  p.visit([&](const std::string&, Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
  });
  return p;
}

std::size_t GnnParams::num_scalars() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Eigen::MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

Eigen::VectorXd GnnParams::flatten() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(num_scalars()));
  Eigen::Index k = 0;
  visit([&](const std::string&, const Eigen::MatrixXd& m) {
    v.segment(k, m.size()) = m.reshaped();
    k += m.size();
  });
  return v;
}

void GnnParams::unflatten(const Eigen::VectorXd& v) {
  if (v.size() != static_cast<Eigen::Index>(num_scalars())) throw std::invalid_argument("flat parameter size mismatch");
  Eigen::Index k = 0;
  visit([&](const std::string&, Eigen::MatrixXd& m) {
    m.reshaped() = v.segment(k, m.size());
    k += m.size();
  });
}

void GnnParams::axpy(double alpha, const GnnParams& other) {
  if (!same_architecture(other)) throw std::invalid_argument("axpy: architecture mismatch");
  std::vector<const Eigen::MatrixXd*> src;
  other.visit([&](const std::string&, const Eigen::MatrixXd& m) { src.push_back(&m); });
  size_t k = 0;
  visit([&](const std::string&, Eigen::MatrixXd& m) { m += alpha * *src[k++]; });
}

bool GnnParams::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Eigen::MatrixXd& m) { ok = ok && m.allFinite(); });
  return ok;
}

bool GnnParams::same_architecture(const GnnParams& other) const {
  if (!(dims == other.dims)) return false;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  visit([&](const std::string&, const Eigen::MatrixXd& m) { shapes.emplace_back(m.rows(), m.cols()); });
  size_t k = 0;
  bool same = true;
  other.visit([&](const std::string&, const Eigen::MatrixXd& m) {
    same = same && k < shapes.size() && shapes[k] == std::make_pair(m.rows(), m.cols());
    ++k;
  });
  return same && k == shapes.size();
}

bool operator==(const GnnParams& a, const GnnParams& b) {
  if (!a.same_architecture(b)) return false;
  return (a.flatten().array() == b.flatten().array()).all();
}

double forward_score(const GnnParams& p, const GraphInput& in, GnnTrace* trace) {
  check_dims(p, in);
  GnnTrace local;
  GnnTrace& t = trace ? *trace : local;
  const auto N = in.cell_x.rows();
  const auto M = in.ue_x.rows();
  const int d = p.dims.hidden;

  const Eigen::MatrixXd& A = *in.cell_adjacency;
  t.cell_mean_adj = A;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double deg = A.row(i).sum();
    if (deg > 0.0) t.cell_mean_adj.row(i) /= deg;
  }
  t.inv_load.assign(static_cast<size_t>(N), 0.0);
  for (int c : in.serving)
    if (c >= 0) t.inv_load[static_cast<size_t>(c)] += 1.0;
  for (double& v : t.inv_load) v = v > 0.0 ? 1.0 / v : 0.0;

  t.hc.assign(1, relu((in.cell_x * p.in_c).rowwise() + p.in_c_bias.row(0)));
  t.hu.assign(1, relu((in.ue_x * p.in_u).rowwise() + p.in_u_bias.row(0)));
  t.agg_cc.clear();
  t.agg_cu.clear();
  t.agg_uc.clear();

  for (const auto& L : p.layers) {
    const Eigen::MatrixXd& hc = t.hc.back();
    const Eigen::MatrixXd& hu = t.hu.back();
    Eigen::MatrixXd agg_cc = t.cell_mean_adj * hc;
    Eigen::MatrixXd agg_cu = Eigen::MatrixXd::Zero(N, d);
    Eigen::MatrixXd agg_uc = Eigen::MatrixXd::Zero(M, d);
    for (Eigen::Index j = 0; j < M; ++j) {
      const int c = in.serving[static_cast<size_t>(j)];
      if (c < 0) continue;
      agg_cu.row(c) += hu.row(j) * t.inv_load[static_cast<size_t>(c)];
      agg_uc.row(j) = hc.row(c);
    }
    Eigen::MatrixXd pre_c = hc * L.self_c + agg_cc * L.cc + agg_cu * L.cu;
    pre_c.rowwise() += L.bias_c.row(0);
    Eigen::MatrixXd pre_u = hu * L.self_u + agg_uc * L.uc;
    pre_u.rowwise() += L.bias_u.row(0);
    t.agg_cc.push_back(std::move(agg_cc));
    t.agg_cu.push_back(std::move(agg_cu));
    t.agg_uc.push_back(std::move(agg_uc));
    t.hc.push_back(relu(pre_c));
    t.hu.push_back(relu(pre_u));
  }

  t.pooled.resize(2 * d);
  t.pooled << t.hc.back().colwise().sum(), t.hu.back().colwise().sum();
  t.z = (t.pooled * p.readout + p.readout_bias).cwiseMax(0.0);
  t.q = (t.z * p.out)(0, 0);
  return t.q;
}

void backward_score(const GnnParams& p, const GraphInput& in, const GnnTrace& t, double dq, GnnParams* dp,
                    GnnInputGrad* dinput) {
  check_dims(p, in);
  if (dp && !dp->same_architecture(p)) *dp = GnnParams::zeros(p.dims);
  const auto N = in.cell_x.rows();
  const auto M = in.ue_x.rows();
  const int d = p.dims.hidden;

  const Eigen::RowVectorXd dz = dq * p.out.transpose();
  const Eigen::RowVectorXd dzpre = (t.z.array() > 0.0).select(dz, 0.0);
  if (dp) {
    dp->out += t.z.transpose() * dq;
    dp->readout += t.pooled.transpose() * dzpre;
    dp->readout_bias += dzpre;
  }
  const Eigen::RowVectorXd dpooled = dzpre * p.readout.transpose();
  Eigen::MatrixXd dhc = dpooled.head(d).replicate(N, 1);
  Eigen::MatrixXd dhu = dpooled.tail(d).replicate(M, 1);

  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const auto& L = p.layers[static_cast<size_t>(l)];
    const auto ls = static_cast<size_t>(l);
    const Eigen::MatrixXd dpre_c = relu_gate(dhc, t.hc[ls + 1]);
    const Eigen::MatrixXd dpre_u = relu_gate(dhu, t.hu[ls + 1]);
    if (dp) {
      auto& G = dp->layers[ls];
      G.self_c += t.hc[ls].transpose() * dpre_c;
      G.cc += t.agg_cc[ls].transpose() * dpre_c;
      G.cu += t.agg_cu[ls].transpose() * dpre_c;
      G.bias_c += dpre_c.colwise().sum();
      G.self_u += t.hu[ls].transpose() * dpre_u;
      G.uc += t.agg_uc[ls].transpose() * dpre_u;
      G.bias_u += dpre_u.colwise().sum();
    }
    const Eigen::MatrixXd d_agg_cc = dpre_c * L.cc.transpose();
    const Eigen::MatrixXd d_agg_cu = dpre_c * L.cu.transpose();
    const Eigen::MatrixXd d_agg_uc = dpre_u * L.uc.transpose();
    Eigen::MatrixXd next_dhc = dpre_c * L.self_c.transpose() + t.cell_mean_adj.transpose() * d_agg_cc;
    Eigen::MatrixXd next_dhu = dpre_u * L.self_u.transpose();
    for (Eigen::Index j = 0; j < M; ++j) {
      const int c = in.serving[static_cast<size_t>(j)];
      if (c < 0) continue;
      next_dhc.row(c) += d_agg_uc.row(j);
      next_dhu.row(j) += d_agg_cu.row(c) * t.inv_load[static_cast<size_t>(c)];
    }
    dhc = std::move(next_dhc);
    dhu = std::move(next_dhu);
  }

  const Eigen::MatrixXd dpre_c0 = relu_gate(dhc, t.hc[0]);
  const Eigen::MatrixXd dpre_u0 = relu_gate(dhu, t.hu[0]);
  if (dp) {
    dp->in_c += in.cell_x.transpose() * dpre_c0;
    dp->in_c_bias += dpre_c0.colwise().sum();
    dp->in_u += in.ue_x.transpose() * dpre_u0;
    dp->in_u_bias += dpre_u0.colwise().sum();
  }
  if (dinput) {
    dinput->cell_x = dpre_c0 * p.in_c.transpose();
    dinput->ue_x = dpre_u0 * p.in_u.transpose();
  }
}

}  // namespace cmguard
