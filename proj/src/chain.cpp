#include "cmguard/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmguard {

Candidate build_candidate(const GraphState& state, std::span<const int> serving, const Action& action,
                          const Eigen::MatrixXd& C, const NormStats& norm) {
  Candidate c;
  c.action = action;
  c.serving.assign(serving.begin(), serving.end());
  c.A_u = Eigen::MatrixXd::Zero(C.rows(), C.cols());
  for (size_t j = 0; j < c.serving.size(); ++j)
    if (c.serving[j] >= 0) c.A_u(c.serving[j], static_cast<Eigen::Index>(j)) = 1.0;
  c.R = rate_matrix(C, c.serving);
  c.raw = build_features(C, c.R, state.cell_adjacency, c.A_u);
  c.normalized = normalize(c.raw, norm);
  return c;
}

CandidateBatch build_candidates(const GraphState& state, const RsrpMatrix& observed, const ChannelParams& ch,
                                const NormStats& norm) {
  CandidateBatch b;
  b.cell_adjacency = state.cell_adjacency;
  b.C = capacity_matrix(observed, ch);
  for (const Action& a : valid_actions(state, observed)) {
    std::vector<int> serving = state.serving;
    serving[static_cast<size_t>(a.ue_id)] = a.cell_id;
    b.candidates.push_back(build_candidate(state, serving, a, b.C, norm));
  }
  return b;
}

GraphInput graph_input(const Candidate& c, const Eigen::MatrixXd& cell_adjacency) {
  GraphInput in;
  in.cell_x = c.normalized.cell_input();
  in.ue_x = c.normalized.ue;
  in.cell_adjacency = &cell_adjacency;
  in.serving = c.serving;
  return in;
}

std::vector<double> score_candidates(const GnnParams& params, const CandidateBatch& batch) {
  std::vector<double> s;
  s.reserve(batch.candidates.size());
  for (const auto& c : batch.candidates) s.push_back(forward_score(params, graph_input(c, batch.cell_adjacency)));
  return s;
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("softmax over zero actions");
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (size_t k = 0; k < scores.size(); ++k) z += (p[k] = std::exp(scores[k] - m));
  for (double& v : p) v /= z;
  return p;
}

double log_softmax_at(std::span<const double> scores, int index) {
  if (scores.empty()) throw std::invalid_argument("softmax over zero actions");
  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - m);
  return scores[static_cast<size_t>(index)] - m - std::log(z);
}

std::vector<double> action_probs(const GnnParams& params, const CandidateBatch& batch) {
  if (batch.candidates.empty()) throw std::invalid_argument("action_probs: K = 0");
  return softmax(score_candidates(params, batch));
}

int argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of empty range");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

int argmin(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmin of empty range");
  return static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
}

StepTape StepTape::from_rsrp(const GnnParams& params, const GraphState& state, const RsrpMatrix& observed,
                             const ChannelParams& ch, const NormStats& norm) {
  StepTape t;
  t.params_ = &params;
  t.batch_ = build_candidates(state, observed, ch, norm);
  t.P_ = observed;
  t.channel_ = ch;
  t.norm_ = norm;
  t.rooted_at_rsrp_ = true;
  t.record();
  return t;
}

StepTape StepTape::from_features(const GnnParams& params, const CandidateBatch& batch,
                                 const FeatureSet* shared_offset) {
  StepTape t;
  t.params_ = &params;
  t.batch_ = batch;
  if (shared_offset)
    for (auto& c : t.batch_.candidates) c.normalized += *shared_offset;
  t.rooted_at_rsrp_ = false;
  t.record();
  return t;
}

StepTape StepTape::from_features(const GnnParams& params, const CandidateBatch& batch, const FeatureSet& shared_offset,
                                 std::span<const FeatureSet> candidate_offsets) {
  if (candidate_offsets.size() != batch.candidates.size())
    throw std::invalid_argument("need one feature offset per candidate");
  StepTape t;
  t.params_ = &params;
  t.batch_ = batch;
  for (size_t k = 0; k < t.batch_.candidates.size(); ++k) {
    t.batch_.candidates[k].normalized += shared_offset;
    t.batch_.candidates[k].normalized += candidate_offsets[k];
  }
  t.rooted_at_rsrp_ = false;
  t.record();
  return t;
}

void StepTape::record() {
  inputs_.clear();
  traces_.assign(batch_.candidates.size(), GnnTrace{});
  scores_.clear();
  for (size_t k = 0; k < batch_.candidates.size(); ++k) {
    inputs_.push_back(graph_input(batch_.candidates[k], batch_.cell_adjacency));
    scores_.push_back(forward_score(*params_, inputs_.back(), &traces_[k]));
  }
}

StepTape::Gradients StepTape::backward(std::span<const double> d_scores, std::initializer_list<Leaf> wanted) {
  if (consumed_) throw std::logic_error("tape already consumed");
  if (d_scores.size() != scores_.size()) throw std::invalid_argument("d_scores has the wrong length");
  const auto want = [&](Leaf l) { return std::find(wanted.begin(), wanted.end(), l) != wanted.end(); };
  const bool want_params = want(Leaf::params);
  const bool want_upstream = want(Leaf::capacity_rate) || want(Leaf::rsrp);
  if (want_upstream && !rooted_at_rsrp_) throw std::logic_error("leaf not recorded on this tape");
  consumed_ = true;

  const auto N = batch_.C.rows();
  const auto M = batch_.C.cols();
  Gradients g;
  if (want_params) g.params = GnnParams::zeros(params_->dims);
  g.features = FeatureSet{Eigen::MatrixXd::Zero(N, 2), Eigen::MatrixXd::Zero(N, 2), Eigen::MatrixXd::Zero(M, 2)};
  if (want(Leaf::features)) g.candidate_features.assign(batch_.candidates.size(), g.features);
  if (want_upstream) {
    g.C = Eigen::MatrixXd::Zero(N, M);
    g.R.assign(batch_.candidates.size(), Eigen::MatrixXd::Zero(N, M));
  }

  for (size_t k = 0; k < batch_.candidates.size(); ++k) {
    if (d_scores[k] == 0.0) continue;
    const auto& cand = batch_.candidates[k];
    inputs_[k].cell_adjacency = &batch_.cell_adjacency;
    GnnInputGrad din;
    backward_score(*params_, inputs_[k], traces_[k], d_scores[k], want_params ? &g.params : nullptr, &din);
    FeatureSet df{din.cell_x.leftCols(2), din.cell_x.rightCols(2), din.ue_x};
    g.features += df;
    if (!g.candidate_features.empty()) g.candidate_features[k] = df;
    if (!want_upstream) continue;

    const FeatureSet d_raw = normalize_backward(df, norm_);
    Eigen::MatrixXd dC = Eigen::MatrixXd::Zero(N, M);
    Eigen::MatrixXd& dR = g.R[k];
    build_features_backward(d_raw, batch_.cell_adjacency, cand.A_u, dC, dR);
    // R = C / max(1, load) row-wise for this candidate's loads.
    const auto load = cell_loads(cand.serving, static_cast<int>(N));
    for (Eigen::Index i = 0; i < N; ++i) {
      const int l = load[static_cast<size_t>(i)];
      dC.row(i) += l > 1 ? Eigen::RowVectorXd(dR.row(i) / static_cast<double>(l)) : Eigen::RowVectorXd(dR.row(i));
    }
    g.C += dC;
  }

  if (want(Leaf::rsrp)) {
    g.P = Eigen::MatrixXd::Zero(N, M);
    for (Eigen::Index j = 0; j < M; ++j)
      for (Eigen::Index i = 0; i < N; ++i) g.P(i, j) = g.C(i, j) * link_capacity_slope(P_(i, j), channel_);
  }
  return g;
}

}  // namespace cmguard
