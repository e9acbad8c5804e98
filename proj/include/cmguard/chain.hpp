#pragma once

#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cmguard/environment.hpp"
#include "cmguard/features.hpp"
#include "cmguard/gnn.hpp"

namespace cmguard {

/// One hypothetical next graph: the base state plus a single UE-to-cell edge.
struct Candidate {
  Action action;
  std::vector<int> serving;
  Eigen::MatrixXd A_u;
  Eigen::MatrixXd R;
  FeatureSet raw;
  FeatureSet normalized;
};

/// The K candidate graphs of one episode step, all derived from the same
/// observed RSRP matrix.
struct CandidateBatch {
  Eigen::MatrixXd cell_adjacency;
  Eigen::MatrixXd C;
  std::vector<Candidate> candidates;

  int size() const { return static_cast<int>(candidates.size()); }
};

/// Builds the single graph G = (state with the given serving vector) as
/// a candidate; used for Q(s, a) in learning updates.
Candidate build_candidate(const GraphState& state, std::span<const int> serving, const Action& action,
                          const Eigen::MatrixXd& C, const NormStats& norm);

CandidateBatch build_candidates(const GraphState& state, const RsrpMatrix& observed, const ChannelParams& ch,
                                const NormStats& norm);

GraphInput graph_input(const Candidate& c, const Eigen::MatrixXd& cell_adjacency);

std::vector<double> score_candidates(const GnnParams& params, const CandidateBatch& batch);
/// Softmax over the K candidate scores; throws std::invalid_argument when K = 0.
std::vector<double> action_probs(const GnnParams& params, const CandidateBatch& batch);

std::vector<double> softmax(std::span<const double> scores);
double log_softmax_at(std::span<const double> scores, int index);
/// Lowest index wins ties.
int argmax(std::span<const double> v);
int argmin(std::span<const double> v);

enum class Leaf { params, features, capacity_rate, rsrp };

/// Recorded differentiable chain for one episode step:
/// observed P -> C, R -> features -> normalize -> scorer (x K) -> scores.
///
/// A tape supports a single reverse sweep. Tapes built from features do not
/// record the capacity/rate or RSRP leaves; asking for them is an error.
/// The parameters passed at recording time must outlive the tape.
class StepTape {
 public:
  static StepTape from_rsrp(const GnnParams& params, const GraphState& state, const RsrpMatrix& observed,
                            const ChannelParams& ch, const NormStats& norm);
  /// Scores batch candidates on normalized features plus an optional offset
  /// shared by all candidates.
  static StepTape from_features(const GnnParams& params, const CandidateBatch& batch,
                                const FeatureSet* shared_offset = nullptr);
  /// As above with one additional offset per candidate.
  static StepTape from_features(const GnnParams& params, const CandidateBatch& batch, const FeatureSet& shared_offset,
                                std::span<const FeatureSet> candidate_offsets);

  const std::vector<double>& scores() const { return scores_; }
  std::vector<double> probs() const { return softmax(scores_); }
  const CandidateBatch& batch() const { return batch_; }

  struct Gradients {
    GnnParams params;
    FeatureSet features;  // summed over candidates (gradient of the shared offset)
    std::vector<FeatureSet> candidate_features;  // per candidate; only with Leaf::features
    Eigen::MatrixXd C;    // total, including the path through R
    std::vector<Eigen::MatrixXd> R;  // per candidate
    Eigen::MatrixXd P;    // zero on unreported links
  };

  Gradients backward(std::span<const double> d_scores, std::initializer_list<Leaf> wanted);

 private:
  StepTape() = default;
  void record();

  const GnnParams* params_ = nullptr;
  CandidateBatch batch_;
  RsrpMatrix P_;
  ChannelParams channel_;
  NormStats norm_;
  bool rooted_at_rsrp_ = false;
  bool consumed_ = false;
  std::vector<GraphInput> inputs_;
  std::vector<GnnTrace> traces_;
  std::vector<double> scores_;
};

}  // namespace cmguard
