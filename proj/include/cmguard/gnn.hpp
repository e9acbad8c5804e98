#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cmguard {

struct GnnDims {
  int hidden = 8;
  int layers = 2;
  friend bool operator==(const GnnDims&, const GnnDims&) = default;
};

inline constexpr int kCellInputs = 4;
inline constexpr int kUeInputs = 2;

struct GnnLayer {
  Eigen::MatrixXd self_c, cc, cu, bias_c;  // cell update
  Eigen::MatrixXd self_u, uc, bias_u;      // UE update
};

/// Learnable weights of the graph scorer. Every block is a dense matrix
/// (biases are 1 x d rows, the output vector is d x 1).
struct GnnParams {
  GnnDims dims;
  Eigen::MatrixXd in_c, in_c_bias;  // 4 x d, 1 x d
  Eigen::MatrixXd in_u, in_u_bias;  // 2 x d, 1 x d
  std::vector<GnnLayer> layers;
  Eigen::MatrixXd readout, readout_bias;  // 2d x d, 1 x d
  Eigen::MatrixXd out;                    // d x 1

  static GnnParams zeros(const GnnDims& dims = {});
  /// Uniform in [-1/sqrt(d), 1/sqrt(d)] from a seeded generator.
  static GnnParams random(std::uint64_t seed, const GnnDims& dims = {});

  /// Calls f(name, block) for every block in a fixed order.
  template <typename F>
  void visit(F&& f) {
    f("in_c", in_c);
    f("in_c_bias", in_c_bias);
    f("in_u", in_u);
    f("in_u_bias", in_u_bias);
    for (size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      auto& L = layers[l];
      f(p + "self_c", L.self_c);
      f(p + "cc", L.cc);
      f(p + "cu", L.cu);
      f(p + "bias_c", L.bias_c);
      f(p + "self_u", L.self_u);
      f(p + "uc", L.uc);
      f(p + "bias_u", L.bias_u);
    }
    f("readout", readout);
    f("readout_bias", readout_bias);
    f("out", out);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<GnnParams*>(this)->visit([&](const std::string& name, Eigen::MatrixXd& m) {
      f(name, static_cast<const Eigen::MatrixXd&>(m));
    });
  }

  std::size_t num_scalars() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& v);
  /// this += alpha * other (same dims).
  void axpy(double alpha, const GnnParams& other);
  bool all_finite() const;
  bool same_architecture(const GnnParams& other) const;
};

bool operator==(const GnnParams& a, const GnnParams& b);

/// Scorer input for one graph. A_c rows are normalized to neighbor means;
/// served UEs are averaged per cell.
struct GraphInput {
  Eigen::MatrixXd cell_x;  // N x 4 (normalized)
  Eigen::MatrixXd ue_x;    // M x 2 (normalized)
  const Eigen::MatrixXd* cell_adjacency = nullptr;
  std::span<const int> serving;
};

/// Activations recorded by forward for the reverse sweep.
struct GnnTrace {
  Eigen::MatrixXd cell_mean_adj;                  // N x N, A_c with rows scaled to means
  std::vector<double> inv_load;                   // per cell, 1/load or 0
  std::vector<Eigen::MatrixXd> hc, hu;            // post-ReLU, index 0 = input embedding
  std::vector<Eigen::MatrixXd> agg_cc, agg_cu, agg_uc;  // per layer
  Eigen::RowVectorXd pooled;                      // 1 x 2d
  Eigen::RowVectorXd z;                           // post-ReLU readout
  double q = 0.0;
};

double forward_score(const GnnParams& params, const GraphInput& in, GnnTrace* trace = nullptr);

struct GnnInputGrad {
  Eigen::MatrixXd cell_x;  // N x 4
  Eigen::MatrixXd ue_x;    // M x 2
};

/// Reverse sweep from dQ. Accumulates into dparams (if non-null) and writes
/// input gradients into dinput (if non-null). ReLU'(0) is taken as 0.
void backward_score(const GnnParams& params, const GraphInput& in, const GnnTrace& trace, double dq,
                    GnnParams* dparams, GnnInputGrad* dinput);

}  // namespace cmguard
