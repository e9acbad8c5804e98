#include <cmath>
#include <random>

#include <doctest.h>

#include "cmguard/chain.hpp"
#include "cmguard/gnn.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace cmguard;
using cmguard::testing::chain_fixture;
using cmguard::testing::ChainFixture;
using cmguard::testing::random_scorer_fixture;
using cmguard::testing::ScorerFixture;

namespace {

// Straight-line re-implementation of the scorer with explicit loops; shares
// no code with forward_score.
double oracle_score(const GnnParams& p, const Eigen::MatrixXd& xc, const Eigen::MatrixXd& xu,
                    const Eigen::MatrixXd& A, const std::vector<int>& serving) {
  const int N = static_cast<int>(xc.rows());
  const int M = static_cast<int>(xu.rows());
  const int d = p.dims.hidden;
  using Rows = std::vector<std::vector<double>>;
  auto relu = [](double v) { return v > 0.0 ? v : 0.0; };
  Rows hc(N, std::vector<double>(d)), hu(M, std::vector<double>(d));
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < d; ++k) {
      double s = p.in_c_bias(0, k);
      for (int f = 0; f < 4; ++f) s += xc(i, f) * p.in_c(f, k);
      hc[i][k] = relu(s);
    }
  for (int j = 0; j < M; ++j)
    for (int k = 0; k < d; ++k) {
      double s = p.in_u_bias(0, k);
      for (int f = 0; f < 2; ++f) s += xu(j, f) * p.in_u(f, k);
      hu[j][k] = relu(s);
    }
  for (const auto& L : p.layers) {
    Rows nc(N, std::vector<double>(d)), nu(M, std::vector<double>(d));
    for (int i = 0; i < N; ++i) {
      std::vector<double> mcc(d, 0.0), mcu(d, 0.0);
      int deg = 0, load = 0;
      for (int b = 0; b < N; ++b)
        if (A(i, b) != 0.0) {
          ++deg;
          for (int k = 0; k < d; ++k) mcc[k] += hc[b][k];
        }
      for (int j = 0; j < M; ++j)
        if (serving[j] == i) {
          ++load;
          for (int k = 0; k < d; ++k) mcu[k] += hu[j][k];
        }
      for (int k = 0; k < d; ++k) {
        if (deg) mcc[k] /= deg;
        if (load) mcu[k] /= load;
      }
      for (int k = 0; k < d; ++k) {
        double s = L.bias_c(0, k);
        for (int q = 0; q < d; ++q) s += hc[i][q] * L.self_c(q, k) + mcc[q] * L.cc(q, k) + mcu[q] * L.cu(q, k);
        nc[i][k] = relu(s);
      }
    }
    for (int j = 0; j < M; ++j)
      for (int k = 0; k < d; ++k) {
        double s = L.bias_u(0, k);
        for (int q = 0; q < d; ++q) {
          s += hu[j][q] * L.self_u(q, k);
          if (serving[j] >= 0) s += hc[serving[j]][q] * L.uc(q, k);
        }
        nu[j][k] = relu(s);
      }
    hc = nc;
    hu = nu;
  }
  std::vector<double> pooled(2 * d, 0.0);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < d; ++k) pooled[k] += hc[i][k];
  for (int j = 0; j < M; ++j)
    for (int k = 0; k < d; ++k) pooled[d + k] += hu[j][k];
  double q = 0.0;
  for (int k = 0; k < d; ++k) {
    double s = p.readout_bias(0, k);
    for (int r = 0; r < 2 * d; ++r) s += pooled[r] * p.readout(r, k);
    q += relu(s) * p.out(k, 0);
  }
  return q;
}

}  // namespace

TEST_CASE("all-zero parameters score zero") {
  std::mt19937_64 rng(1);
  const auto f = random_scorer_fixture(rng, 3, 5);
  CHECK(forward_score(GnnParams::zeros(), f.input()) == 0.0);
}

TEST_CASE("scorer matches the straight-line oracle") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 25; ++t) {
    const auto f = random_scorer_fixture(rng, 2 + t % 4, 2 + t % 7);
    const GnnParams p = GnnParams::random(static_cast<std::uint64_t>(t));
    const double q = forward_score(p, f.input());
    const double o = oracle_score(p, f.xc, f.xu, f.A, f.serving);
    CHECK(std::abs(q - o) <= 1e-12 * std::max(1.0, std::abs(o)));
  }
}

TEST_CASE("dimension mismatch is rejected") {
  std::mt19937_64 rng(3);
  auto f = random_scorer_fixture(rng, 3, 4);
  f.xc = Eigen::MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(forward_score(GnnParams::random(1), f.input()), std::invalid_argument);
  GnnParams bad = GnnParams::random(1);
  bad.layers.pop_back();
  auto g = random_scorer_fixture(rng, 3, 4);
  CHECK_THROWS_AS(forward_score(bad, g.input()), std::invalid_argument);
}

TEST_CASE("Q is invariant to relabeling UEs and cells") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const int N = 4, M = 9;
    const auto f = random_scorer_fixture(rng, N, M);
    const GnnParams p = GnnParams::random(static_cast<std::uint64_t>(t) + 50);
    std::vector<int> ue_perm(M), cell_perm(N);
    std::iota(ue_perm.begin(), ue_perm.end(), 0);
    std::iota(cell_perm.begin(), cell_perm.end(), 0);
    std::shuffle(ue_perm.begin(), ue_perm.end(), rng);
    std::shuffle(cell_perm.begin(), cell_perm.end(), rng);
    ScorerFixture g = f;
    // New index k holds old index perm[k].
    for (int k = 0; k < M; ++k) {
      g.xu.row(k) = f.xu.row(ue_perm[k]);
      const int old_cell = f.serving[static_cast<size_t>(ue_perm[k])];
      int new_cell = -1;
      for (int c = 0; c < N; ++c)
        if (cell_perm[c] == old_cell) new_cell = c;
      g.serving[static_cast<size_t>(k)] = new_cell;
    }
    for (int a = 0; a < N; ++a) {
      g.xc.row(a) = f.xc.row(cell_perm[a]);
      for (int b = 0; b < N; ++b) g.A(a, b) = f.A(cell_perm[a], cell_perm[b]);
    }
    CHECK(std::abs(forward_score(p, f.input()) - forward_score(p, g.input())) <= 1e-9);
  }
}

TEST_CASE("unused parameter blocks receive zero gradient") {
  std::mt19937_64 rng(5);
  auto f = random_scorer_fixture(rng, 3, 6);
  f.A.setZero();
  std::fill(f.serving.begin(), f.serving.end(), -1);
  const GnnParams p = GnnParams::random(9);
  GnnTrace tr;
  forward_score(p, f.input(), &tr);
  GnnParams g = GnnParams::zeros();
  backward_score(p, f.input(), tr, 1.0, &g, nullptr);
  for (const auto& L : g.layers) {
    CHECK(L.cc.isZero());  // no cell neighbors
    CHECK(L.cu.isZero());  // no served UEs
    CHECK(L.uc.isZero());  // no serving cells
  }
}

TEST_CASE("scorer gradients match central differences") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto f = random_scorer_fixture(rng, 4, 7);
    const GnnParams p = GnnParams::random(static_cast<std::uint64_t>(t) + 77);
    GnnTrace tr;
    forward_score(p, f.input(), &tr);
    GnnParams g = GnnParams::zeros();
    GnnInputGrad gi;
    backward_score(p, f.input(), tr, 1.0, &g, &gi);

    const auto fp = [&](const Eigen::VectorXd& v) {
      GnnParams q = p;
      q.unflatten(v);
      return forward_score(q, f.input());
    };
    const auto r = cmguard::testing::central_difference_check(fp, p.flatten(), g.flatten(), 1e-5);
    CHECK(r.max_rel <= 1e-4);
    CHECK(r.skipped <= r.checked / 20);

    const auto fx = [&](const Eigen::VectorXd& v) {
      ScorerFixture h = f;
      h.xc.reshaped() = v;
      return forward_score(p, h.input());
    };
    const Eigen::VectorXd gx = gi.cell_x.reshaped();
    const auto rx = cmguard::testing::central_difference_check(fx, f.xc.reshaped(), gx, 1e-5);
    CHECK(rx.max_rel <= 1e-4);
  }
}

TEST_CASE("softmax closed forms") {
  const std::vector<double> a{0.0, 0.0};
  CHECK(softmax(a)[0] == 0.5);
  const auto b = softmax(std::vector<double>{3.0, 3.0, 3.0});
  for (double v : b) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto c = softmax(std::vector<double>{std::log(2.0), 0.0});
  CHECK(c[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(c[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(softmax(std::vector<double>{}), std::invalid_argument);
  CHECK(argmax(std::vector<double>{1.0, 1.0}) == 0);
  CHECK(argmin(std::vector<double>{0.7, 0.3}) == 1);
}

TEST_CASE("softmax normalization for K up to 64") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 20.0);
  for (int K = 1; K <= 64; ++K) {
    std::vector<double> s(static_cast<size_t>(K));
    for (double& v : s) v = n(rng);
    const auto p = softmax(s);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(argmax(p) == argmax(s));
  }
}

TEST_CASE("softmax Jacobian diagonal at K = 2") {
  // d p_0 / d s_0 via the tape-free closed form p(1 - p).
  const std::vector<double> s{0.0, 0.0};
  const double h = 1e-6;
  const double fd = (softmax(std::vector<double>{h, 0.0})[0] - softmax(std::vector<double>{-h, 0.0})[0]) / (2 * h);
  const auto p = softmax(s);
  CHECK(p[0] * (1 - p[0]) == 0.25);
  CHECK(fd == doctest::Approx(0.25).epsilon(1e-8));
}

TEST_CASE("full-chain gradients w.r.t. P and parameters") {
  int fixtures = 0;
  for (std::uint64_t seed = 0; fixtures < 12; ++seed) {
    const ChainFixture f = chain_fixture(seed);
    if (f.state.terminal()) continue;
    ++fixtures;
    const auto& ch = f.scenario.spec.channel;
    const int K = static_cast<int>(valid_actions(f.state, f.scenario.P).size());
    const int target = static_cast<int>(seed % static_cast<unsigned>(K));

    auto tape = StepTape::from_rsrp(f.params, f.state, f.scenario.P, ch, f.norm);
    const auto probs = tape.probs();
    std::vector<double> ds(probs.size());
    for (size_t k = 0; k < ds.size(); ++k) ds[k] = (static_cast<int>(k) == target ? 1.0 : 0.0) - probs[k];
    auto g = tape.backward(ds, {Leaf::params, Leaf::rsrp});

    const auto objective_p = [&](const Eigen::VectorXd& v) {
      RsrpMatrix P = f.scenario.P;
      P.reshaped() = v;
      return log_softmax_at(score_candidates(f.params, build_candidates(f.state, P, ch, f.norm)), target);
    };
    const Eigen::VectorXd p0 = f.scenario.P.reshaped();
    const auto rp = cmguard::testing::central_difference_check(
        objective_p, p0, g.P.reshaped(), 1e-2, [&](Eigen::Index k) { return std::isfinite(p0(k)); });
    CHECK(rp.max_rel <= 1e-4);
    for (Eigen::Index k = 0; k < p0.size(); ++k)
      if (!std::isfinite(p0(k))) CHECK(g.P.reshaped()(k) == 0.0);

    const auto objective_t = [&](const Eigen::VectorXd& v) {
      GnnParams q = f.params;
      q.unflatten(v);
      return log_softmax_at(score_candidates(q, build_candidates(f.state, f.scenario.P, ch, f.norm)), target);
    };
    const auto rt = cmguard::testing::central_difference_check(objective_t, f.params.flatten(), g.params.flatten(), 1e-5);
    CHECK(rt.max_rel <= 1e-4);
  }
}

TEST_CASE("tape leaf and reuse errors") {
  ChainFixture f = chain_fixture(0);
  for (std::uint64_t s = 1; f.state.terminal(); ++s) f = chain_fixture(s);
  const auto& ch = f.scenario.spec.channel;
  const CandidateBatch batch = build_candidates(f.state, f.scenario.P, ch, f.norm);
  auto tape = StepTape::from_features(f.params, batch);
  const std::vector<double> ds(static_cast<size_t>(batch.size()), 1.0);
  CHECK_THROWS_AS(tape.backward(ds, {Leaf::rsrp}), std::logic_error);

  auto tape2 = StepTape::from_rsrp(f.params, f.state, f.scenario.P, ch, f.norm);
  tape2.backward(ds, {Leaf::rsrp});
  CHECK_THROWS_AS(tape2.backward(ds, {Leaf::rsrp}), std::logic_error);

  // Feature-rooted and P-rooted tapes score identically.
  auto tape3 = StepTape::from_features(f.params, batch);
  CHECK(tape3.scores() == score_candidates(f.params, batch));
}
