#include <random>

#include <doctest.h>

#include "cmguard/features.hpp"

using namespace cmguard;

namespace {

struct Fixture {
  Eigen::MatrixXd C, R, A_c, A_u;
};

Fixture hand_fixture() {
  Fixture f;
  f.A_c.resize(2, 2);
  f.A_c << 0, 1,
           1, 0;
  f.A_u = Eigen::MatrixXd::Identity(2, 2);
  f.C.resize(2, 2);
  f.C << 2, 1,
         1, 4;
  f.R.resize(2, 2);
  f.R << 2, 0,
         0, 4;
  return f;
}

Fixture random_fixture(std::mt19937_64& rng, int N, int M) {
  std::uniform_real_distribution<double> u(0.0, 5.0);
  Fixture f;
  f.C = Eigen::MatrixXd::NullaryExpr(N, M, [&] { return u(rng); });
  f.R = Eigen::MatrixXd::NullaryExpr(N, M, [&] { return u(rng); });
  f.A_c = Eigen::MatrixXd::Zero(N, N);
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b)
      if (rng() % 2) f.A_c(a, b) = f.A_c(b, a) = 1.0;
  f.A_u = Eigen::MatrixXd::Zero(N, M);
  for (int j = 0; j < M; ++j)
    if (rng() % 3) f.A_u(static_cast<Eigen::Index>(rng() % static_cast<unsigned>(N)), j) = 1.0;
  return f;
}

}  // namespace

TEST_CASE("hand-derived 2x2 features") {
  const Fixture f = hand_fixture();
  const FeatureSet x = build_features(f.C, f.R, f.A_c, f.A_u);
  Eigen::MatrixXd c1(2, 2), c2(2, 2), u(2, 2);
  c1 << 4, 2,
        2, 4;
  c2 << 2, 3,
        4, 5;
  u << 3, 2,
       5, 4;
  CHECK(x.cell1 == c1);
  CHECK(x.cell2 == c2);
  CHECK(x.ue == u);
}

TEST_CASE("shape mismatch is rejected") {
  Fixture f = hand_fixture();
  f.A_u = Eigen::MatrixXd::Zero(2, 3);
  CHECK_THROWS_AS(build_features(f.C, f.R, f.A_c, f.A_u), std::invalid_argument);
}

TEST_CASE("features are linear in (C, R)") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Fixture f = random_fixture(rng, 4, 7);
    const double alpha = 0.25 * static_cast<double>(t);
    const FeatureSet a = build_features(alpha * f.C, alpha * f.R, f.A_c, f.A_u);
    const FeatureSet b = build_features(f.C, f.R, f.A_c, f.A_u);
    CHECK((a.flatten() - alpha * b.flatten()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + b.flatten().cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("UE permutation equivariance") {
  std::mt19937_64 rng(2);
  const Fixture f = random_fixture(rng, 3, 6);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 4, 2;
  const FeatureSet a = build_features(f.C, f.R, f.A_c, f.A_u);
  const FeatureSet b = build_features(f.C * perm, f.R * perm, f.A_c, f.A_u * perm);
  CHECK((b.cell1 - a.cell1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((b.cell2 - a.cell2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((b.ue - perm.transpose() * a.ue).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("feature gradients match central differences") {
  std::mt19937_64 rng(3);
  const double h = 1e-5;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Fixture f = random_fixture(rng, 3, 5);
    // Random linear functional of the features as the objective.
    const FeatureSet base = build_features(f.C, f.R, f.A_c, f.A_u);
    Eigen::VectorXd w = Eigen::VectorXd::NullaryExpr(base.size(), [&] { return std::uniform_real_distribution<double>(-1, 1)(rng); });
    FeatureSet g = base;
    g.unflatten(w);
    Eigen::MatrixXd dC, dR;
    build_features_backward(g, f.A_c, f.A_u, dC, dR);
    auto objective = [&](const Eigen::MatrixXd& C, const Eigen::MatrixXd& R) {
      return w.dot(build_features(C, R, f.A_c, f.A_u).flatten());
    };
    for (Eigen::Index k = 0; k < f.C.size(); ++k) {
      Eigen::MatrixXd Cp = f.C, Cm = f.C, Rp = f.R, Rm = f.R;
      Cp(k) += h;
      Cm(k) -= h;
      Rp(k) += h;
      Rm(k) -= h;
      const double fdC = (objective(Cp, f.R) - objective(Cm, f.R)) / (2 * h);
      const double fdR = (objective(f.C, Rp) - objective(f.C, Rm)) / (2 * h);
      worst = std::max(worst, std::abs(fdC - dC(k)) / std::max(1.0, std::abs(fdC)));
      worst = std::max(worst, std::abs(fdR - dR(k)) / std::max(1.0, std::abs(fdR)));
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("min-max normalization") {
  FeatureSet f{Eigen::MatrixXd(3, 2), Eigen::MatrixXd(3, 2), Eigen::MatrixXd(3, 2)};
  f.cell1 << 0, 7,
             2, 7,
             4, 7;
  f.cell2.setOnes();
  f.ue.setRandom();
  const NormStats s = fit_norm(std::vector<FeatureSet>{f});
  const FeatureSet n = normalize(f, s);
  CHECK(n.cell1(0, 0) == 0.0);
  CHECK(n.cell1(1, 0) == 0.5);
  CHECK(n.cell1(2, 0) == 1.0);
  CHECK(n.cell1.col(1).isZero());  // constant column
  CHECK(n.cell2.isZero());

  CHECK_THROWS_AS(fit_norm(std::vector<FeatureSet>{}), std::invalid_argument);
}

TEST_CASE("normalize/denormalize round trip") {
  std::mt19937_64 rng(4);
  std::vector<FeatureSet> suite;
  for (int t = 0; t < 8; ++t) {
    const Fixture f = random_fixture(rng, 4, 9);
    suite.push_back(build_features(1e8 * f.C, 1e8 * f.R, f.A_c, f.A_u));
  }
  const NormStats s = fit_norm(suite);
  for (const auto& f : suite) {
    const FeatureSet n = normalize(f, s);
    CHECK(n.flatten().minCoeff() >= 0.0);
    CHECK(n.flatten().maxCoeff() <= 1.0);
    const Eigen::VectorXd back = denormalize(n, s).flatten();
    const Eigen::VectorXd orig = f.flatten();
    for (Eigen::Index k = 0; k < orig.size(); ++k)
      CHECK(std::abs(back(k) - orig(k)) <= 1e-12 * std::max(1.0, std::abs(orig(k))));
  }
}
