#include <gtest/gtest.h>

#include "opdyn/weights.hpp"
#include "support.hpp"

using namespace opdyn;
using opdyn::testing::Rng;

namespace {

AgentProfile profile(double eps, double r, Vector diag, double status = 0.0, double c = 1.0) {
  AgentProfile p;
  const auto d = diag.size();
  p.attributes = Vector::Constant(1, status);
  p.epsilon = eps;
  p.correlations = Matrix::Constant(d, d, r);
  p.correlations.diagonal().setOnes();
  p.c = c;
  p.stubborn_diag = std::move(diag);
  return p;
}

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

}  // namespace

TEST(Weights, ClosedGatesGiveZero) {
  const auto p = profile(0.0, 0.0, Vector::Ones(2));
  const Matrix v = build_influence_root(p, p, vec2(0, 0), vec2(1, 1), GammaRule::constant(1.0));
  EXPECT_TRUE(v.isZero(0.0));
}

TEST(Weights, ClosedGatesSuppressCorrelationsToo) {
  const auto p = profile(0.1, 0.7, Vector::Ones(2));
  const Matrix v = build_influence_root(p, p, vec2(0, 0), vec2(1, -1), GammaRule::constant(1.0));
  EXPECT_TRUE(v.isZero(0.0));
}

TEST(Weights, OneOpenGateEnablesOffDiagonal) {
  const auto p = profile(0.5, 0.4, Vector::Ones(2), 0.0, 2.0);
  const Matrix v = build_influence_root(p, p, vec2(0, 0), vec2(0.2, 3), GammaRule::constant(1.5));
  EXPECT_EQ(v(0, 0), 1.5);
  EXPECT_EQ(v(1, 1), 0.0);
  EXPECT_EQ(v(0, 1), 0.8);
  EXPECT_EQ(v(1, 0), 0.8);
}

TEST(Weights, GateBoundaryIsInclusive) {
  const auto p = profile(0.25, 0.0, Vector::Ones(1));
  Vector bi(1), bj(1);
  bi << 0.5;
  bj << 0.75;  // exactly representable, difference is exactly eps
  EXPECT_EQ(build_influence_root(p, p, bi, bj, GammaRule::constant(1.0))(0, 0), 1.0);
  bj << std::nextafter(0.75, 1.0);
  EXPECT_EQ(build_influence_root(p, p, bi, bj, GammaRule::constant(1.0))(0, 0), 0.0);
}

TEST(Weights, LeaderStatusGains) {
  const auto rule = GammaRule::affine_in_target_status(2.0, 0.5);
  const auto follower = profile(10.0, 0.0, Vector::Ones(2), 0.0);
  const auto leader = profile(10.0, 0.0, Vector::Ones(2), 1.0);
  const Matrix to_leader = build_influence_root(follower, leader, vec2(0, 0), vec2(1, 1), rule);
  const Matrix to_peer = build_influence_root(follower, follower, vec2(0, 0), vec2(1, 1), rule);
  EXPECT_EQ(to_leader.diagonal(), Vector::Constant(2, 2.5));
  EXPECT_EQ(to_peer.diagonal(), Vector::Constant(2, 0.5));
}

TEST(Weights, GammaTable) {
  std::map<std::pair<std::size_t, std::size_t>, Vector> gains;
  gains[{0, 1}] = vec2(0.3, 0.0);
  const auto rule = GammaRule::table(gains);
  const auto p = profile(10.0, 0.0, Vector::Ones(2));
  const Matrix v01 = build_influence_root(p, p, vec2(0, 0), vec2(0, 0), rule, {0, 1});
  const Matrix v10 = build_influence_root(p, p, vec2(0, 0), vec2(0, 0), rule, {1, 0});
  EXPECT_EQ(v01(0, 0), 0.3);
  EXPECT_EQ(v01(1, 1), 0.0);
  EXPECT_TRUE(v10.isZero(0.0));
}

TEST(Weights, NegativeGainRejected) {
  const auto p = profile(10.0, 0.0, Vector::Ones(1));
  EXPECT_THROW(build_influence_root(p, p, Vector::Zero(1), Vector::Zero(1), GammaRule::constant(-1.0)),
               InvalidSpec);
}

TEST(Weights, ExampleOneRoots) {
  // Stubbornness seed 0.1, influence gain 1, fully correlated issues.
  const auto p = profile(10.0, 1.0, Vector::Constant(2, 0.1));
  const Matrix v12 = build_influence_root(p, p, vec2(0, 0), vec2(1, 1), GammaRule::constant(1.0));
  EXPECT_EQ(v12, Matrix::Ones(2, 2));
  EXPECT_EQ(square_to_weight(v12), Matrix::Constant(2, 2, 2.0));

  Matrix v11(2, 2);
  v11 << 0.1, 1.0, 1.0, 0.1;
  EXPECT_TRUE(build_stubbornness(p).isApprox(v11 * v11, 1e-15));
}

TEST(Weights, SquareOfUnitCorrelation) {
  for (double r : {-1.0, -0.3, 0.0, 0.6, 1.0}) {
    Matrix v(2, 2), w(2, 2);
    v << 1, r, r, 1;
    w << 1 + r * r, 2 * r, 2 * r, 1 + r * r;
    EXPECT_TRUE(square_to_weight(v).isApprox(w, 1e-15)) << r;
  }
  EXPECT_TRUE(square_to_weight(Matrix::Zero(3, 3)).isZero(0.0));
}

TEST(Weights, ThreeIssueCrossTerm) {
  Rng rng(7);
  Matrix v = rng.matrix(3, 3);
  v = (v + v.transpose()).eval();
  const Matrix w = square_to_weight(v);
  EXPECT_NEAR(w(0, 1), v(0, 1) * (v(0, 0) + v(1, 1)) + v(0, 2) * v(1, 2), 1e-14);
}

TEST(Weights, AsymmetricRootRejected) {
  Matrix v(2, 2);
  v << 1, 0.5, 0.4, 1;
  EXPECT_THROW(square_to_weight(v), InvalidSpec);
}

TEST(Weights, StubbornnessIdentityAndSingular) {
  EXPECT_EQ(build_stubbornness(profile(0.0, 0.0, Vector::Ones(3))), Matrix::Identity(3, 3));
  try {
    build_stubbornness(profile(0.0, 1.0, Vector::Ones(2)), 4);
    FAIL() << "singular V_ii accepted";
  } catch (const Assumption1Violation& e) {
    EXPECT_NE(std::string(e.what()).find("agent 5"), std::string::npos);
  }
}

TEST(Weights, ProfileValidation) {
  auto p = profile(0.0, 0.0, Vector::Ones(2));
  p.stubborn_diag[1] = 0.0;
  EXPECT_THROW(validate_profile(p), InvalidSpec);
  p = profile(-0.1, 0.0, Vector::Ones(2));
  EXPECT_THROW(validate_profile(p), InvalidSpec);
  p = profile(0.0, 1.5, Vector::Ones(2));
  EXPECT_THROW(validate_profile(p), InvalidSpec);
  p = profile(0.0, 0.0, Vector::Ones(2));
  p.correlations(0, 1) = 0.2;
  EXPECT_THROW(validate_profile(p), InvalidSpec);
}

namespace {

GameSpec two_agent(Matrix w11, Matrix w12) {
  GameSpec g;
  g.n = 2;
  g.d = static_cast<std::size_t>(w11.rows());
  g.stubbornness = {std::move(w11), Matrix::Identity(g.d, g.d)};
  g.biases = {Vector::Zero(g.d), Vector::Zero(g.d)};
  g.set_influence(0, 1, std::move(w12));
  return g;
}

}  // namespace

TEST(Weights, AssumptionOneExamples) {
  Matrix v11(2, 2);
  v11 << 0.1, 1.0, 1.0, 0.1;
  EXPECT_TRUE(validate_assumption1(two_agent(v11 * v11, Matrix::Constant(2, 2, 2.0))).empty());

  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;
  const auto v = validate_assumption1(two_agent(bad, Matrix::Zero(2, 2)));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].agent, 0u);
  EXPECT_EQ(v[0].kind, Violation::Kind::not_positive_definite);
  EXPECT_NEAR(v[0].value, -1.0, 1e-12);
  EXPECT_NE(v[0].message.find("agent 1"), std::string::npos);

  Matrix skew(2, 2);
  skew << 1, 0.5, 0.0, 1;
  const auto s = validate_assumption1(two_agent(Matrix::Identity(2, 2), skew));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].kind, Violation::Kind::asymmetric);
}

TEST(Weights, RandomProfilesAreNonnegativeDefinite) {
  Rng rng(20261016);
  for (int k = 0; k < 1000; ++k) {
    const auto d = static_cast<Eigen::Index>(rng.index(1, 4));
    AgentProfile pi, pj;
    for (auto* p : {&pi, &pj}) {
      p->attributes = Vector::Constant(1, static_cast<double>(rng.index(0, 1)));
      p->epsilon = rng.uniform(0.0, 1.0);
      Matrix r = rng.matrix(d, d);
      r = (0.5 * (r + r.transpose())).eval();
      r.diagonal().setOnes();
      p->correlations = r;
      p->c = rng.uniform(0.0, 2.0);
      p->stubborn_diag = rng.vector(d).cwiseAbs().array() + 0.1;
    }
    const Matrix v = build_influence_root(pi, pj, rng.vector(d), rng.vector(d),
                                          GammaRule::affine_in_target_status(2.0, 0.5));
    GameSpec g = two_agent(Matrix::Identity(d, d), square_to_weight(v));
    EXPECT_TRUE(validate_assumption1(g).empty()) << "profile " << k;
  }
}
