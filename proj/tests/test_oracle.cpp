#include <gtest/gtest.h>

#include <cmath>

#include "clusterre/bsde.hpp"
#include "clusterre/oracle.hpp"

using namespace clusterre;

namespace {

// Claims do not excite the intensity: the mean solves a linear ODE.
ModelParams unexcited(double rho) {
  ModelParams p;
  p.excitation = {ExcitationKind::constant, 0.0};
  p.rho = rho;
  return p;
}

std::vector<double> grid(int n, double T) {
  std::vector<double> t;
  for (int k = 0; k <= n; ++k) t.push_back(T * k / n);
  return t;
}

}  // namespace

TEST(MomentOracle, ClosedFormWithoutExcitation) {
  for (double rho : {0.0, 0.5, 3.0}) {
    const auto p = unexcited(rho);
    const auto curve = oracle::moment_ode_oracle(p, grid(20, p.horizon));
    ASSERT_EQ(curve.closed_form.size(), 21u);
    const double bt = p.beta_rev + rho * 0.5 / p.alpha;
    for (std::size_t k = 0; k < curve.t.size(); ++k) {
      EXPECT_NEAR(curve.closed_form[k], bt + (p.lambda0 - bt) * std::exp(-p.alpha * curve.t[k]), 1e-15);
      EXPECT_NEAR(curve.m[k], curve.closed_form[k], 1e-12);
    }
  }
}

TEST(MomentOracle, ExcitedMeanHasNoClosedFormAndGrows) {
  const ModelParams p;  // proportional excitation 0.5: E[l(Z1)] = 0.25
  const auto curve = oracle::moment_ode_oracle(p, grid(10, p.horizon));
  EXPECT_TRUE(curve.closed_form.empty());
  // Linear ODE m' = -(alpha - el) m + alpha beta + rho E[Z2] solved by hand.
  const double k = p.alpha - 0.25, c = p.alpha * p.beta_rev + p.rho * 0.5;
  for (std::size_t i = 0; i < curve.t.size(); ++i)
    EXPECT_NEAR(curve.m[i], c / k + (p.lambda0 - c / k) * std::exp(-k * curve.t[i]), 1e-12);
  EXPECT_THROW(oracle::moment_ode_oracle(p, {0.5, 0.2}), std::invalid_argument);
}

TEST(MomentOracle, SecondMomentOfDeterministicIntensity) {
  // No jumps at all: lambda_t is deterministic, so E[lambda^2] = E[lambda]^2.
  auto p = unexcited(0.0);
  const auto curve = oracle::second_moment_ode_oracle(p, grid(10, p.horizon));
  for (std::size_t i = 0; i < curve.t.size(); ++i) EXPECT_NEAR(curve.m2[i], curve.m[i] * curve.m[i], 1e-12);
}

TEST(MomentOracle, SecondMomentDominatesSquaredMean) {
  const ModelParams p;
  const auto curve = oracle::second_moment_ode_oracle(p, grid(10, p.horizon));
  EXPECT_EQ(curve.m2[0], p.lambda0 * p.lambda0);
  for (std::size_t i = 1; i < curve.t.size(); ++i) EXPECT_GT(curve.m2[i], curve.m[i] * curve.m[i]);
  // First component agrees with the mean oracle.
  const auto mean = oracle::moment_ode_oracle(p, grid(10, p.horizon));
  for (std::size_t i = 0; i < curve.t.size(); ++i) EXPECT_NEAR(curve.m[i], mean.m[i], 1e-14);
}

TEST(NestedZakai, PointSnapshotWithoutShocks) {
  // A single particle with no shocks follows the deterministic decay, weight cancels.
  auto p = unexcited(0.0);
  oracle::ParticleSnapshot snap{0.2, {3.0}, {1.0}};
  const auto e = oracle::nested_zakai_oracle(snap, 1, 0.7, p, 200, 1);
  EXPECT_NEAR(e.value, intensity_decay({3.0, 0.2}, 0.5, p), 1e-12);
  EXPECT_NEAR(e.se, 0.0, 1e-6);
  EXPECT_THROW(oracle::nested_zakai_oracle(snap, 1, 0.7, p, 10, 1), std::invalid_argument);
  EXPECT_THROW(oracle::nested_zakai_oracle(snap, 1, 0.1, p, 200, 1), std::invalid_argument);
}

TEST(GridMaximizer, NullUnderProhibitiveLoading) {
  ModelParams p;
  p.safety_loading = 1e6;
  const std::vector<double> th(8, 0.5);
  for (const auto& c : {Contract::proportional(), Contract::excess_of_loss()}) {
    const auto g = oracle::grid_maximizer(0.5, 1.0, th, 1.0, c, p);
    EXPECT_EQ(g.value, 0.0);
    EXPECT_EQ(g.u, c.u_null());
  }
  EXPECT_THROW(oracle::grid_maximizer(0.5, 1.0, th, 1.0, Contract::proportional(), p, 100), std::invalid_argument);
}

TEST(GridMaximizer, CostlyCoverIsDeclinedWithoutValueJumps) {
  // theta = 0 and a point-mass claim: with ceded amount v = 1 - u,
  // f~ = w pi [1 - e^{-a v} - a (1 + loading) v] <= 0, so u = 1 is optimal.
  ModelParams p;
  p.claim_dist = MarkDistribution::point_mass(1.0);
  const auto g = oracle::grid_maximizer(0.0, 1.0, std::vector<double>(8, 0.0), 1.0, Contract::proportional(), p);
  EXPECT_EQ(g.u, 1.0);
  EXPECT_EQ(g.value, 0.0);
}

TEST(GridMaximizer, ProportionalPointMassByHand) {
  // Constant theta and a point-mass claim z = 1: with v = 1 - u,
  //   f~(v) = pi [(w + theta)(1 - e^{-a v}) - w a (1 + loading) v],
  // maximised at v* = log((w + theta) / (w (1 + loading))) / a.
  ModelParams p;
  p.claim_dist = MarkDistribution::point_mass(1.0);
  const double w = 1.0, theta = 1.0, pi = 1.7, t = 0.0;
  const double a = p.effective_aversion(t), k = 1.0 + p.safety_loading;
  const double v = std::log((w + theta) / (w * k)) / a;
  const double best = pi * ((w + theta) * (1.0 - std::exp(-a * v)) - w * a * k * v);
  const auto g = oracle::grid_maximizer(t, w, std::vector<double>(8, theta), pi, Contract::proportional(), p);
  EXPECT_NEAR(g.u_refined, 1.0 - v, 1e-7);
  EXPECT_NEAR(g.value_refined, best, 1e-12);
  EXPECT_NEAR(g.value, best, 1e-7);
  EXPECT_NEAR(oracle::ftilde_closed_form(t, w, std::vector<double>(8, theta), pi, Contract::proportional(), p, 1.0 - v),
              best, 1e-14);
}

TEST(GridMaximizer, ClosedFormIntegralsAgreeWithQuadrature) {
  ModelParams p;
  p.claim_dist = MarkDistribution::exponential(2.0, 3.0);
  Rng rng(4);
  for (const auto& c : {Contract::proportional(), Contract::excess_of_loss(), Contract::limited_stop_loss(0.7)}) {
    StrategyEvaluator ev(p, c, 4, 64);
    for (int i = 0; i < 20; ++i) {
      std::vector<double> th(4);
      for (auto& x : th) x = rng.uniform(-0.5, 2.0);
      const double u = c.kind == ContractKind::proportional ? rng.uniform(0.0, 1.0) : rng.uniform(0.0, 3.0);
      EXPECT_NEAR(oracle::ftilde_closed_form(0.4, 1.2, th, 0.9, c, p, u), ev.ftilde({0.4, 1.2, {th}, 0.9}, u), 1e-10);
    }
  }
}

TEST(UtilityMc, ConstantControlsOnSharedPaths) {
  const ModelParams p;
  oracle::UtilityOptions opt;
  opt.particles = 50;
  opt.report_steps = 20;
  // Null reinsurance is the terminal value of the value-process ensemble.
  const auto none = oracle::utility_mc(1.0, Contract::proportional(), p, 200, 6, opt);
  EXPECT_EQ(none.samples.size(), 200u);
  const auto g = build_ensemble(200, 20, p, 6, {50});
  EXPECT_NEAR(none.value, mean_terminal(g).first, 1e-12 * none.value);
  const auto full = oracle::utility_mc(0.0, Contract::proportional(), p, 20, 6, opt);
  EXPECT_GT(full.value, 0.0);
  EXPECT_THROW(oracle::utility_mc(1.5, Contract::proportional(), p, 20, 6, opt), std::invalid_argument);
  EXPECT_THROW(oracle::utility_mc(0.5, Contract::proportional(), p, 1, 6, opt), std::invalid_argument);
}

TEST(ExponentialIdentity, DeterministicIntegrandsAreExact) {
  const ModelParams p;
  const auto zero = oracle::exponential_identity_check({0.0, 0.0, 1.0, 0.0, 0}, p, 1000, 1);
  EXPECT_EQ(zero.lhs, 1.0);
  EXPECT_EQ(zero.rhs, 1.0);
  EXPECT_TRUE(zero.pass);
  const auto one = oracle::exponential_identity_check({1.0, 0.0, 1.0, 0.0, 0}, p, 20000, 2);
  EXPECT_TRUE(one.rhs_exact);
  EXPECT_NEAR(one.rhs, std::exp(std::expm1(1.0) * p.horizon), 1e-14);
  EXPECT_TRUE(one.pass) << one.lhs << " vs " << one.rhs << " se " << one.lhs_se;
}

TEST(ExponentialIdentity, PredictableEventAndMarkCut) {
  const ModelParams p;
  const auto v = oracle::exponential_identity_check({0.7, 0.3, 0.9, 0.4, 1}, p, 20000, 3);
  EXPECT_FALSE(v.rhs_exact);
  EXPECT_GT(v.rhs_se, 0.0);
  EXPECT_TRUE(v.pass) << v.lhs << " vs " << v.rhs;
  EXPECT_THROW(oracle::exponential_identity_check({0.7, 0.9, 0.3, 0.4, 1}, p, 100, 3), std::invalid_argument);
}

TEST(KolmogorovSmirnov, IdenticalAndShiftedSamples) {
  Rng rng(1);
  std::vector<double> a(2000), b(2000), c(2000);
  for (auto& x : a) x = rng.uniform();
  for (auto& x : b) x = rng.uniform();
  for (auto& x : c) x = rng.uniform() + 0.2;
  const auto [d0, p0] = oracle::ks_two_sample(a, a);
  EXPECT_EQ(d0, 0.0);
  EXPECT_NEAR(p0, 1.0, 1e-12);
  EXPECT_GT(oracle::ks_two_sample(a, b).second, 1e-3);
  const auto [d2, p2] = oracle::ks_two_sample(a, c);
  EXPECT_NEAR(d2, 0.2, 0.05);
  EXPECT_LT(p2, 1e-10);
  EXPECT_THROW(oracle::ks_two_sample({}, a), std::invalid_argument);
}
