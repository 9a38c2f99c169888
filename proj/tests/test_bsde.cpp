#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "clusterre/bsde.hpp"
#include "clusterre/oracle.hpp"

using namespace clusterre;

namespace {

BsdeEnsembleOptions small_filter() {
  BsdeEnsembleOptions o;
  o.particles = 100;
  return o;
}

// No claims can realistically occur: lambda starts at 1e-9 and decays to 0.
ModelParams quiet_model() {
  ModelParams p;
  p.lambda0 = 1e-9;
  p.beta_rev = 0.0;
  p.rho = 0.0;
  return p;
}

}  // namespace

TEST(BsdeEnsemble, TerminalValueWithoutClaimsIsDeterministic) {
  const ModelParams p;
  const auto g = build_ensemble(300, 10, p, 17, small_filter());
  ASSERT_EQ(g.size(), 300u);
  ASSERT_EQ(g.steps(), 10);
  EXPECT_EQ(g.times.front(), 0.0);
  EXPECT_EQ(g.times.back(), p.horizon);
  const double aT = p.eta * std::exp(p.rate_r * p.horizon);
  int quiet = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& path = g.paths[i];
    if (path.claim_time.empty()) {
      ++quiet;
      EXPECT_NEAR(path.xi, std::exp(-p.eta * deterministic_wealth(p, p.horizon)), 1e-14);
    }
    // Claims only lower the terminal wealth, and by at most e^{rT} C_T.
    const double xi0 = std::exp(-p.eta * deterministic_wealth(p, p.horizon));
    EXPECT_GE(path.xi, xi0 * (1 - 1e-12));
    EXPECT_LE(path.xi, xi0 * std::exp(aT * path.total_claims) * (1 + 1e-12));
    EXPECT_LE(path.xi, std::exp(aT * path.total_claims));
    ASSERT_EQ(path.pi.size(), 11u);
    EXPECT_NEAR(path.pi[0], p.lambda0, 1e-12);
    for (int k = 0; k <= 10; ++k) EXPECT_GE(path.pi2[k], path.pi[k] * path.pi[k]);
  }
  EXPECT_GT(quiet, 0);
}

TEST(BsdeEnsemble, DiscountedWealthAtTheEnd) {
  const ModelParams p;
  const auto g = build_ensemble(50, 5, p, 3, small_filter());
  const double aT = p.eta * std::exp(p.rate_r * p.horizon);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(std::exp(-aT * g.discounted_wealth(i, g.steps())), g.paths[i].xi, 1e-12);
    EXPECT_NEAR(g.discounted_wealth(i, 0), p.initial_capital, 1e-15);
  }
}

TEST(BsdeEnsemble, FeaturesHaveFullRankAwayFromZero) {
  const auto g = build_ensemble(400, 10, ModelParams{}, 5, small_filter());
  EXPECT_EQ(feature_rank(g, 0), 1);  // the filter starts from a known intensity
  EXPECT_EQ(feature_rank(g, 5), 4);
  EXPECT_EQ(feature_rank(g, 10), 4);
}

TEST(BsdeEnsemble, CoarsenKeepsEveryOtherKnot) {
  const auto g = build_ensemble(20, 10, ModelParams{}, 5, small_filter());
  const auto c = coarsen(g, 2);
  ASSERT_EQ(c.steps(), 5);
  for (int k = 0; k <= 5; ++k) {
    EXPECT_EQ(c.times[k], g.times[2 * k]);
    EXPECT_EQ(c.paths[3].pi[k], g.paths[3].pi[2 * k]);
  }
  EXPECT_THROW(coarsen(g, 3), std::invalid_argument);
}

TEST(BsdeEnsemble, RejectsInfiniteExponentialMoments) {
  ModelParams p;
  p.claim_dist = MarkDistribution::exponential(1.0);
  EXPECT_THROW(build_ensemble(10, 5, p, 1, small_filter()), std::invalid_argument);
  EXPECT_THROW(build_ensemble(0, 5, ModelParams{}, 1), std::invalid_argument);
}

TEST(BsdeDriver, NonPositiveAndZeroUnderProhibitiveLoading) {
  const ModelParams p;
  Rng rng(8);
  for (const auto& c : {Contract::proportional(), Contract::excess_of_loss(), Contract::limited_stop_loss(0.4)}) {
    for (int i = 0; i < 50; ++i) {
      const double y = rng.uniform(0.1, 2.0);
      BinnedTheta th{std::vector<double>(8)};
      for (auto& v : th.values) v = rng.uniform(-0.9 * y, 2.0 * y);
      EXPECT_LE(driver_value(0.3, y, th, rng.uniform(0.2, 3.0), c, p), 0.0);
    }
    // A prohibitive reinsurance loading makes any cover worse than none.
    ModelParams dear = p;
    dear.safety_loading = 1e6;
    BinnedTheta th{std::vector<double>(8, 0.5)};
    EXPECT_EQ(driver_value(0.3, 1.0, th, 1.0, c, dear), 0.0);
  }
  EXPECT_THROW(driver_value(0.3, 0.0, BinnedTheta::zero(8), 1.0, Contract::proportional(), p), std::invalid_argument);
}

TEST(BsdeDriver, MatchesExhaustiveGridSearch) {
  const ModelParams p;
  Rng rng(21);
  for (const auto& c : {Contract::proportional(), Contract::excess_of_loss(), Contract::limited_stop_loss(0.5)}) {
    for (int i = 0; i < 10; ++i) {
      const double t = rng.uniform(0.0, 1.0), y = rng.uniform(0.2, 1.5), pi = rng.uniform(0.3, 3.0);
      BinnedTheta th{std::vector<double>(8)};
      const double factor = rng.uniform(1.2, 3.0);
      for (int j = 0; j < 8; ++j) th.values[j] = y * (std::pow(factor, (j + 0.5) / 8.0) - 1.0);
      const auto grid = oracle::grid_maximizer(t, y, th.values, pi, c, p);
      EXPECT_NEAR(driver_value(t, y, th, pi, c, p), -grid.value_refined, 1e-8 * (1.0 + grid.value_refined))
          << to_string(c.kind) << " state " << i;
    }
  }
}

TEST(BsdeSolve, QuietModelKeepsTheTerminalValue) {
  const ModelParams p = quiet_model();
  const auto g = build_ensemble(50, 8, p, 2, small_filter());
  const double xi = std::exp(-p.eta * deterministic_wealth(p, p.horizon));
  for (const auto& path : g.paths) ASSERT_EQ(path.total_claims, 0.0);
  const auto sol = solve_backward(g, Contract::proportional(), p);
  EXPECT_NEAR(sol.y0, xi, 1e-8);
  for (const auto& slice : sol.y)
    for (double v : slice) ASSERT_NEAR(v, xi, 1e-8);
  for (const auto& d : sol.slices)
    for (double th : d.theta_mean) EXPECT_NEAR(th, 0.0, 1e-12);
  EXPECT_EQ(sol.floor_hits, 0u);
}

TEST(BsdeSolve, TerminalAnchoringIsExact) {
  const ModelParams p;
  const auto g = build_ensemble(200, 10, p, 9, small_filter());
  const auto sol = solve_backward(g, Contract::excess_of_loss(), p);
  ASSERT_EQ(sol.y.size(), 11u);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(sol.y.back()[i], g.paths[i].xi);
  EXPECT_EQ(sol.terminal_gap, 0.0);
  EXPECT_EQ(sol.times, g.times);
  EXPECT_EQ(sol.bins, 8);
}

TEST(BsdeSolve, ReinsuranceLowersTheValueBelowTheTerminalMean) {
  const ModelParams p;
  const auto g = build_ensemble(400, 10, p, 13, small_filter());
  const auto [mean_xi, se] = mean_terminal(g);
  for (const auto& c : {Contract::proportional(), Contract::excess_of_loss()}) {
    const auto sol = solve_backward(g, c, p);
    EXPECT_GT(sol.y0, 0.0);
    EXPECT_LE(sol.y0, mean_xi + 1e-12);
    EXPECT_GE(sol.min_driver, 0.0);
    EXPECT_EQ(optimal_utility_at_zero(sol), sol.y0);
    const auto b = martingale_bounds(g, p);
    EXPECT_GT(sol.y0, b.m1 - 1e-12);
  }
  EXPECT_GT(se, 0.0);
}

TEST(BsdeSolve, MartingaleBoundsClosedForms) {
  const ModelParams p;
  const auto g = build_ensemble(100, 5, p, 4, small_filter());
  const auto b = martingale_bounds(g, p);
  const double r = p.rate_r, T = p.horizon;
  EXPECT_NEAR(b.m1,
              std::exp(-p.eta * p.initial_capital * std::exp(r * T) -
                       p.eta * p.insurance_premium_rate * (std::exp(r * T) - 1.0) / r),
              1e-15);
  EXPECT_GT(b.m2, 1.0);
  EXPECT_LT(b.m1, b.m2);

  const ModelParams q = quiet_model();
  const auto quiet = build_ensemble(20, 5, q, 4, small_filter());
  EXPECT_EQ(martingale_bounds(quiet, q).m2, 1.0);
  EXPECT_EQ(martingale_bounds(quiet, q).m2_se, 0.0);
}

TEST(BsdeSolve, IllConditionedRegressionReportsTheSlice) {
  const ModelParams p;
  const auto g = build_ensemble(100, 6, p, 4, small_filter());
  BsdeOptions opt;
  opt.max_condition = 1.0;  // any nontrivial design exceeds this
  try {
    solve_backward(g, Contract::proportional(), p, opt);
    FAIL() << "expected a regression failure";
  } catch (const BsdeRegressionError& e) {
    EXPECT_EQ(e.slice(), 5);
    EXPECT_GT(e.condition(), 1.0);
  }
}

TEST(BsdeSolve, DropPathsOnRequest) {
  const ModelParams p;
  const auto g = build_ensemble(300, 4, p, 4, small_filter());
  BsdeOptions opt;
  opt.keep_paths = false;
  const auto sol = solve_backward(g, Contract::proportional(), p, opt);
  EXPECT_TRUE(sol.y.empty());
  EXPECT_EQ(sol.slices.size(), 5u);
  EXPECT_THROW(solve_backward(build_ensemble(1, 4, p, 4, small_filter()), Contract::proportional(), p),
               std::invalid_argument);
}

TEST(BsdeSolve, SolutionCsvLayout) {
  const ModelParams p;
  const auto g = build_ensemble(300, 4, p, 4, small_filter());
  BsdeOptions opt;
  opt.bins = 2;
  const auto sol = solve_backward(g, Contract::proportional(), p, opt);
  std::ostringstream os;
  write_solution_csv(os, sol, "abc123");
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# manifest: abc123");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# y0: ", 0), 0u);
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line, "t,mean_y,q05,q95,mean_u,mean_driver,min_driver,condition,r2,features,theta_bin_0,theta_bin_1");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
}
