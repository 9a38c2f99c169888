#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "clusterre/filter.hpp"
#include "clusterre/oracle.hpp"
#include "clusterre/simulator.hpp"

using namespace clusterre;

namespace {

ModelParams no_shock_params() {
  ModelParams p;
  p.rho = 0.0;
  return p;
}

EventLog empty_log(const ModelParams& p) { return EventLog{p.lambda0, p.horizon, {}}; }

EventLog claims_at(const ModelParams& p, const std::vector<std::pair<double, double>>& claims) {
  EventLog log = empty_log(p);
  for (const auto& [t, z] : claims) log.events.push_back({t, EventSource::claim, z, std::nan("")});
  return log;
}

double weight_sum(const FilterState& st) { return std::accumulate(st.weights.begin(), st.weights.end(), 0.0); }

}  // namespace

TEST(FilterInit, DiracAtInitialIntensity) {
  const ModelParams p;
  const auto st = filter_init(p, 4, 1);
  ASSERT_EQ(st.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(st.anchor_lambda[i], p.lambda0);
    EXPECT_NEAR(st.weights[i], 0.25, 1e-15);
  }
  EXPECT_NEAR(filter_moment(st, 1), p.lambda0, 1e-15);
  EXPECT_NEAR(filter_moment(st, 2) - p.lambda0 * p.lambda0, 0.0, 1e-14);
  EXPECT_EQ(filter_moment(st, 0), 1.0);
  EXPECT_THROW(filter_init(p, 0, 1), std::invalid_argument);
}

TEST(FilterPropagate, DeterministicDecayWithoutShocks) {
  const auto p = no_shock_params();
  auto st = filter_init(p, 50, 2);
  for (double t : {0.1, 0.35, 0.9}) {
    filter_propagate(st, t - st.t_current);
    EXPECT_NEAR(filter_moment(st, 1), p.beta_rev + (p.lambda0 - p.beta_rev) * std::exp(-p.alpha * t), 1e-12);
  }
  EXPECT_THROW(filter_propagate(st, -0.1), std::invalid_argument);
}

TEST(FilterPropagate, SingleParticleKeepsUnitWeight) {
  const ModelParams p;
  auto st = filter_init(p, 1, 3);
  filter_propagate(st, 0.4);
  filter_update_claim(st, 0.3);
  filter_propagate(st, 0.3);
  EXPECT_NEAR(st.weights[0], 1.0, 1e-15);
}

TEST(FilterPropagate, WeightsStayNormalized) {
  const ModelParams p;
  auto st = filter_init(p, 500, 4);
  const std::vector<std::pair<double, double>> claims = {{0.1, 0.5}, {0.2, 0.9}, {0.55, 0.1}};
  for (const auto& [t, z] : claims) {
    filter_propagate(st, t - st.t_current);
    EXPECT_NEAR(weight_sum(st), 1.0, 1e-12);
    filter_update_claim(st, z);
    EXPECT_NEAR(weight_sum(st), 1.0, 1e-12);
    filter_resample(st, 0.5);
    EXPECT_NEAR(weight_sum(st), 1.0, 1e-12);
    EXPECT_GE(st.ess(), 1.0);
    EXPECT_LE(st.ess(), 500.0 + 1e-9);
  }
}

TEST(FilterUpdateClaim, EqualParticlesShiftByExcitation) {
  const auto p = no_shock_params();
  auto st = filter_init(p, 10, 5);
  filter_update_claim(st, 0.8);
  EXPECT_NEAR(filter_moment(st, 1), p.lambda0 + p.excitation(0.8), 1e-14);
  for (double w : st.weights) EXPECT_NEAR(w, 0.1, 1e-15);
}

TEST(FilterUpdateClaim, TwoParticleHandComputation) {
  ModelParams p = no_shock_params();
  p.excitation = {ExcitationKind::constant, 0.0};
  auto st = filter_init(p, 2, 6);
  st.anchor_lambda = {1.0, 3.0};
  detail::refresh(st);
  filter_update_claim(st, 0.5);
  EXPECT_NEAR(st.weights[0], 0.25, 1e-15);
  EXPECT_NEAR(st.weights[1], 0.75, 1e-15);
  EXPECT_NEAR(filter_moment(st, 1), 2.5, 1e-15);
  EXPECT_THROW(filter_update_claim(st, 0.0), std::invalid_argument);
}

TEST(FilterUpdateClaim, LambdaBiasingInShotNoiseReduction) {
  ModelParams p;
  p.beta_rev = 0.0;
  p.excitation = {ExcitationKind::constant, 0.0};
  auto st = filter_init(p, 2000, 7);
  filter_propagate(st, 0.4);
  filter_materialize(st);
  const double m1 = filter_moment(st, 1), m2 = filter_moment(st, 2), m3 = filter_moment(st, 3);
  const double log_norm = st.log_norm;
  filter_update_claim(st, 0.6);
  EXPECT_NEAR(filter_moment(st, 1), m2 / m1, 1e-12 * m2 / m1);
  EXPECT_NEAR(filter_moment(st, 2), m3 / m1, 1e-12 * m3 / m1);
  EXPECT_NEAR(st.log_norm - log_norm, std::log(m1), 1e-12);
}

TEST(FilterMoment, JensenHoldsAlongARun) {
  const ModelParams p;
  const auto log = simulate_path(p, 8);
  FilterOptions opt;
  opt.particles = 2000;
  for (const auto& pt : run_filter(log, p, opt, 9)) {
    EXPECT_GE(pt.pi2_left, pt.pi_left * pt.pi_left);
    EXPECT_GE(pt.pi2_right, pt.pi_right * pt.pi_right);
  }
  EXPECT_THROW(filter_moment(filter_init(p, 2, 1), -1), std::invalid_argument);
}

TEST(FilterResample, EqualWeightsAreLeftAlone) {
  const ModelParams p;
  auto st = filter_init(p, 100, 10);
  const auto before = st.anchor_lambda;
  EXPECT_FALSE(filter_resample(st, 0.5));
  EXPECT_EQ(st.anchor_lambda, before);
  EXPECT_THROW(filter_resample(st, 0.0), std::invalid_argument);
  EXPECT_THROW(filter_resample(st, 1.5), std::invalid_argument);
}

TEST(FilterResample, DegenerateWeightCopiesTheParticle) {
  ModelParams p = no_shock_params();
  auto st = filter_init(p, 5, 11);
  st.anchor_lambda = {1.0, 2.0, 3.0, 4.0, 5.0};
  st.anchor_logw = {-1e300, -1e300, 0.0, -1e300, -1e300};
  detail::refresh(st);
  EXPECT_TRUE(filter_resample(st, 0.5));
  for (double l : st.anchor_lambda) EXPECT_EQ(l, 3.0);
  for (double w : st.weights) EXPECT_NEAR(w, 0.2, 1e-15);
}

TEST(FilterResample, UnbiasedOverRepetitions) {
  const auto p = no_shock_params();
  // A skewed weighted cloud; resampling must preserve pi(lambda) in expectation.
  std::vector<double> diff;
  for (int rep = 0; rep < 1000; ++rep) {
    auto st = filter_init(p, 64, derive_seed(12, rep));
    for (std::size_t i = 0; i < st.size(); ++i) {
      st.anchor_lambda[i] = 0.5 + 0.05 * i;
      st.anchor_logw[i] = -0.08 * static_cast<double>(i);
    }
    detail::refresh(st);
    const double before = filter_moment(st, 1);
    filter_resample(st, 1.0);
    diff.push_back(filter_moment(st, 1) - before);
  }
  double s = 0.0, s2 = 0.0;
  for (double d : diff) {
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(diff.size());
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / (n - 1.0));
  EXPECT_LE(std::abs(mean), 3.0 * se);
}

TEST(RunFilter, NoClaimsNoShocksIsPureDecay) {
  const auto p = no_shock_params();
  FilterOptions opt;
  opt.particles = 20;
  for (const auto& pt : run_filter(empty_log(p), p, opt, 13))
    EXPECT_NEAR(pt.pi_right, p.beta_rev + (p.lambda0 - p.beta_rev) * std::exp(-p.alpha * pt.t), 1e-12);
}

TEST(RunFilter, IgnoresShockEvents) {
  const ModelParams p;
  const auto log = simulate_path(p, 14);
  FilterOptions opt;
  opt.particles = 300;
  const auto a = run_filter(log, p, opt, 15);
  const auto b = run_filter(log.claims_only(), p, opt, 15);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].pi_right, b[k].pi_right);
}

TEST(RunFilter, ClaimKnotsCarryLeftAndRightLimits) {
  const ModelParams p;
  const auto log = claims_at(p, {{0.303, 0.5}, {0.7071, 0.9}});
  FilterOptions opt;
  opt.particles = 500;
  const auto traj = run_filter(log, p, opt, 16);
  int claims = 0;
  for (const auto& pt : traj)
    if (pt.claim) {
      ++claims;
      // The first update is a pure shift while the law is close to Dirac.
      EXPECT_GT(pt.pi_right, pt.pi_left);
    }
  EXPECT_EQ(claims, 2);
  EXPECT_EQ(traj.front().t, 0.0);
  EXPECT_EQ(traj.back().t, p.horizon);
}

TEST(RunFilter, NormalizedAndZakaiAgreeOnSharedRandomness) {
  const ModelParams p;
  const auto log = simulate_path(p, 17);
  FilterOptions a;
  a.particles = 1000;
  FilterOptions b = a;
  b.mode = FilterMode::zakai;
  const auto ta = run_filter(log, p, a, 18), tb = run_filter(log, p, b, 18);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t k = 0; k < ta.size(); ++k) {
    EXPECT_NEAR(ta[k].pi_right, tb[k].pi_right, 1e-12 * ta[k].pi_right);
    EXPECT_NEAR(ta[k].log_norm, tb[k].log_norm, 1e-12 * (1.0 + std::abs(ta[k].log_norm)));
  }
}

TEST(RunFilter, AgreesWithNestedZakaiOracleBetweenClaims) {
  const ModelParams p;
  // Exact particle snapshot right after the last claim.
  auto st2 = filter_init(p, 20000, 20);
  for (const auto& [t, z] : std::vector<std::pair<double, double>>{{0.2, 0.6}, {0.45, 0.4}}) {
    filter_propagate(st2, t - st2.t_current);
    filter_update_claim(st2, z);
  }
  oracle::ParticleSnapshot snap{st2.t_current, st2.anchor_lambda, st2.weights};
  const auto ref = oracle::nested_zakai_oracle(snap, 1, 0.8, p, 200000, 21);
  // Filter mean at 0.8 with its own particle error, estimated from 10 seeds.
  std::vector<double> est;
  for (int s = 0; s < 10; ++s) {
    auto st3 = filter_init(p, 20000, derive_seed(22, s));
    for (const auto& [t, z] : std::vector<std::pair<double, double>>{{0.2, 0.6}, {0.45, 0.4}}) {
      filter_propagate(st3, t - st3.t_current);
      filter_update_claim(st3, z);
    }
    filter_propagate(st3, 0.8 - st3.t_current);
    est.push_back(filter_moment(st3, 1));
  }
  double s1 = 0.0, s2 = 0.0;
  for (double e : est) {
    s1 += e;
    s2 += e * e;
  }
  const double m = s1 / 10.0, se = std::sqrt(std::max(0.0, s2 / 10.0 - m * m) / 9.0);
  EXPECT_NEAR(m, ref.value, 3.0 * std::hypot(se, ref.se) + 1e-12);
}

TEST(NestedZakaiOracle, DeterministicWithoutShocks) {
  const auto p = no_shock_params();
  oracle::ParticleSnapshot snap{0.0, {p.lambda0}, {1.0}};
  const auto est = oracle::nested_zakai_oracle(snap, 1, 0.5, p, 100, 1);
  EXPECT_NEAR(est.value, p.beta_rev + (p.lambda0 - p.beta_rev) * std::exp(-p.alpha * 0.5), 1e-13);
  EXPECT_NEAR(oracle::nested_zakai_oracle(snap, 0, 0.5, p, 100, 1).value, 1.0, 1e-15);
  EXPECT_THROW(oracle::nested_zakai_oracle(snap, 1, 0.5, p, 99, 1), std::invalid_argument);
}

TEST(DominatingProcess, NoClaimsFormula) {
  const ModelParams p;
  FilterOptions opt;
  opt.particles = 100;
  auto traj = run_filter(empty_log(p), p, opt, 23);
  const double bt = p.beta_tilde();
  for (const auto& d : dominating_trajectory(traj, p))
    EXPECT_NEAR(d.y_left, bt + (p.lambda0 - bt) * std::exp(-p.alpha * d.t), 1e-12);
}

TEST(DominatingProcess, DominatesTheFilterOnRandomLogs) {
  const ModelParams p;
  FilterOptions opt;
  opt.particles = 300;
  for (std::uint64_t i = 0; i < 100; ++i) {
    auto traj = run_filter(simulate_path(p, derive_seed(24, i)), p, opt, derive_seed(25, i));
    const auto y = dominating_trajectory(traj, p);
    for (std::size_t k = 0; k < traj.size(); ++k) {
      ASSERT_LE(traj[k].pi_left, y[k].y_left + 1e-9);
      ASSERT_LE(traj[k].pi_right, y[k].y_right + 1e-9);
    }
  }
}

TEST(DominatingProcess, NoShocksReducesToUnconditionalDecay) {
  auto p = no_shock_params();
  EXPECT_EQ(p.beta_tilde(), p.beta_rev);
}

TEST(MomentFilter, DiracWithoutShocksStaysDirac) {
  const auto p = no_shock_params();
  const auto mt = moment_filter_run(empty_log(p), p, 3, MomentClosure::truncate);
  for (const auto& pt : mt.points) {
    const double m = p.beta_rev + (p.lambda0 - p.beta_rev) * std::exp(-p.alpha * pt.t);
    EXPECT_NEAR(pt.right[1], m, 1e-10);
    EXPECT_NEAR(pt.right[2] - pt.right[1] * pt.right[1], 0.0, 1e-10);
  }
  EXPECT_THROW(moment_filter_run(empty_log(p), p, 1, MomentClosure::truncate), std::invalid_argument);
}

TEST(MomentFilter, DiracJumpMatchesParticleUpdate) {
  const auto p = no_shock_params();
  const auto log = claims_at(p, {{0.3, 0.7}});
  const auto mt = moment_filter_run(log, p, 2, MomentClosure::truncate);
  FilterOptions opt;
  opt.particles = 10;
  const auto traj = run_filter(log, p, opt, 26);
  for (const auto& pt : mt.points) {
    if (!pt.claim) continue;
    for (const auto& fp : traj) {
      if (fp.claim) {
        EXPECT_NEAR(pt.right[1], fp.pi_right, 1e-9);
      }
    }
  }
}

TEST(MomentFilter, SecondOrderTracksParticleFilter) {
  const ModelParams p;
  const auto log = simulate_path(p, 27);
  FilterOptions opt;
  opt.particles = 100000;
  const auto traj = run_filter(log, p, opt, 28);
  const auto mt = moment_filter_run(log, p, 2, MomentClosure::truncate);
  ASSERT_EQ(mt.points.size(), traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k)
    EXPECT_NEAR(mt.points[k].right[1], traj[k].pi_right, 0.05 * traj[k].pi_right) << "t = " << traj[k].t;
}
