#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "clusterre/bsde.hpp"
#include "clusterre/filter.hpp"
#include "clusterre/model.hpp"
#include "clusterre/oracle.hpp"
#include "clusterre/random.hpp"
#include "clusterre/simulator.hpp"
#include "clusterre/strategy.hpp"

// Property and oracle checks grouped by theme. Each check yields a verdict
// (name, lhs, rhs, se, pass); a suite passes when all its verdicts pass.
namespace clusterre::validation {

struct Verdict {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double se = 0.0;
  bool pass = false;
  std::string detail;
};

inline bool all_pass(const std::vector<Verdict>& v) {
  return std::all_of(v.begin(), v.end(), [](const Verdict& x) { return x.pass; });
}

// Sample sizes of the suites.
struct SuiteScale {
  std::size_t moment_paths = 100000;
  std::size_t girsanov_paths = 100000;
  std::size_t identity_paths = 100000;
  std::size_t filter_particles = 10000;
  std::size_t filter_paths = 200;
  int filter_steps = 100;
  std::size_t zakai_queries = 20;
  std::size_t zakai_inner = 20000;
  std::size_t bsde_paths = 10000;
  int bsde_steps = 50;
  int bsde_bins = 8;
  std::size_t bsde_particles = 500;
  int bsde_order = 16;
  std::size_t utility_paths = 10000;
  std::size_t strategy_states = 200;
  std::size_t grid_n = 10000;

  // A fast configuration for smoke runs; statistical checks stay honest
  // because their tolerances scale with the standard errors.
  static SuiteScale quick() {
    SuiteScale s;
    s.moment_paths = 20000;
    s.girsanov_paths = 20000;
    s.identity_paths = 20000;
    s.filter_particles = 2000;
    s.filter_paths = 50;
    s.zakai_queries = 5;
    s.zakai_inner = 5000;
    s.bsde_paths = 1000;
    s.bsde_steps = 20;
    s.bsde_particles = 200;
    s.utility_paths = 1000;
    s.strategy_states = 30;
    return s;
  }
};

namespace detail {

struct Moments {
  double mean = 0.0, se = 0.0;
};

inline Moments sample_moments(const std::vector<double>& v) {
  const std::size_t n = v.size();
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / n;
  double q = 0.0;
  for (double x : v) q += (x - m) * (x - m);
  return {m, n > 1 ? std::sqrt(q / (n - 1) / n) : 0.0};
}

inline Verdict within_3se(std::string name, double lhs, double rhs, double se) {
  Verdict v{std::move(name), lhs, rhs, se, std::abs(lhs - rhs) <= 3.0 * se, ""};
  return v;
}

}  // namespace detail

// ------------------------------------------------------------ kinematics

inline std::vector<Verdict> kinematics_suite(const ModelParams& p, std::uint64_t seed) {
  std::vector<Verdict> out;
  Rng rng(derive_seed(seed, 1));
  double semigroup = 0.0, fixed = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double lam = rng.uniform(0.01, 10.0), h1 = rng.uniform(0.0, 2.0), h2 = rng.uniform(0.0, 2.0);
    const double once = intensity_decay({lam, 0.0}, h1 + h2, p);
    const double twice = intensity_decay({intensity_decay({lam, 0.0}, h1, p), 0.0}, h2, p);
    semigroup = std::max(semigroup, std::abs(once - twice) / std::max(1.0, std::abs(once)));
    fixed = std::max(fixed, std::abs(intensity_decay({p.beta_rev, 0.0}, h1, p) - p.beta_rev));
  }
  out.push_back({"decay_semigroup", semigroup, 1e-12, 0.0, semigroup <= 1e-12, "max relative deviation"});
  out.push_back({"decay_fixed_point", fixed, 1e-12, 0.0, fixed <= 1e-12, "lambda = beta is invariant"});
  EventLog empty{p.lambda0, p.horizon, {}};
  double dev = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double t = p.horizon * k / 100;
    const double expect = p.beta_rev + (p.lambda0 - p.beta_rev) * std::exp(-p.alpha * t);
    dev = std::max(dev, std::abs(lambda_at(empty, p, t) - expect));
  }
  out.push_back({"no_event_decay_curve", dev, 0.0, 0.0, dev == 0.0, "max |lambda_t - curve| without events"});
  return out;
}

// --------------------------------------------------------------- moments

inline std::vector<Verdict> moments_suite(const ModelParams& p, std::uint64_t seed, const SuiteScale& sc) {
  const auto logs = batch_simulate(sc.moment_paths, p, derive_seed(seed, 2));
  std::vector<double> l1(logs.size()), l2(logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const double l = lambda_at(logs[i], p, p.horizon);
    l1[i] = l;
    l2[i] = l * l;
  }
  const auto m1 = detail::sample_moments(l1), m2 = detail::sample_moments(l2);
  const auto o1 = oracle::moment_ode_oracle(p, {p.horizon});
  const auto o2 = oracle::second_moment_ode_oracle(p, {p.horizon});
  return {detail::within_3se("mean_intensity_at_T", m1.mean, o1.m.back(), m1.se),
          detail::within_3se("second_moment_intensity_at_T", m2.mean, o2.m2.back(), m2.se)};
}

// -------------------------------------------------------------- girsanov

inline std::vector<Verdict> girsanov_suite(const ModelParams& p, std::uint64_t seed, const SuiteScale& sc) {
  std::vector<Verdict> out;
  const double T = p.horizon;
  int h = 0;
  for (double frac : {0.25, 0.5, 1.0}) {
    ModelParams q = p;
    q.horizon = frac * T;
    std::vector<double> lik(sc.girsanov_paths);
    const std::uint64_t s = derive_seed(seed, 30 + h++);
    for (std::size_t i = 0; i < lik.size(); ++i) lik[i] = simulate_under_q(q, derive_seed(s, i)).likelihood();
    const auto m = detail::sample_moments(lik);
    std::ostringstream name;
    name << "q_density_mean_T" << q.horizon;
    out.push_back(detail::within_3se(name.str(), m.mean, 1.0, m.se));
  }
  // Weighted Q expectations against direct P expectations at the horizon.
  const std::size_t n = sc.girsanov_paths;
  std::vector<double> qn(n), qc(n), qz(n), pn(n), pc(n), pz(n);
  const std::uint64_t sq = derive_seed(seed, 40);
  for (std::size_t i = 0; i < n; ++i) {
    const QPath path = simulate_under_q(p, derive_seed(sq, i));
    const double l = path.likelihood();
    const double nc = static_cast<double>(path.log.claim_count());
    qn[i] = l * nc;
    qc[i] = l * path.log.total_claims();
    qz[i] = l * (nc == 0.0 ? 1.0 : 0.0);
  }
  const auto logs = batch_simulate(n, p, derive_seed(seed, 41));
  for (std::size_t i = 0; i < n; ++i) {
    const double nc = static_cast<double>(logs[i].claim_count());
    pn[i] = nc;
    pc[i] = logs[i].total_claims();
    pz[i] = nc == 0.0 ? 1.0 : 0.0;
  }
  auto pair = [&](const char* name, const std::vector<double>& a, const std::vector<double>& b) {
    const auto ma = detail::sample_moments(a), mb = detail::sample_moments(b);
    out.push_back(detail::within_3se(name, ma.mean, mb.mean, std::hypot(ma.se, mb.se)));
  };
  pair("weighted_q_vs_p_claim_count", qn, pn);
  pair("weighted_q_vs_p_total_claims", qc, pc);
  pair("weighted_q_vs_p_no_claim_probability", qz, pz);
  // Exponential identity for simple integrands.
  const double median = p.claim_dist.quantile(0.5);
  const std::vector<std::pair<const char*, oracle::SimpleIntegrand>> cases = {
      {"exponential_identity_unit", {1.0, 0.0, T, -1.0, 0}},
      {"exponential_identity_upper_half_marks", {0.5, 0.0, T, median, 0}},
      {"exponential_identity_predictable", {0.5, 0.5 * T, T, median, 1}},
  };
  int k = 0;
  for (const auto& [name, integrand] : cases) {
    const auto v = oracle::exponential_identity_check(integrand, p, sc.identity_paths, derive_seed(seed, 50 + k++));
    out.push_back({name, v.lhs, v.rhs, std::hypot(v.lhs_se, v.rhs_se), v.pass, v.rhs_exact ? "exact rhs" : "mc rhs"});
  }
  return out;
}

// ---------------------------------------------------------------- filter

inline std::vector<Verdict> filter_suite(const ModelParams& p, std::uint64_t seed, const SuiteScale& sc) {
  std::vector<Verdict> out;
  const double T = p.horizon;
  auto shot = make_shot_noise_law(p);
  FilterOptions fo;
  fo.particles = sc.filter_particles;
  fo.report_steps = sc.filter_steps;
  const std::uint64_t ssim = derive_seed(seed, 60), sfil = derive_seed(seed, 61);
  const std::vector<double> probe = {0.25 * T, 0.5 * T, T};
  std::vector<std::vector<double>> err(probe.size());
  double dom = -std::numeric_limits<double>::infinity(), jensen = std::numeric_limits<double>::infinity();
  std::vector<EventLog> logs;
  for (std::size_t i = 0; i < sc.filter_paths; ++i) {
    const EventLog log = simulate_path(p, derive_seed(ssim, i));
    FilterTrajectory traj = run_filter(log, p, fo, derive_seed(sfil, i), shot);
    const auto y = dominating_trajectory(traj, p);
    for (std::size_t k = 0; k < traj.size(); ++k) {
      dom = std::max({dom, traj[k].pi_left - y[k].y_left, traj[k].pi_right - y[k].y_right});
      jensen = std::min({jensen, traj[k].pi2_left - traj[k].pi_left * traj[k].pi_left,
                         traj[k].pi2_right - traj[k].pi_right * traj[k].pi_right});
    }
    for (std::size_t j = 0; j < probe.size(); ++j) {
      const auto it = std::find_if(traj.begin(), traj.end(), [&](const FilterPoint& pt) {
        return std::abs(pt.t - probe[j]) <= 1e-12 * T;
      });
      if (it != traj.end()) err[j].push_back(it->pi_left - lambda_at(log, p, probe[j]));
    }
    logs.push_back(log);
  }
  for (std::size_t j = 0; j < probe.size(); ++j) {
    const auto m = detail::sample_moments(err[j]);
    std::ostringstream name;
    name << "filter_unbiased_t" << probe[j];
    out.push_back(detail::within_3se(name.str(), m.mean, 0.0, m.se));
  }
  out.push_back({"filter_dominated", dom, 1e-9, 0.0, dom <= 1e-9, "max(pi - Y) over all knots"});
  out.push_back({"filter_jensen", jensen, 0.0, 0.0, jensen >= -1e-12, "min(pi(l^2) - pi(l)^2) over all knots"});

  // Normalized and unnormalized runs on shared randomness.
  double ks = 0.0;
  const std::size_t ks_paths = std::min<std::size_t>(20, logs.size());
  for (std::size_t i = 0; i < ks_paths; ++i) {
    FilterOptions fz = fo;
    fz.mode = FilterMode::zakai;
    const auto a = run_filter(logs[i], p, fo, derive_seed(sfil, i), shot);
    const auto b = run_filter(logs[i], p, fz, derive_seed(sfil, i), shot);
    for (std::size_t k = 0; k < a.size(); ++k) {
      ks = std::max({ks, std::abs(a[k].pi_left - b[k].pi_left) / (1.0 + std::abs(a[k].pi_left)),
                     std::abs(a[k].pi_right - b[k].pi_right) / (1.0 + std::abs(a[k].pi_right)),
                     std::abs(a[k].pi2_right - b[k].pi2_right) / (1.0 + std::abs(a[k].pi2_right))});
    }
  }
  out.push_back({"kallianpur_striebel", ks, 1e-12, 0.0, ks <= 1e-12, "normalized vs unnormalized filter"});

  // Between-claim queries against the nested inner Monte Carlo.
  Rng pick(derive_seed(seed, 62));
  std::size_t done = 0;
  for (std::size_t i = 0; i < logs.size() && done < sc.zakai_queries; ++i) {
    const auto claims = logs[i].claims_only().events;
    if (claims.empty()) continue;
    const std::size_t j = std::min(claims.size() - 1, static_cast<std::size_t>(pick.uniform() * claims.size()));
    FilterState st = filter_init(p, sc.filter_particles, derive_seed(sfil, 1000 + i), FilterMode::normalized, 0.0, shot);
    for (std::size_t c = 0; c <= j; ++c) {
      filter_propagate(st, claims[c].time - st.t_current);
      filter_update_claim(st, claims[c].mark);
      filter_resample(st, fo.resample_threshold, fo.scheme);
    }
    const double next = j + 1 < claims.size() ? claims[j + 1].time : T;
    const double tq = claims[j].time + pick.uniform() * (next - claims[j].time);
    const oracle::ParticleSnapshot snap{st.t_current, st.anchor_lambda, st.weights};
    filter_propagate(st, tq - st.t_current);
    const double pi = filter_moment(st, 1);
    const auto est = oracle::nested_zakai_oracle(snap, 1, tq, p, sc.zakai_inner, derive_seed(seed, 2000 + i));
    std::ostringstream name;
    name << "nested_zakai_query_" << done;
    out.push_back(detail::within_3se(name.str(), pi, est.value, est.se));
    ++done;
  }

  // Shot-noise reduction: jump update pi(f) = pi-(lambda f) / pi-(lambda).
  {
    ModelParams s = p;
    s.beta_rev = 0.0;
    s.excitation = {ExcitationKind::proportional, 0.0};
    double dev = 0.0, dev_norm = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      const auto claims = simulate_path(s, derive_seed(seed, 3000 + i)).claims_only().events;
      FilterState st = filter_init(s, 2000, derive_seed(seed, 4000 + i));
      for (const auto& e : claims) {
        filter_propagate(st, e.time - st.t_current);
        filter_materialize(st);
        const double m1 = filter_moment(st, 1), m2 = filter_moment(st, 2), m3 = filter_moment(st, 3);
        const double before = st.log_norm;
        filter_update_claim(st, e.mark);
        dev = std::max(dev, std::abs(filter_moment(st, 1) - m2 / m1) / (m2 / m1));
        dev = std::max(dev, std::abs(filter_moment(st, 2) - m3 / m1) / (m3 / m1));
        dev_norm = std::max(dev_norm, std::abs((st.log_norm - before) - std::log(m1)));
        filter_resample(st, 0.5);
      }
    }
    out.push_back({"shot_noise_jump_update", dev, 1e-12, 0.0, dev <= 1e-12, "relative deviation from pi-(l f)/pi-(l)"});
    out.push_back({"shot_noise_unnormalized_jump", dev_norm, 1e-12, 0.0, dev_norm <= 1e-12,
                   "log sigma jump vs log pi-(lambda)"});
  }
  return out;
}

// ------------------------------------------------------------------ bsde

struct BsdeReport {
  double y0 = 0.0, y0_se = 0.0;
  double y0_fine = 0.0;
  double y0_corner = 0.0, y0_corner_se = 0.0;
  MartingaleBounds bounds;
  std::vector<double> constant_u;
  std::vector<oracle::UtilityEstimate> utility;
};

inline std::vector<Verdict> bsde_suite(const ModelParams& p, std::uint64_t seed, const SuiteScale& sc,
                                       BsdeReport* report = nullptr) {
  std::vector<Verdict> out;
  const Contract c = Contract::proportional();
  BsdeEnsembleOptions eo;
  eo.particles = sc.bsde_particles;
  const BsdeGrid fine = build_ensemble(sc.bsde_paths, 2 * sc.bsde_steps, p, derive_seed(seed, 70), eo);
  const BsdeGrid grid = coarsen(fine, 2);
  BsdeOptions bo;
  bo.bins = sc.bsde_bins;
  bo.quadrature_order = sc.bsde_order;
  const BsdeSolution sol = solve_backward(grid, c, p, bo);
  out.push_back({"terminal_anchoring", sol.terminal_gap, 0.0, 0.0, sol.terminal_gap == 0.0, "max |Y_T - xi|"});
  out.push_back({"driver_nonnegative", sol.min_driver, -1e-10, 0.0, sol.min_driver >= -1e-10, "min esssup f~"});
  const auto mb = martingale_bounds(grid, p);
  {
    const double lo = mb.m1 - 3.0 * std::hypot(mb.m1_se, sol.y0_se);
    const double hi = mb.m2 + 3.0 * std::hypot(mb.m2_se, sol.y0_se);
    Verdict v{"martingale_bracket", sol.y0, mb.m1, sol.y0_se, sol.y0 >= lo && sol.y0 <= hi, ""};
    std::ostringstream d;
    d << "M1 = " << mb.m1 << ", M2 = " << mb.m2 << " +- " << mb.m2_se;
    v.detail = d.str();
    out.push_back(v);
  }
  const std::vector<double> us = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<FeedbackStrategy> strategies;
  for (double u : us) strategies.push_back([u](const FilterSummary&) { return u; });
  oracle::UtilityOptions uo;
  uo.particles = sc.bsde_particles;
  uo.report_steps = 2 * sc.bsde_steps;
  const auto util = oracle::utility_mc(strategies, c, p, sc.utility_paths, derive_seed(seed, 71), uo);
  for (std::size_t k = 0; k < us.size(); ++k) {
    const double se = std::hypot(util[k].se, sol.y0_se);
    std::ostringstream name;
    name << "suboptimality_dominance_u" << us[k];
    out.push_back({name.str(), util[k].value, sol.y0, se, util[k].value >= sol.y0 - 3.0 * se, "utility_mc(u) >= Y0"});
  }
  // Expensive reinsurance: null reinsurance (u = 1) is the best constant.
  ModelParams pc = p;
  pc.safety_loading = 50.0;
  const BsdeSolution corner = solve_backward(grid, c, pc, bo);
  {
    const double se = std::hypot(util.back().se, corner.y0_se);
    out.push_back({"corner_equality_gap", corner.y0, util.back().value, se,
                   std::abs(corner.y0 - util.back().value) < 3.0 * se, "theta_R = 50, best constant u = 1"});
  }
  const BsdeSolution half = solve_backward(fine, c, p, bo);
  out.push_back({"self_convergence", sol.y0, half.y0, sol.y0_se, std::abs(sol.y0 - half.y0) < 3.0 * sol.y0_se,
                 "Y0(dt) vs Y0(dt/2)"});
  if (report) {
    report->y0 = sol.y0;
    report->y0_se = sol.y0_se;
    report->y0_fine = half.y0;
    report->y0_corner = corner.y0;
    report->y0_corner_se = corner.y0_se;
    report->bounds = mb;
    report->constant_u = us;
    report->utility = util;
  }
  return out;
}

// -------------------------------------------------------------- strategy

namespace detail {

struct RandomState {
  StrategyState s;
  double theta_r = 0.3;
};

// Theta close to the value-process jump w (e^{a z} - 1), scaled by `factor`.
inline BinnedTheta natural_theta(const ModelParams& p, double t, double w, int bins, double factor) {
  BinnedTheta th;
  const double a = p.effective_aversion(t);
  for (int j = 0; j < bins; ++j) {
    const double z = p.claim_dist.quantile((j + 0.5) / bins);
    th.values.push_back(factor * w * std::expm1(a * z));
  }
  return th;
}

inline double comparable_u(double u, const StrategyEvaluator& ev) {
  if (ev.contract().kind == ContractKind::proportional) return std::min(u, 1.0);
  return std::min(u, ev.search_hi());
}

}  // namespace detail

inline std::vector<Contract> strategy_contracts(const ModelParams& p) {
  return {Contract::proportional(), Contract::excess_of_loss(),
          Contract::limited_stop_loss(0.3 * (p.claim_dist.bounded() ? p.claim_dist.support_cap() : p.claim_dist.mean()))};
}

inline std::vector<Verdict> strategy_suite(const ModelParams& p, std::uint64_t seed, const SuiteScale& sc) {
  std::vector<Verdict> out;
  const int bins = sc.bsde_bins;
  const int order = 64;
  double foc_max = 0.0;
  std::size_t interior = 0;
  for (const Contract& c : strategy_contracts(p)) {
    const std::string tag = to_string(c.kind);
    Rng rng(derive_seed(seed, 80 + static_cast<int>(c.kind)));
    double dv = 0.0, du = 0.0, inv = 0.0;
    std::size_t fallbacks = 0;
    for (std::size_t k = 0; k < sc.strategy_states; ++k) {
      ModelParams q = p;
      q.safety_loading = rng.uniform(0.05, 1.5);
      StrategyState s;
      s.t = rng.uniform(0.0, p.horizon);
      s.w = rng.uniform(0.05, 2.0);
      s.pi_lambda = rng.uniform(0.3, 3.0);
      for (int j = 0; j < bins; ++j) s.theta.values.push_back(s.w * rng.uniform(-0.5, 2.5));
      const StrategyEvaluator ev(q, c, bins, order);
      const auto dec = ev.maximize(s);
      if (!dec.certificate_ok) ++fallbacks;
      const auto g = oracle::grid_maximizer(s.t, s.w, s.theta.values, s.pi_lambda, c, q, sc.grid_n);
      dv = std::max(dv, std::abs(dec.ftilde_at_opt - g.value_refined));
      du = std::max(du, std::abs(detail::comparable_u(dec.u_star, ev) - detail::comparable_u(g.u, ev)));
      if (dec.regime == Regime::interior) {
        foc_max = std::max(foc_max, std::abs(dec.foc_residual));
        ++interior;
      }
      for (double scale : {0.13, 7.3}) {
        StrategyState t = s;
        t.w *= scale;
        for (auto& v : t.theta.values) v *= scale;
        const auto d2 = ev.maximize(t);
        inv = std::max(inv, std::abs(detail::comparable_u(d2.u_star, ev) - detail::comparable_u(dec.u_star, ev)));
      }
    }
    out.push_back({"grid_oracle_value_" + tag, dv, 1e-8, 0.0, dv <= 1e-8,
                   "max |f~(u*) - grid max|, " + std::to_string(fallbacks) + " dense-grid fallbacks"});
    out.push_back({"grid_oracle_control_" + tag, du, 1e-4, 0.0, du <= 1e-4, "max |u* - grid argmax|"});
    out.push_back({"argmax_scale_invariance_" + tag, inv, 1e-6, 0.0, inv <= 1e-6, "max |u*(k w, k theta) - u*|"});
  }

  // Regime flips under a theta_R sweep across the computed thresholds.
  {
    Rng rng(derive_seed(seed, 90));
    std::size_t tested = 0, wrong = 0;
    const auto contracts = strategy_contracts(p);
    for (std::size_t k = 0; k < sc.strategy_states; ++k) {
      StrategyState s;
      s.t = rng.uniform(0.0, p.horizon);
      s.w = rng.uniform(0.05, 2.0);
      s.pi_lambda = rng.uniform(0.3, 3.0);
      s.theta = detail::natural_theta(p, s.t, s.w, bins, rng.uniform(1.2, 3.0));
      for (const Contract& c : contracts) {
        const StrategyEvaluator base(p, c, bins, order);
        const auto th = base.thresholds(s);
        auto regime_at = [&](double theta_r) {
          ModelParams q = p;
          q.safety_loading = theta_r;
          const StrategyEvaluator ev(q, c, bins, order);
          const auto d = ev.maximize(s);
          if (d.regime == Regime::interior) {
            foc_max = std::max(foc_max, std::abs(d.foc_residual));
            ++interior;
          }
          return d.regime;
        };
        const Regime low = c.kind == ContractKind::limited_stop_loss ? Regime::max_coverage : Regime::full;
        if (th[0] - 1e-6 > 0.0) {
          ++tested;
          if (regime_at(th[0] - 1e-6) != low) ++wrong;
          if (regime_at(th[0] + 1e-6) != Regime::interior) ++wrong;
        }
        if (c.kind == ContractKind::proportional && th[1] - 1e-6 > 0.0) {
          ++tested;
          if (regime_at(th[1] - 1e-6) != Regime::interior) ++wrong;
          if (regime_at(th[1] + 1e-6) != Regime::null) ++wrong;
        }
      }
    }
    out.push_back({"regime_flip_at_thresholds", static_cast<double>(wrong), 0.0, 0.0, wrong == 0 && tested > 0,
                   std::to_string(tested) + " threshold crossings tested"});
  }
  out.push_back({"foc_residual_interior", foc_max, 1e-8, 0.0, foc_max <= 1e-8,
                 std::to_string(interior) + " interior optima"});

  // Excess-of-loss never returns null reinsurance on value-process-like states.
  {
    Rng rng(derive_seed(seed, 91));
    std::size_t nulls = 0;
    const StrategyEvaluator ev(p, Contract::excess_of_loss(), bins, order);
    for (std::size_t k = 0; k < sc.strategy_states; ++k) {
      StrategyState s;
      s.t = rng.uniform(0.0, p.horizon);
      s.w = rng.uniform(0.05, 2.0);
      s.pi_lambda = rng.uniform(0.3, 3.0);
      s.theta = detail::natural_theta(p, s.t, s.w, bins, rng.uniform(1.0, 3.0));
      const auto d = ev.maximize(s);
      if (d.regime == Regime::null || !std::isfinite(d.u_star)) ++nulls;
    }
    out.push_back({"excess_of_loss_never_null", static_cast<double>(nulls), 0.0, 0.0, nulls == 0,
                   "null decisions among natural states"});
  }
  return out;
}

// ------------------------------------------------------- reproducibility

// In-process determinism: the same seed gives byte-identical serialisations.
inline std::vector<Verdict> reproducibility_suite(const ModelParams& p, std::uint64_t seed) {
  auto render = [&]() {
    std::ostringstream os;
    for (const auto& log : batch_simulate(20, p, seed)) write_event_log_csv(os, log, "-");
    FilterOptions fo;
    fo.particles = 500;
    const auto log = simulate_path(p, seed);
    for (const auto& pt : run_filter(log, p, fo, derive_seed(seed, 1)))
      os << format_real(pt.t) << ',' << format_real(pt.pi_left) << ',' << format_real(pt.pi_right) << '\n';
    return os.str();
  };
  const std::string a = render(), b = render();
  return {{"same_seed_identical_output", static_cast<double>(a.size()), static_cast<double>(b.size()), 0.0, a == b,
           "serialised ensemble and filter trajectory"}};
}

}  // namespace clusterre::validation
