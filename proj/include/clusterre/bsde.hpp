#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterre/filter.hpp"
#include "clusterre/model.hpp"
#include "clusterre/random.hpp"
#include "clusterre/simulator.hpp"
#include "clusterre/strategy.hpp"

namespace clusterre {

// Exponent up to which exponential moments of the claims are needed by the
// value-process experiments: E[xi^2] and E[exp(2 eta e^{rT} C_T)].
inline double bsde_required_exponent(const ModelParams& p) { return 2.0 * p.eta * std::exp(p.rate_r * p.horizon); }

// One simulated path seen through the filter on the time grid.
struct BsdePath {
  std::vector<double> pi;          // pi_{t_k-}(lambda), k = 0..N
  std::vector<double> pi2;         // pi_{t_k-}(lambda^2)
  std::vector<double> claim_time;  // observed claims
  std::vector<double> claim_mark;
  double xi = 0.0;                 // exp(-eta X^N_T)
  double total_claims = 0.0;       // C_T
};

struct BsdeGrid {
  ModelParams params;
  std::vector<double> times;  // t_0 = 0 < ... < t_N = T
  std::vector<BsdePath> paths;
  std::uint64_t seed = 0;

  int steps() const { return static_cast<int>(times.size()) - 1; }
  std::size_t size() const { return paths.size(); }

  // Discounted null-reinsurance wealth Xbar^N at grid time t_k on path i.
  double discounted_wealth(std::size_t i, int k) const {
    const double t = times[k];
    const double r = params.rate_r;
    double x = params.initial_capital + params.insurance_premium_rate * (r == 0.0 ? t : -std::expm1(-r * t) / r);
    const auto& p = paths[i];
    for (std::size_t j = 0; j < p.claim_time.size() && p.claim_time[j] <= t; ++j)
      x -= std::exp(-r * p.claim_time[j]) * p.claim_mark[j];
    return x;
  }
};

struct BsdeEnsembleOptions {
  std::size_t particles = 500;
  double resample_threshold = 0.5;
  ResampleScheme scheme = ResampleScheme::systematic;
  double initial_spread = 0.0;
};

// Simulates n hidden/observed pairs, filters each observed history and
// stores the filter summaries at the grid times plus xi.
// Path i uses the simulator seed derive_seed(seed, i) (the same stream as
// batch_simulate) and the filter seed derive_seed(derive_seed(seed, i), 1).
inline BsdeGrid build_ensemble(std::size_t n_paths, int steps, const ModelParams& p, std::uint64_t seed,
                               const BsdeEnsembleOptions& opt = {}) {
  if (n_paths == 0) throw std::invalid_argument("build_ensemble: need at least one path");
  if (steps < 1) throw std::invalid_argument("build_ensemble: need at least one time step");
  p.validate();
  const auto rep = validate_assumptions(p, bsde_required_exponent(p));
  if (!rep.all_pass()) {
    for (const auto& c : rep.checks)
      if (!c.pass) throw std::invalid_argument("build_ensemble: " + c.name + ": " + c.detail);
  }
  BsdeGrid g;
  g.params = p;
  g.seed = seed;
  g.times.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) g.times[k] = k == steps ? p.horizon : p.horizon * k / steps;
  g.paths.resize(n_paths);
  auto shot = make_shot_noise_law(p);
  FilterOptions fo;
  fo.particles = opt.particles;
  fo.report_steps = steps;
  fo.resample_threshold = opt.resample_threshold;
  fo.scheme = opt.scheme;
  fo.initial_spread = opt.initial_spread;
  const double a_T = p.eta;
  for (std::size_t i = 0; i < n_paths; ++i) {
    const std::uint64_t ps = derive_seed(seed, i);
    const EventLog log = simulate_path(p, ps);
    const FilterTrajectory traj = run_filter(log, p, fo, derive_seed(ps, 1), shot);
    BsdePath& bp = g.paths[i];
    bp.pi.assign(steps + 1, 0.0);
    bp.pi2.assign(steps + 1, 0.0);
    int k = 0;
    for (const auto& pt : traj) {
      if (pt.claim) {
        bp.claim_time.push_back(pt.t);
        bp.claim_mark.push_back(pt.mark);
      }
      while (k <= steps && g.times[k] < pt.t) ++k;
      if (k <= steps && g.times[k] == pt.t) {
        bp.pi[k] = pt.pi_left;
        bp.pi2[k] = pt.pi2_left;
      }
    }
    bp.total_claims = log.total_claims();
    bp.xi = std::exp(-a_T * null_reinsurance_wealth(log, p));
  }
  return g;
}

// The same ensemble seen on a grid with `factor` times fewer steps.
inline BsdeGrid coarsen(const BsdeGrid& g, int factor) {
  if (factor < 1 || g.steps() % factor != 0) throw std::invalid_argument("coarsen: factor must divide the steps");
  BsdeGrid out;
  out.params = g.params;
  out.seed = g.seed;
  for (int k = 0; k <= g.steps(); k += factor) out.times.push_back(g.times[k]);
  out.paths.reserve(g.size());
  for (const auto& p : g.paths) {
    BsdePath q = p;
    q.pi.clear();
    q.pi2.clear();
    for (int k = 0; k <= g.steps(); k += factor) {
      q.pi.push_back(p.pi[k]);
      q.pi2.push_back(p.pi2[k]);
    }
    out.paths.push_back(std::move(q));
  }
  return out;
}

struct BsdeOptions {
  int bins = 8;
  int quadrature_order = 16;
  double y_floor = 1e-12;
  double max_condition = 1e10;
  double max_floor_fraction = 1e-3;
  bool keep_paths = true;  // store pathwise Y at every time
};

// Regression failure carrying the slice at which it happened.
class BsdeRegressionError : public std::runtime_error {
 public:
  BsdeRegressionError(int slice, double condition, const std::string& what)
      : std::runtime_error(what), slice_(slice), condition_(condition) {}
  int slice() const { return slice_; }
  double condition() const { return condition_; }

 private:
  int slice_;
  double condition_;
};

struct BsdeSliceDiagnostics {
  double t = 0.0;
  int features_used = 0;
  double condition = 1.0;
  double r2 = 0.0;
  double y_mean = 0.0;
  double y_q05 = 0.0;
  double y_q95 = 0.0;
  double driver_mean = 0.0;
  double driver_min = 0.0;
  double u_mean = 0.0;
  std::vector<double> theta_mean;  // mean Theta per bin, in value-process units
};

struct BsdeSolution {
  std::vector<double> times;
  std::vector<std::vector<double>> y;  // y[k][i], empty when not kept
  std::vector<BsdeSliceDiagnostics> slices;
  double y0 = 0.0;
  double y0_se = 0.0;
  double min_driver = 0.0;       // smallest esssup f~ seen
  std::size_t floor_hits = 0;    // positivity-floor activations
  std::size_t fallback_count = 0;
  double terminal_gap = 0.0;     // max |Y_T - xi|
  int bins = 0;
};

namespace detail {

inline double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const std::size_t k = static_cast<std::size_t>(q * (v.size() - 1));
  std::nth_element(v.begin(), v.begin() + k, v.end());
  return v[k];
}

// Least-squares projection on standardized, non-constant features.
struct Regression {
  Eigen::MatrixXd design;  // centred/scaled columns plus intercept
  Eigen::JacobiSVD<Eigen::MatrixXd> svd;
  double condition = 1.0;
  int used = 0;
};

inline Regression make_regression(const std::vector<std::vector<double>>& columns, std::size_t n) {
  std::vector<Eigen::VectorXd> kept;
  for (const auto& c : columns) {
    Eigen::Map<const Eigen::VectorXd> v(c.data(), static_cast<Eigen::Index>(n));
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().mean());
    if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) continue;
    kept.push_back((v.array() - mean) / sd);
  }
  Regression r;
  r.used = static_cast<int>(kept.size()) + 1;
  r.design.resize(static_cast<Eigen::Index>(n), r.used);
  r.design.col(0).setOnes();
  for (std::size_t j = 0; j < kept.size(); ++j) r.design.col(static_cast<Eigen::Index>(j + 1)) = kept[j];
  r.svd.compute(r.design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = r.svd.singularValues();
  r.condition = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
  return r;
}

}  // namespace detail

// Rank of the per-slice feature matrix (1, pi, pi^2, pi(lambda^2)).
inline int feature_rank(const BsdeGrid& g, int k, double tol = 1e-10) {
  const std::size_t n = g.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 4);
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = g.paths[i].pi[k];
    x.row(static_cast<Eigen::Index>(i)) << 1.0, pi, pi * pi, g.paths[i].pi2[k];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  svd.setThreshold(tol);
  return static_cast<int>(svd.rank());
}

// -esssup_u f~(t, y, theta, u): the generator of the value-process equation.
inline double driver_value(double t, double y, const BinnedTheta& theta, double pi_lambda, const Contract& c,
                           const ModelParams& p, int order = 16) {
  if (!(y > 0.0)) throw std::invalid_argument("driver_value: y must be > 0");
  StrategyEvaluator ev(p, c, static_cast<int>(theta.values.size()), order);
  return -ev.maximize({t, y, theta, pi_lambda}).ftilde_at_opt;
}

// Explicit backward scheme with least-squares projections.
//
// On path i at slice k the H_{t_k}-measurable factor
// s_k = exp(-eta e^{rT} Xbar^N_{t_k}) is divided out of the value process, so
// that the remaining factor depends on the observation only through the
// filter features. With pathwise targets S (S = xi at T)
//   c_k     = E[S / s_k | features]                             (continuation)
//   Theta_j = E[S / s_k * #claims in (t_k, t_k+1] with mark in B_j | features]
//             / (pi_{t_k}(lambda) F1(B_j) dt) - c_k
//   d_k     = esssup_u f~(t_k, c_k, Theta, u)                   (f~ is 1-homogeneous)
//   S      <- S - dt s_k d_k,   Y_{t_k} = s_k (c_k - dt d_k).
// Y_0 is the sample mean of the pathwise targets at t_0.
inline BsdeSolution solve_backward(const BsdeGrid& g, const Contract& contract, const ModelParams& p,
                                   const BsdeOptions& opt = {}) {
  const std::size_t n = g.size();
  const int N = g.steps();
  const int m = opt.bins;
  if (n < 2) throw std::invalid_argument("solve_backward: need at least two paths");
  StrategyEvaluator ev(p, contract, m, opt.quadrature_order);
  const MarkIntegrator& integ = ev.integrator();
  const double aT = p.eta * std::exp(p.rate_r * p.horizon);

  BsdeSolution sol;
  sol.bins = m;
  sol.times = g.times;
  sol.slices.resize(N + 1);
  if (opt.keep_paths) sol.y.assign(N + 1, std::vector<double>(n, 0.0));

  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = g.paths[i].xi;
  if (opt.keep_paths) sol.y[N] = target;
  {
    auto& d = sol.slices[N];
    d.t = g.times[N];
    double s = 0.0;
    for (double v : target) s += v;
    d.y_mean = s / n;
    d.y_q05 = detail::quantile_of(target, 0.05);
    d.y_q95 = detail::quantile_of(target, 0.95);
    d.theta_mean.assign(m, 0.0);
  }
  sol.terminal_gap = 0.0;

  // Claim index of path i at or after a time (claims are sorted).
  std::vector<std::size_t> claim_cursor(n);
  for (std::size_t i = 0; i < n; ++i) claim_cursor[i] = g.paths[i].claim_time.size();

  std::vector<double> scale(n), yk(n, 0.0);
  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(n), m + 1);
  sol.min_driver = std::numeric_limits<double>::infinity();
  for (int k = N - 1; k >= 0; --k) {
    const double tk = g.times[k], tk1 = g.times[k + 1], dt = tk1 - tk;
    rhs.setZero();
    std::vector<std::size_t> bin_claims(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      scale[i] = std::exp(-aT * g.discounted_wealth(i, k));
      const double gi = target[i] / scale[i];
      rhs(static_cast<Eigen::Index>(i), 0) = gi;
      const auto& bp = g.paths[i];
      // Claims in (t_k, t_{k+1}]: step the cursor back over them.
      std::size_t c = claim_cursor[i];
      while (c > 0 && bp.claim_time[c - 1] > tk) {
        --c;
        if (bp.claim_time[c] <= tk1) {
          const int j = integ.bin_of(bp.claim_mark[c]);
          rhs(static_cast<Eigen::Index>(i), 1 + j) += gi;
          ++bin_claims[j];
        }
      }
      claim_cursor[i] = c;
    }
    std::vector<std::vector<double>> cols(3, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = g.paths[i].pi[k];
      cols[0][i] = pi;
      cols[1][i] = pi * pi;
      cols[2][i] = g.paths[i].pi2[k];
    }
    const auto reg = detail::make_regression(cols, n);
    auto& diag = sol.slices[k];
    diag.t = tk;
    diag.features_used = reg.used;
    diag.condition = reg.condition;
    if (!(reg.condition <= opt.max_condition))
      throw BsdeRegressionError(k, reg.condition,
                                "solve_backward: ill-conditioned regression at slice " + std::to_string(k) +
                                    " (t = " + std::to_string(tk) + ", condition number " +
                                    std::to_string(reg.condition) + ")");
    const Eigen::MatrixXd coef = reg.svd.solve(rhs);
    const Eigen::MatrixXd fit = reg.design * coef;
    {
      const Eigen::VectorXd y = rhs.col(0);
      const double mean = y.mean();
      const double sst = (y.array() - mean).square().sum();
      const double ssr = (y - fit.col(0)).squaredNorm();
      diag.r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    }
    diag.theta_mean.assign(m, 0.0);
    double drv_sum = 0.0, u_sum = 0.0;
    diag.driver_min = std::numeric_limits<double>::infinity();
    StrategyState st;
    st.t = tk;
    st.theta.values.assign(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      double c = fit(ii, 0);
      if (!(c > opt.y_floor)) {
        c = opt.y_floor;
        ++sol.floor_hits;
      }
      const double pi = g.paths[i].pi[k];
      const double comp = pi * dt / m;
      for (int j = 0; j < m; ++j) {
        // A bin without any claim in the slice carries no information on the
        // jump; it is set to zero rather than to the degenerate -c.
        st.theta.values[j] = bin_claims[j] > 0 ? fit(ii, 1 + j) / comp - c : 0.0;
        diag.theta_mean[j] += scale[i] * st.theta.values[j];
      }
      st.w = c;
      st.pi_lambda = pi;
      const StrategyDecision dec = ev.maximize(st);
      if (!dec.certificate_ok) ++sol.fallback_count;
      const double drv = dec.ftilde_at_opt;
      drv_sum += drv;
      u_sum += std::isfinite(dec.u_star) ? dec.u_star : ev.search_hi();
      diag.driver_min = std::min(diag.driver_min, drv);
      target[i] -= dt * scale[i] * drv;
      double y = scale[i] * (c - dt * drv);
      if (!(y > opt.y_floor)) {
        y = opt.y_floor;
        ++sol.floor_hits;
      }
      yk[i] = y;
    }
    for (auto& v : diag.theta_mean) v /= n;
    diag.driver_mean = drv_sum / n;
    diag.u_mean = u_sum / n;
    sol.min_driver = std::min(sol.min_driver, diag.driver_min);
    double s = 0.0;
    for (double v : yk) s += v;
    diag.y_mean = s / n;
    diag.y_q05 = detail::quantile_of(yk, 0.05);
    diag.y_q95 = detail::quantile_of(yk, 0.95);
    if (opt.keep_paths) sol.y[k] = yk;
  }
  if (static_cast<double>(sol.floor_hits) > opt.max_floor_fraction * static_cast<double>(n) * N)
    throw std::runtime_error("solve_backward: positivity floor hit on " + std::to_string(sol.floor_hits) +
                             " (path, time) pairs");
  double mean = 0.0;
  for (double v : target) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : target) var += (v - mean) * (v - mean);
  var /= (n - 1);
  sol.y0 = mean;
  sol.y0_se = std::sqrt(var / n);
  if (opt.keep_paths) sol.y[0].assign(n, mean);
  sol.slices[0].y_mean = mean;
  sol.slices[0].y_q05 = sol.slices[0].y_q95 = mean;
  for (std::size_t i = 0; i < n; ++i) sol.terminal_gap = std::max(sol.terminal_gap, std::abs(sol.y.empty() ? 0.0 : sol.y[N][i] - g.paths[i].xi));
  return sol;
}

struct MartingaleBounds {
  double m1 = 0.0;
  double m1_se = 0.0;
  double m2 = 0.0;
  double m2_se = 0.0;
};

// M1_0 = exp(-eta R0 e^{rT} - eta c (e^{rT} - 1) / r) (constant premium rate),
// M2_0 = E[exp(eta e^{rT} C_T)] by Monte Carlo over the ensemble.
inline MartingaleBounds martingale_bounds(const BsdeGrid& g, const ModelParams& p) {
  const auto rep = validate_assumptions(p, bsde_required_exponent(p));
  if (!rep.all_pass()) throw std::invalid_argument("martingale_bounds: exponential moments of the claims are not finite");
  MartingaleBounds b;
  b.m1 = std::exp(-p.eta * deterministic_wealth(p, p.horizon));
  const double a = p.eta * std::exp(p.rate_r * p.horizon);
  const std::size_t n = g.size();
  if (n == 0) throw std::invalid_argument("martingale_bounds: empty ensemble");
  double s = 0.0, s2 = 0.0;
  for (const auto& path : g.paths) {
    const double v = std::exp(a * path.total_claims);
    s += v;
    s2 += v * v;
  }
  b.m2 = s / n;
  b.m2_se = n > 1 ? std::sqrt(std::max(0.0, s2 / n - b.m2 * b.m2) / (n - 1)) : 0.0;
  return b;
}

// inf_u E[exp(-eta X^u_T)] = W^N_0 = Y_0.
inline double optimal_utility_at_zero(const BsdeSolution& sol) { return sol.y0; }

// Mean of xi over the ensemble with its standard error.
inline std::pair<double, double> mean_terminal(const BsdeGrid& g) {
  const std::size_t n = g.size();
  double s = 0.0, s2 = 0.0;
  for (const auto& p : g.paths) {
    s += p.xi;
    s2 += p.xi * p.xi;
  }
  const double m = s / n;
  return {m, n > 1 ? std::sqrt(std::max(0.0, s2 / n - m * m) / (n - 1)) : 0.0};
}

// CSV: t, mean Y, 5% and 95% quantiles, mean control, mean driver,
// regression diagnostics and the mean Theta per claim-mark bin.
inline void write_solution_csv(std::ostream& os, const BsdeSolution& sol, const std::string& manifest_hash) {
  os << "# manifest: " << manifest_hash << "\n";
  os << "# y0: " << format_real(sol.y0) << "\n";
  os << "# y0_se: " << format_real(sol.y0_se) << "\n";
  os << "t,mean_y,q05,q95,mean_u,mean_driver,min_driver,condition,r2,features";
  for (int j = 0; j < sol.bins; ++j) os << ",theta_bin_" << j;
  os << "\n";
  for (const auto& d : sol.slices) {
    os << format_real(d.t) << ',' << format_real(d.y_mean) << ',' << format_real(d.y_q05) << ','
       << format_real(d.y_q95) << ',' << format_real(d.u_mean) << ',' << format_real(d.driver_mean) << ','
       << format_real(std::isfinite(d.driver_min) ? d.driver_min : 0.0) << ',' << format_real(d.condition) << ','
       << format_real(d.r2) << ',' << d.features_used;
    for (int j = 0; j < sol.bins; ++j) os << ',' << format_real(j < static_cast<int>(d.theta_mean.size()) ? d.theta_mean[j] : 0.0);
    os << "\n";
  }
}

}  // namespace clusterre
