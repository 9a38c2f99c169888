#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterre/model.hpp"
#include "clusterre/random.hpp"
#include "clusterre/shot_noise.hpp"
#include "clusterre/simulator.hpp"
#include "clusterre/trajectory.hpp"

namespace clusterre {

// normalized: weights are renormalised at every step and sigma_t(1) is carried
// separately in log_norm. zakai: per-particle unnormalised log-masses are
// propagated and normalisation happens only when the filter is queried.
enum class FilterMode { normalized, zakai };
enum class ResampleScheme { systematic, stratified };

// Particle approximation of the conditional law of the hidden intensity.
//
// Since the last claim (the anchor), particle i stands for the law of
// D_i(t) + S_t, where D_i(t) = beta + (D_i - beta) e^{-alpha (t - t_anchor)}
// is its deterministic part and S_t is the shot noise accumulated since the
// anchor, whose tilted law is handled exactly by TiltedShotNoise. The tilt
// exp(-int D_i) enters the weights in closed form; the tilt of S is common to
// all particles. Randomness is only used when the shot noise is sampled
// (claims) and when resampling.
struct FilterState {
  ModelParams params;
  std::shared_ptr<const TiltedShotNoise> shot;
  FilterMode mode = FilterMode::normalized;
  Rng rng{0};

  std::vector<double> anchor_lambda;  // D_i at the anchor
  std::vector<double> anchor_logw;    // log weights (normalized) or log-masses (zakai) at the anchor
  double t_anchor = 0.0;
  double anchor_log_norm = 0.0;

  double t_current = 0.0;
  double log_norm = 0.0;  // log sigma_t(1)

  // Cached at t_current.
  std::vector<double> weights;     // normalised weights
  std::vector<double> lambda_det;  // D_i(t_current)
  TiltedShotNoise::Cumulants cumulants;

  std::size_t size() const { return anchor_lambda.size(); }

  double ess() const {
    double s2 = 0.0;
    for (double w : weights) s2 += w * w;
    return 1.0 / s2;
  }

  double weight_sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
};

namespace detail {

inline double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) throw std::runtime_error("filter degeneracy: all particle masses vanish");
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Refreshes the cached weights, deterministic parts, cumulants and log_norm at t_current.
inline void refresh(FilterState& st) {
  const auto& p = st.params;
  const double tau = st.t_current - st.t_anchor;
  const double kap = decay_integral(p.alpha, tau);
  const double damp = std::exp(-p.alpha * tau);
  const std::size_t n = st.size();
  st.cumulants = st.shot->at(tau);
  std::vector<double> lw(n);
  st.lambda_det.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double excess = st.anchor_lambda[i] - p.beta_rev;
    st.lambda_det[i] = p.beta_rev + excess * damp;
    lw[i] = st.anchor_logw[i] - excess * kap;
  }
  const double common = (1.0 - p.beta_rev) * tau + st.cumulants.log_mass;
  const double lse = log_sum_exp(lw);
  st.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) st.weights[i] = std::exp(lw[i] - lse);
  if (st.mode == FilterMode::normalized) {
    const double s = std::accumulate(st.weights.begin(), st.weights.end(), 0.0);
    for (auto& w : st.weights) w /= s;
    st.log_norm = st.anchor_log_norm + lse + common;
  } else {
    st.log_norm = lse + common;
  }
}

}  // namespace detail

inline std::shared_ptr<const TiltedShotNoise> make_shot_noise_law(const ModelParams& p) {
  return std::make_shared<const TiltedShotNoise>(p, p.horizon);
}

// All particles at lambda0 (or spread uniformly over lambda0 (1 +- spread)),
// equal weights. The seed drives every later random step of the filter.
inline FilterState filter_init(const ModelParams& p, std::size_t n_particles, std::uint64_t seed,
                               FilterMode mode = FilterMode::normalized, double initial_spread = 0.0,
                               std::shared_ptr<const TiltedShotNoise> shot = nullptr) {
  if (n_particles < 1) throw std::invalid_argument("filter_init: need at least one particle");
  FilterState st;
  st.params = p;
  st.shot = shot ? std::move(shot) : make_shot_noise_law(p);
  st.mode = mode;
  st.rng = Rng(seed);
  st.anchor_lambda.assign(n_particles, p.lambda0);
  if (initial_spread > 0.0)
    for (auto& l : st.anchor_lambda) l = p.lambda0 * (1.0 + initial_spread * (2.0 * st.rng.uniform() - 1.0));
  st.anchor_logw.assign(n_particles, -std::log(static_cast<double>(n_particles)));
  detail::refresh(st);
  return st;
}

// Advances the filter by dt with no observed claim in between.
inline void filter_propagate(FilterState& st, double dt) {
  if (!(dt >= 0.0)) throw std::invalid_argument("filter_propagate: dt must be >= 0");
  st.t_current += dt;
  detail::refresh(st);
}

// Replaces the analytic shot-noise component by an exact draw per particle
// and moves the anchor to t_current. Leaves the filtered law unchanged in
// distribution.
inline void filter_materialize(FilterState& st) {
  const auto& p = st.params;
  const double tau = st.t_current - st.t_anchor;
  const double kap = decay_integral(p.alpha, tau);
  const double common = (1.0 - p.beta_rev) * tau + st.cumulants.log_mass;
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st.mode == FilterMode::normalized)
      st.anchor_logw[i] = std::log(st.weights[i]);
    else
      st.anchor_logw[i] += common - (st.anchor_lambda[i] - p.beta_rev) * kap;
    st.anchor_lambda[i] = st.lambda_det[i] + st.shot->sample(tau, st.rng);
  }
  if (st.mode == FilterMode::normalized) st.anchor_log_norm = st.log_norm;
  st.t_anchor = st.t_current;
  detail::refresh(st);
}

// Claim of size z observed at t_current: lambda-biasing of the weights and
// shift of every particle by l(z).
inline void filter_update_claim(FilterState& st, double z) {
  if (!(z > 0.0)) throw std::invalid_argument("filter_update_claim: claim size must be > 0");
  filter_materialize(st);
  const std::size_t n = st.size();
  if (st.mode == FilterMode::normalized) {
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) mass += st.weights[i] * st.anchor_lambda[i];
    if (!(mass > 0.0) || !std::isfinite(mass)) throw std::runtime_error("filter degeneracy at claim update");
    for (std::size_t i = 0; i < n; ++i) st.anchor_logw[i] = std::log(st.weights[i] * st.anchor_lambda[i] / mass);
    st.anchor_log_norm += std::log(mass);
  } else {
    for (std::size_t i = 0; i < n; ++i) st.anchor_logw[i] += std::log(st.anchor_lambda[i]);
  }
  const double jump = st.params.excitation(z);
  for (auto& l : st.anchor_lambda) l += jump;
  detail::refresh(st);
}

// pi_t(lambda^k) = sum_i w_i E[(D_i(t) + S)^k].
inline double filter_moment(const FilterState& st, int k) {
  if (k < 0) throw std::invalid_argument("filter_moment: order must be >= 0");
  if (k == 0) return 1.0;
  if (k == 2) {
    // Centred form pi(l)^2 + sum_i w_i (D_i + E[S] - pi(l))^2 + Var(S), so that
    // pi(l^2) >= pi(l)^2 survives rounding.
    const double mu1 = st.cumulants.kappa[1];
    const double m1 = filter_moment(st, 1);
    double spread = 0.0;
    for (std::size_t i = 0; i < st.size(); ++i) {
      const double c = st.lambda_det[i] + mu1 - m1;
      spread += st.weights[i] * c * c;
    }
    return m1 * m1 + (spread + std::max(0.0, st.cumulants.kappa[2]));
  }
  const auto mu = TiltedShotNoise::raw_moments(st.cumulants, k);
  std::vector<double> binom(k + 1, 1.0);
  for (int j = 1; j <= k; ++j) binom[j] = binom[j - 1] * (k - j + 1) / j;
  double acc = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    const double d = st.lambda_det[i];
    double dp = 1.0, s = 0.0;
    for (int j = 0; j <= k; ++j) {
      s += binom[j] * dp * mu[k - j];
      dp *= d;
    }
    acc += st.weights[i] * s;
  }
  return acc;
}

// Resamples when ESS < threshold * n. New particles get equal weight at
// t_current; sigma_t(1) is preserved.
inline bool filter_resample(FilterState& st, double threshold, ResampleScheme scheme = ResampleScheme::systematic) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("filter_resample: threshold must be in (0, 1]");
  const std::size_t n = st.size();
  if (st.ess() >= threshold * static_cast<double>(n)) return false;
  std::vector<std::size_t> idx(n);
  const double inv = 1.0 / static_cast<double>(n);
  double cum = st.weights[0];
  std::size_t j = 0;
  const double u0 = st.rng.uniform();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + (scheme == ResampleScheme::systematic ? u0 : st.rng.uniform())) * inv;
    while (u > cum && j + 1 < n) cum += st.weights[++j];
    idx[i] = j;
  }
  const auto& p = st.params;
  const double tau = st.t_current - st.t_anchor;
  const double kap = decay_integral(p.alpha, tau);
  const double common = (1.0 - p.beta_rev) * tau + st.cumulants.log_mass;
  std::vector<double> lam(n), lw(n);
  for (std::size_t i = 0; i < n; ++i) {
    lam[i] = st.anchor_lambda[idx[i]];
    lw[i] = (lam[i] - p.beta_rev) * kap;  // undoes the tilt accumulated since the anchor
  }
  const double lse = detail::log_sum_exp(lw);
  const double log_norm = st.log_norm;
  st.anchor_lambda = std::move(lam);
  if (st.mode == FilterMode::normalized) {
    for (std::size_t i = 0; i < n; ++i) st.anchor_logw[i] = lw[i] - lse;
    // Keep log_norm(t) unchanged: sum_i exp(logw_i - excess_i kap) = n e^{-lse}.
    st.anchor_log_norm = log_norm - (std::log(static_cast<double>(n)) - lse) - common;
  } else {
    const double target = log_norm - std::log(static_cast<double>(n)) - common;
    for (std::size_t i = 0; i < n; ++i) st.anchor_logw[i] = lw[i] + target;
  }
  detail::refresh(st);
  return true;
}

struct FilterOptions {
  std::size_t particles = 1000;
  int report_steps = 100;
  double resample_threshold = 0.5;
  ResampleScheme scheme = ResampleScheme::systematic;
  FilterMode mode = FilterMode::normalized;
  double initial_spread = 0.0;
};

struct DominatingPoint {
  double t = 0.0;
  double y_left = 0.0;
  double y_right = 0.0;
};

// Y decays towards beta + rho E[Z2] / alpha between claims and restarts from
// the post-claim filter mean at each claim. Also stores y_right in the trajectory.
inline std::vector<DominatingPoint> dominating_trajectory(FilterTrajectory& traj, const ModelParams& p) {
  const double bt = p.beta_tilde();
  std::vector<DominatingPoint> out;
  out.reserve(traj.size());
  double y0 = p.lambda0, t0 = 0.0;
  if (!traj.empty() && traj.front().t == 0.0) y0 = traj.front().pi_right;
  for (auto& pt : traj) {
    const double y = bt + (y0 - bt) * std::exp(-p.alpha * (pt.t - t0));
    DominatingPoint d{pt.t, y, y};
    if (pt.claim) {
      d.y_right = pt.pi_right;
      y0 = pt.pi_right;
      t0 = pt.t;
    }
    pt.y_dominating = d.y_right;
    out.push_back(d);
  }
  return out;
}

// Runs the filter along the observed claims of `log` (shocks are ignored:
// they are not observable). Knots: a uniform grid of report_steps intervals
// on [0, T] plus every claim time.
inline FilterTrajectory run_filter(const EventLog& log, const ModelParams& p, const FilterOptions& opt,
                                   std::uint64_t seed, std::shared_ptr<const TiltedShotNoise> shot = nullptr,
                                   FilterState* final_state = nullptr) {
  FilterState st = filter_init(p, opt.particles, seed, opt.mode, opt.initial_spread, std::move(shot));
  const double T = p.horizon;
  FilterTrajectory traj;
  auto record = [&](double t, bool claim, double z, double left, double left2) {
    FilterPoint pt;
    pt.t = t;
    pt.claim = claim;
    pt.mark = z;
    pt.pi_left = left;
    pt.pi2_left = left2;
    pt.pi_right = filter_moment(st, 1);
    pt.pi2_right = filter_moment(st, 2);
    pt.ess = st.ess();
    pt.log_norm = st.log_norm;
    traj.push_back(pt);
  };
  record(0.0, false, 0.0, filter_moment(st, 1), filter_moment(st, 2));
  std::size_t next_claim = 0;
  std::vector<const Event*> claims;
  for (const auto& e : log.events)
    if (e.source == EventSource::claim) claims.push_back(&e);
  for (int k = 1; k <= opt.report_steps; ++k) {
    const double tk = (k == opt.report_steps) ? T : T * k / opt.report_steps;
    while (next_claim < claims.size() && claims[next_claim]->time <= tk) {
      const Event& e = *claims[next_claim++];
      filter_propagate(st, e.time - st.t_current);
      const double left = filter_moment(st, 1), left2 = filter_moment(st, 2);
      filter_update_claim(st, e.mark);
      filter_resample(st, opt.resample_threshold, opt.scheme);
      record(e.time, true, e.mark, left, left2);
    }
    if (traj.back().t == tk) continue;
    filter_propagate(st, tk - st.t_current);
    const double m1 = filter_moment(st, 1), m2 = filter_moment(st, 2);
    record(tk, false, 0.0, m1, m2);
  }
  dominating_trajectory(traj, p);
  if (final_state) *final_state = std::move(st);
  return traj;
}

// ------------------------------------------------------- moment hierarchy

enum class MomentClosure { truncate, lognormal };

struct MomentPoint {
  double t = 0.0;
  bool claim = false;
  std::vector<double> left;   // pi_{t-}(lambda^k), k = 0..K
  std::vector<double> right;  // pi_t(lambda^k)
};

struct MomentTrajectory {
  std::vector<MomentPoint> points;
  bool hankel_ok = true;
  double first_violation = -1.0;
};

namespace detail {

// Raw moment of order K+1 implied by the closure rule.
inline double close_moments(const std::vector<double>& m, MomentClosure rule) {
  const int K = static_cast<int>(m.size()) - 1;
  if (rule == MomentClosure::lognormal) {
    const double s2 = std::max(0.0, std::log(m[2] / (m[1] * m[1])));
    const double mu = std::log(m[1]) - 0.5 * s2;
    return std::exp((K + 1) * mu + 0.5 * (K + 1) * (K + 1) * s2);
  }
  // central moment of order K+1 set to zero
  double binom = 1.0, acc = 0.0;
  for (int j = 0; j <= K; ++j) {
    acc += binom * m[j] * std::pow(-m[1], K + 1 - j);
    binom = binom * (K + 1 - j) / (j + 1);
  }
  return -acc;
}

// Moment (Hankel) positivity of m_0..m_K via Cholesky of [m_{i+j}].
inline bool hankel_positive(const std::vector<double>& m) {
  const int K = static_cast<int>(m.size()) - 1;
  const int d = K / 2 + 1;
  std::vector<double> a(d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a[i * d + j] = m[i + j];
  for (int j = 0; j < d; ++j) {
    double s = a[j * d + j];
    for (int k = 0; k < j; ++k) s -= a[j * d + k] * a[j * d + k];
    if (s < -1e-10 * std::max(1.0, std::abs(a[j * d + j]))) return false;
    const double l = std::sqrt(std::max(s, 0.0));
    a[j * d + j] = l;
    for (int i = j + 1; i < d; ++i) {
      double t = a[i * d + j];
      for (int k = 0; k < j; ++k) t -= a[i * d + k] * a[j * d + k];
      a[i * d + j] = l > 0.0 ? t / l : 0.0;
    }
  }
  return true;
}

}  // namespace detail

// Deterministic filter on pi(lambda^k), k <= K: the between-claim ODE system
// with the top moment closed by `rule` (RK4), and the exact binomial update at
// claims. Experimental: accuracy depends on the closure.
inline MomentTrajectory moment_filter_run(const EventLog& log, const ModelParams& p, int K, MomentClosure rule,
                                          int report_steps = 100, int substeps = 20) {
  if (K < 2) throw std::invalid_argument("moment_filter_run: order K must be >= 2");
  std::vector<double> z2(K + 1);
  for (int j = 0; j <= K; ++j) z2[j] = p.shock_dist.moment(j);
  std::vector<std::vector<double>> binom(K + 2, std::vector<double>(K + 2, 0.0));
  for (int n = 0; n <= K + 1; ++n) {
    binom[n][0] = 1.0;
    for (int k = 1; k <= n; ++k) binom[n][k] = binom[n - 1][k - 1] + (k <= n - 1 ? binom[n - 1][k] : 0.0);
  }
  auto rhs = [&](const std::vector<double>& m) {
    std::vector<double> full = m;
    full.push_back(detail::close_moments(m, rule));
    std::vector<double> d(K + 1, 0.0);
    for (int k = 1; k <= K; ++k) {
      double v = p.alpha * k * (p.beta_rev * full[k - 1] - full[k]);
      for (int i = 0; i < k; ++i) v += binom[k][i] * full[i] * p.rho * z2[k - i];
      v -= full[k + 1] - full[1] * full[k];
      d[k] = v;
    }
    return d;
  };
  auto rk4 = [&](std::vector<double>& m, double h) {
    auto axpy = [&](const std::vector<double>& a, const std::vector<double>& b, double s) {
      std::vector<double> r(a);
      for (int k = 1; k <= K; ++k) r[k] += s * b[k];
      return r;
    };
    const auto k1 = rhs(m);
    const auto k2 = rhs(axpy(m, k1, 0.5 * h));
    const auto k3 = rhs(axpy(m, k2, 0.5 * h));
    const auto k4 = rhs(axpy(m, k3, h));
    for (int k = 1; k <= K; ++k) m[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
  };

  MomentTrajectory out;
  std::vector<double> m(K + 1);
  for (int k = 0; k <= K; ++k) m[k] = std::pow(p.lambda0, k);
  double t = 0.0;
  auto check = [&](double at) {
    if (out.hankel_ok && !detail::hankel_positive(m)) {
      out.hankel_ok = false;
      out.first_violation = at;
    }
  };
  auto advance = [&](double to) {
    const double span = to - t;
    if (span <= 0.0) return;
    const int n = std::max(1, static_cast<int>(std::ceil(span / (p.horizon / (report_steps * substeps)))));
    for (int s = 0; s < n; ++s) rk4(m, span / n);
    t = to;
  };
  out.points.push_back({0.0, false, m, m});
  std::vector<const Event*> claims;
  for (const auto& e : log.events)
    if (e.source == EventSource::claim) claims.push_back(&e);
  std::size_t next = 0;
  for (int k = 1; k <= report_steps; ++k) {
    const double tk = k == report_steps ? p.horizon : p.horizon * k / report_steps;
    while (next < claims.size() && claims[next]->time <= tk) {
      const Event& e = *claims[next++];
      advance(e.time);
      check(t);
      const std::vector<double> left = m;
      std::vector<double> full = m;
      full.push_back(detail::close_moments(m, rule));
      const double l = p.excitation(e.mark);
      for (int q = 1; q <= K; ++q) {
        double s = 0.0;
        for (int i = 0; i <= q; ++i) s += binom[q][i] * full[i + 1] * std::pow(l, q - i);
        m[q] = s / full[1];
      }
      check(t);
      out.points.push_back({t, true, left, m});
    }
    if (out.points.back().t == tk) continue;
    advance(tk);
    check(t);
    out.points.push_back({t, false, m, m});
  }
  return out;
}

}  // namespace clusterre
