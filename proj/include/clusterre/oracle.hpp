#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterre/filter.hpp"
#include "clusterre/model.hpp"
#include "clusterre/random.hpp"
#include "clusterre/simulator.hpp"

// Slow, independent reference computations. Nothing here reuses the filter's
// shot-noise cumulants, the strategy module's quadrature or the library RNG
// wrapper for the quantities being checked.
namespace clusterre::oracle {

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// ------------------------------------------------------------ moment ODEs

struct MomentCurve {
  std::vector<double> t;
  std::vector<double> m;            // E[lambda_t]
  std::vector<double> m2;           // E[lambda_t^2] (second-moment oracle only)
  std::vector<double> closed_form;  // E[lambda_t] in closed form when E[l(Z1)] = 0
};

namespace detail {

struct MomentCoefficients {
  double el = 0.0, el2 = 0.0, ez2 = 0.0, ez2sq = 0.0;
};

inline MomentCoefficients coefficients(const ModelParams& p) {
  return {p.excitation.moment(p.claim_dist, 1), p.excitation.moment(p.claim_dist, 2), p.shock_dist.moment(1),
          p.shock_dist.moment(2)};
}

// Fixed-step RK4 of y' = f(y) from each grid time to the next, step <= max_h.
template <std::size_t D, class F>
std::vector<std::array<double, D>> rk4(std::array<double, D> y, const std::vector<double>& grid, double max_h, F f) {
  std::vector<std::array<double, D>> out;
  double t = 0.0;
  for (double target : grid) {
    if (target < t) throw std::invalid_argument("moment oracle: time grid must be nondecreasing and >= 0");
    const double len = target - t;
    const long steps = len > 0.0 ? static_cast<long>(std::ceil(len / max_h)) : 0;
    const double h = steps > 0 ? len / steps : 0.0;
    for (long s = 0; s < steps; ++s) {
      auto add = [](const std::array<double, D>& a, const std::array<double, D>& b, double c) {
        std::array<double, D> r;
        for (std::size_t i = 0; i < D; ++i) r[i] = a[i] + c * b[i];
        return r;
      };
      const auto k1 = f(y);
      const auto k2 = f(add(y, k1, 0.5 * h));
      const auto k3 = f(add(y, k2, 0.5 * h));
      const auto k4 = f(add(y, k3, h));
      for (std::size_t i = 0; i < D; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    t = target;
    out.push_back(y);
  }
  return out;
}

}  // namespace detail

// m' = alpha (beta - m) + E[l(Z1)] m + rho E[Z2], m(0) = lambda0.
inline MomentCurve moment_ode_oracle(const ModelParams& p, const std::vector<double>& t_grid) {
  const auto c = detail::coefficients(p);
  const double max_h = 1e-4 * p.horizon;
  auto f = [&](const std::array<double, 1>& y) {
    return std::array<double, 1>{p.alpha * (p.beta_rev - y[0]) + c.el * y[0] + p.rho * c.ez2};
  };
  MomentCurve out;
  out.t = t_grid;
  for (const auto& y : detail::rk4<1>({p.lambda0}, t_grid, max_h, f)) out.m.push_back(y[0]);
  if (c.el == 0.0) {
    const double bt = p.beta_rev + p.rho * c.ez2 / p.alpha;
    for (double t : t_grid) out.closed_form.push_back(bt + (p.lambda0 - bt) * std::exp(-p.alpha * t));
  }
  return out;
}

// Coupled (m, m2) system:
//   m2' = 2 alpha (beta m - m2) + 2 E[l] m2 + E[l^2] m + 2 rho E[Z2] m + rho E[Z2^2].
inline MomentCurve second_moment_ode_oracle(const ModelParams& p, const std::vector<double>& t_grid) {
  const auto c = detail::coefficients(p);
  const double max_h = 1e-4 * p.horizon;
  auto f = [&](const std::array<double, 2>& y) {
    const double m = y[0], m2 = y[1];
    return std::array<double, 2>{
        p.alpha * (p.beta_rev - m) + c.el * m + p.rho * c.ez2,
        2.0 * p.alpha * (p.beta_rev * m - m2) + 2.0 * c.el * m2 + c.el2 * m + 2.0 * p.rho * c.ez2 * m +
            p.rho * c.ez2sq};
  };
  MomentCurve out;
  out.t = t_grid;
  for (const auto& y : detail::rk4<2>({p.lambda0, p.lambda0 * p.lambda0}, t_grid, max_h, f)) {
    out.m.push_back(y[0]);
    out.m2.push_back(y[1]);
  }
  return out;
}

// ----------------------------------------------------- nested Zakai oracle

// Weighted particle description of the filter right after the last claim.
struct ParticleSnapshot {
  double t = 0.0;
  std::vector<double> lambda;
  std::vector<double> weight;  // nonnegative, need not be normalised
};

// pi_t(lambda^k) between claims by fresh inner Monte Carlo:
//   E[f(l_t) exp(-int_s^t (l_u - 1) du)] / E[exp(-int_s^t (l_u - 1) du)],
// with l started from the snapshot law at time s and driven by decay and
// external shocks only (no claim occurs in (s, t]). Delta-method SE.
inline Estimate nested_zakai_oracle(const ParticleSnapshot& snap, int power, double t, const ModelParams& p,
                                    std::size_t inner_n, std::uint64_t seed) {
  if (inner_n < 100) throw std::invalid_argument("nested_zakai_oracle: inner_n must be >= 100");
  if (!(t >= snap.t)) throw std::invalid_argument("nested_zakai_oracle: query time before the snapshot");
  if (snap.lambda.empty() || snap.lambda.size() != snap.weight.size())
    throw std::invalid_argument("nested_zakai_oracle: malformed snapshot");
  std::vector<double> cum(snap.weight.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cum.size(); ++i) {
    if (!(snap.weight[i] >= 0.0)) throw std::invalid_argument("nested_zakai_oracle: negative weight");
    acc += snap.weight[i];
    cum[i] = acc;
  }
  if (!(acc > 0.0)) throw std::invalid_argument("nested_zakai_oracle: zero total weight");
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double h = t - snap.t;
  const double a = p.alpha, b = p.beta_rev;
  double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t n = 0; n < inner_n; ++n) {
    const double x = unif(eng) * acc;
    const std::size_t idx = std::min<std::size_t>(std::lower_bound(cum.begin(), cum.end(), x) - cum.begin(),
                                                   cum.size() - 1);
    double lam = snap.lambda[idx];
    double s = 0.0, integral = 0.0;
    while (true) {
      const double gap = p.rho > 0.0 ? -std::log(1.0 - unif(eng)) / p.rho : std::numeric_limits<double>::infinity();
      const double step = std::min(gap, h - s);
      // int_0^step (b + (lam - b) e^{-a v}) dv
      integral += b * step + (lam - b) * (-std::expm1(-a * step)) / a;
      lam = b + (lam - b) * std::exp(-a * step);
      s += step;
      if (gap >= h - s + step) break;
      lam += p.shock_dist.quantile(1.0 - unif(eng));
    }
    const double w = std::exp(-(integral - h));
    const double fv = std::pow(lam, power) * w;
    sa += fv;
    sb += w;
    saa += fv * fv;
    sbb += w * w;
    sab += fv * w;
  }
  const double nn = static_cast<double>(inner_n);
  const double ma = sa / nn, mb = sb / nn;
  const double r = sa / sb;
  const double va = saa / nn - ma * ma, vb = sbb / nn - mb * mb, cab = sab / nn - ma * mb;
  const double var = std::max(0.0, (va - 2.0 * r * cab + r * r * vb) / (mb * mb));
  return {r, std::sqrt(var / nn)};
}

// ---------------------------------------------------------- grid maximizer

namespace detail {

// Closed-form integrals over z in (lo, hi] of the continuous part of a mark law:
// mass, int z dF and int e^{-k z} dF.
inline double piece_mass(const MarkDistribution& d, double lo, double hi) {
  if (hi <= lo) return 0.0;
  switch (d.kind()) {
    case MarkKind::point_mass: return 0.0;
    case MarkKind::uniform: {
      const double a = std::max(lo, d.p1()), b = std::min(hi, d.p2());
      return b > a ? (b - a) / (d.p2() - d.p1()) : 0.0;
    }
    case MarkKind::exponential: {
      const double a = std::max(lo, 0.0), b = std::min(hi, d.p2());
      if (b <= a) return 0.0;
      return std::exp(-d.p1() * a) - (std::isfinite(b) ? std::exp(-d.p1() * b) : 0.0);
    }
  }
  return 0.0;
}

inline double piece_first(const MarkDistribution& d, double lo, double hi) {
  if (hi <= lo) return 0.0;
  switch (d.kind()) {
    case MarkKind::point_mass: return 0.0;
    case MarkKind::uniform: {
      const double a = std::max(lo, d.p1()), b = std::min(hi, d.p2());
      return b > a ? (b * b - a * a) / (2.0 * (d.p2() - d.p1())) : 0.0;
    }
    case MarkKind::exponential: {
      const double r = d.p1();
      const double a = std::max(lo, 0.0), b = std::min(hi, d.p2());
      if (b <= a) return 0.0;
      // int_a^b z r e^{-r z} dz = (a + 1/r) e^{-r a} - (b + 1/r) e^{-r b}
      const double tb = std::isfinite(b) ? (b + 1.0 / r) * std::exp(-r * b) : 0.0;
      return (a + 1.0 / r) * std::exp(-r * a) - tb;
    }
  }
  return 0.0;
}

// int_(lo,hi] e^{-k z} dF (continuous part)
inline double piece_laplace(const MarkDistribution& d, double k, double lo, double hi) {
  if (hi <= lo) return 0.0;
  if (k == 0.0) return piece_mass(d, lo, hi);
  switch (d.kind()) {
    case MarkKind::point_mass: return 0.0;
    case MarkKind::uniform: {
      const double a = std::max(lo, d.p1()), b = std::min(hi, d.p2());
      if (b <= a) return 0.0;
      return std::exp(-k * a) * (-std::expm1(-k * (b - a))) / (k * (d.p2() - d.p1()));
    }
    case MarkKind::exponential: {
      const double r = d.p1(), s = r + k;
      const double a = std::max(lo, 0.0), b = std::min(hi, d.p2());
      if (b <= a) return 0.0;
      const double tb = std::isfinite(b) ? std::exp(-s * b) : 0.0;
      return r / s * (std::exp(-s * a) - tb);
    }
  }
  return 0.0;
}

// Location and probability range of the atom of a mark law, if any.
struct Atom {
  bool present = false;
  double z = 0.0, p_lo = 0.0, p_hi = 0.0;
};

inline Atom atom_of(const MarkDistribution& d) {
  if (d.kind() == MarkKind::point_mass) return {true, d.p1(), 0.0, 1.0};
  if (d.kind() == MarkKind::exponential && std::isfinite(d.p2()))
    return {true, d.p2(), 1.0 - std::exp(-d.p1() * d.p2()), 1.0};
  return {};
}

// Continuous-part z-range of probability bin [p0, p1].
inline std::pair<double, double> bin_z_range(const MarkDistribution& d, double p0, double p1) {
  switch (d.kind()) {
    case MarkKind::point_mass: return {0.0, 0.0};
    case MarkKind::uniform: return {d.p1() + (d.p2() - d.p1()) * p0, d.p1() + (d.p2() - d.p1()) * p1};
    case MarkKind::exponential: {
      const double r = d.p1();
      auto q = [&](double p) { return p >= 1.0 ? std::numeric_limits<double>::infinity() : -std::log1p(-p) / r; };
      return {std::min(q(p0), d.p2()), std::min(q(p1), d.p2())};
    }
  }
  return {0.0, 0.0};
}

}  // namespace detail

// f~(t, w, theta, u) with every mark integral in closed form: on each piece
// between bin edges and the retention kinks the ceded amount is affine in z.
inline double ftilde_closed_form(double t, double w, const std::vector<double>& theta, double pi_lambda,
                                 const Contract& c, const ModelParams& p, double u) {
  const auto& d = p.claim_dist;
  const int m = static_cast<int>(theta.size());
  const double a = p.eta * std::exp(p.rate_r * (p.horizon - t));
  // Ceded amount on z: slope * z + shift, over (lo, hi].
  struct Seg {
    double lo, hi, slope, shift;
  };
  std::vector<Seg> segs;
  const double inf = std::numeric_limits<double>::infinity();
  switch (c.kind) {
    case ContractKind::proportional: segs.push_back({-inf, inf, 1.0 - u, 0.0}); break;
    case ContractKind::excess_of_loss:
      segs.push_back({-inf, u, 0.0, 0.0});
      segs.push_back({u, inf, 1.0, -u});
      break;
    case ContractKind::limited_stop_loss:
      segs.push_back({-inf, u, 0.0, 0.0});
      segs.push_back({u, u + c.coverage, 1.0, -u});
      segs.push_back({u + c.coverage, inf, 0.0, c.coverage});
      break;
  }
  auto ceded_at = [&](double z) {
    for (const auto& s : segs)
      if (z > s.lo && z <= s.hi) return s.slope * z + s.shift;
    return 0.0;
  };
  const auto atom = detail::atom_of(d);
  double integral = 0.0, expected_ceded = 0.0;
  for (int j = 0; j < m; ++j) {
    const double p0 = static_cast<double>(j) / m, p1 = static_cast<double>(j + 1) / m;
    const double coef = w + theta[j];
    const auto [zlo, zhi] = detail::bin_z_range(d, p0, p1);
    for (const auto& s : segs) {
      const double lo = std::max(zlo, s.lo), hi = std::min(zhi, s.hi);
      if (hi <= lo) continue;
      const double mass = detail::piece_mass(d, lo, hi);
      const double lap = detail::piece_laplace(d, a * s.slope, lo, hi);
      integral += coef * (std::exp(-a * s.shift) * lap - mass);
      expected_ceded += s.slope * detail::piece_first(d, lo, hi) + s.shift * mass;
    }
    if (atom.present) {
      const double share = std::max(0.0, std::min(p1, atom.p_hi) - std::max(p0, atom.p_lo));
      if (share > 0.0) {
        const double ced = ceded_at(atom.z);
        integral += coef * share * std::expm1(-a * ced);
        expected_ceded += share * ced;
      }
    }
  }
  const double q = (1.0 + p.safety_loading) * pi_lambda * expected_ceded;
  return -w * a * q - pi_lambda * integral;
}

struct GridMaximum {
  double u = 0.0;          // best grid point (u_N reported as +inf / 1)
  double value = 0.0;
  double u_refined = 0.0;  // ternary-search refinement inside the best cell
  double value_refined = 0.0;
};

// Exhaustive search of f~ on a uniform grid of [u_M, u_top] plus u_N, where
// u_top = 1 (proportional) or the claim-support cap (layers).
inline GridMaximum grid_maximizer(double t, double w, const std::vector<double>& theta, double pi_lambda,
                                  const Contract& c, const ModelParams& p, std::size_t grid_n = 10000) {
  if (grid_n < 1000) throw std::invalid_argument("grid_maximizer: grid_n must be >= 1000");
  const auto& d = p.claim_dist;
  double top = 1.0;
  if (c.kind != ContractKind::proportional)
    top = std::isfinite(d.support_cap()) ? d.support_cap() : -std::log(1e-14) / d.p1();
  auto f = [&](double u) { return ftilde_closed_form(t, w, theta, pi_lambda, c, p, u); };
  GridMaximum g;
  g.u = c.u_null();
  g.value = 0.0;  // f~(u_N) = 0
  std::size_t best = grid_n + 1;
  for (std::size_t k = 0; k <= grid_n; ++k) {
    const double u = top * static_cast<double>(k) / grid_n;
    const double v = f(u);
    if (v > g.value) {
      g.value = v;
      g.u = u;
      best = k;
    }
  }
  g.u_refined = g.u;
  g.value_refined = g.value;
  if (best <= grid_n) {
    double lo = top * static_cast<double>(best > 0 ? best - 1 : 0) / grid_n;
    double hi = top * static_cast<double>(std::min(best + 1, grid_n)) / grid_n;
    for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (f(m1) < f(m2))
        lo = m1;
      else
        hi = m2;
    }
    const double u = 0.5 * (lo + hi), v = f(u);
    if (v > g.value_refined) {
      g.value_refined = v;
      g.u_refined = u;
    }
  }
  return g;
}

// --------------------------------------------------------- utility by MC

struct UtilityEstimate {
  double value = 0.0;
  double se = 0.0;
  std::vector<double> samples;  // exp(-eta X_T) per path
};

struct UtilityOptions {
  std::size_t particles = 500;
  int report_steps = 100;
  double resample_threshold = 0.5;
};

// E[exp(-eta X^u_T)] for several feedback strategies evaluated on the same
// simulated paths and filter runs. Path i uses derive_seed(seed, i) (the
// stream of batch_simulate) and filter seed derive_seed(derive_seed(seed, i), 1).
inline std::vector<UtilityEstimate> utility_mc(const std::vector<FeedbackStrategy>& strategies, const Contract& c,
                                               const ModelParams& p, std::size_t n_paths, std::uint64_t seed,
                                               const UtilityOptions& opt = {}) {
  if (n_paths < 2) throw std::invalid_argument("utility_mc: need at least two paths");
  auto shot = make_shot_noise_law(p);
  FilterOptions fo;
  fo.particles = opt.particles;
  fo.report_steps = opt.report_steps;
  fo.resample_threshold = opt.resample_threshold;
  std::vector<UtilityEstimate> out(strategies.size());
  for (auto& e : out) e.samples.resize(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    const std::uint64_t ps = derive_seed(seed, i);
    const EventLog log = simulate_path(p, ps);
    const FilterTrajectory traj = run_filter(log, p, fo, derive_seed(ps, 1), shot);
    for (std::size_t s = 0; s < strategies.size(); ++s)
      out[s].samples[i] = std::exp(-p.eta * wealth_path(log, c, strategies[s], traj, p).terminal);
  }
  for (auto& e : out) {
    double sum = 0.0, sum2 = 0.0;
    for (double v : e.samples) {
      sum += v;
      sum2 += v * v;
    }
    e.value = sum / n_paths;
    e.se = std::sqrt(std::max(0.0, sum2 / n_paths - e.value * e.value) / (n_paths - 1));
  }
  return out;
}

inline UtilityEstimate utility_mc(double constant_u, const Contract& c, const ModelParams& p, std::size_t n_paths,
                                  std::uint64_t seed, const UtilityOptions& opt = {}) {
  c.require_domain(constant_u);
  return utility_mc({[constant_u](const FilterSummary&) { return constant_u; }}, c, p, n_paths, seed, opt)[0];
}

// ------------------------------------------- exponential-martingale identity

// H(t, z, omega) = level * 1{t in (t1, t2]} * 1{z > z_cut} * 1{event A},
// with A = {N_{t1} >= min_count} decided at t1 (min_count = 0 means always).
struct SimpleIntegrand {
  double level = 0.0;
  double t1 = 0.0;
  double t2 = 1.0;
  double z_cut = 0.0;
  int min_count = 0;
};

struct IdentityVerdict {
  double lhs = 0.0, lhs_se = 0.0;
  double rhs = 0.0, rhs_se = 0.0;
  bool rhs_exact = false;
  bool pass = false;
};

// Both sides of E[exp(int int H dN)] = E[exp(int int (e^H - 1) F1(dz) dt)]
// under Q, where the claim process is a unit-rate marked Poisson process.
// Independent streams for the two sides; the right side is exact when H is
// deterministic.
inline IdentityVerdict exponential_identity_check(const SimpleIntegrand& h, const ModelParams& p, std::size_t n_paths,
                                                  std::uint64_t seed) {
  if (n_paths < 2) throw std::invalid_argument("exponential_identity_check: need at least two paths");
  if (!(h.t1 >= 0.0 && h.t2 > h.t1 && h.t2 <= p.horizon))
    throw std::invalid_argument("exponential_identity_check: need 0 <= t1 < t2 <= T");
  const double tail = 1.0 - p.claim_dist.cdf(h.z_cut);
  const double rate_term = std::expm1(h.level) * tail * (h.t2 - h.t1);
  auto side = [&](std::uint64_t s, bool left) {
    std::mt19937_64 eng(s);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
      double t = 0.0, exponent = 0.0;
      int before = 0;
      while (true) {
        t += -std::log(1.0 - unif(eng));
        if (t > p.horizon) break;
        const double z = p.claim_dist.quantile(1.0 - unif(eng));
        if (t <= h.t1) ++before;
        if (left && t > h.t1 && t <= h.t2 && z > h.z_cut) exponent += h.level;
      }
      const bool a = before >= h.min_count;
      const double v = left ? (a ? std::exp(exponent) : 1.0) : std::exp(a ? rate_term : 0.0);
      sum += v;
      sum2 += v * v;
    }
    const double m = sum / n_paths;
    return Estimate{m, std::sqrt(std::max(0.0, sum2 / n_paths - m * m) / (n_paths - 1))};
  };
  IdentityVerdict v;
  const Estimate l = side(seed, true);
  v.lhs = l.value;
  v.lhs_se = l.se;
  if (h.min_count == 0) {
    v.rhs = std::exp(rate_term);
    v.rhs_exact = true;
  } else {
    const Estimate r = side(seed ^ 0x5DEECE66DULL, false);
    v.rhs = r.value;
    v.rhs_se = r.se;
  }
  const double se = std::sqrt(v.lhs_se * v.lhs_se + v.rhs_se * v.rhs_se);
  v.pass = std::abs(v.lhs - v.rhs) <= 3.0 * se || v.lhs == v.rhs;
  return v;
}

// ------------------------------------------------------------ two-sample KS

// Kolmogorov-Smirnov statistic and asymptotic p-value of two samples.
inline std::pair<double, double> ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
  const double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  if (lam < 0.2) return {d, 1.0};
  double pval = 0.0;
  for (int k = 1; k <= 100; ++k) pval += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
  return {d, std::clamp(pval, 0.0, 1.0)};
}

}  // namespace clusterre::oracle
