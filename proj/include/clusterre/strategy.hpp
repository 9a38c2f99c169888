#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterre/model.hpp"
#include "clusterre/quadrature.hpp"

namespace clusterre {

// Integrates functions of a claim mark against F1 in probability space,
// int g(z) F1(dz) = int_0^1 g(Q(p)) dp, on `bins` equal-probability bins.
// Each bin (and each piece between extra kinks) gets its own Gauss-Legendre
// rule; bins without kinks reuse cached nodes. Atoms are handled naturally
// because Q is flat over them.
class MarkIntegrator {
 public:
  struct Node {
    double z;
    double w;
    int bin;
  };

  MarkIntegrator(const MarkDistribution& dist, int bins, int order = 64) : dist_(dist), bins_(bins), rule_(order) {
    if (bins < 1) throw std::invalid_argument("MarkIntegrator: need at least one bin");
    edges_.resize(bins + 1);
    for (int j = 0; j <= bins; ++j) edges_[j] = static_cast<double>(j) / bins;
    breaks_ = dist.quantile_breakpoints();
    cache_.resize(bins);
    for (int j = 0; j < bins; ++j) cache_[j] = build(j, {});
  }

  int bins() const { return bins_; }
  const MarkDistribution& distribution() const { return dist_; }
  double bin_lo(int j) const { return edges_[j]; }
  double bin_hi(int j) const { return edges_[j + 1]; }

  // Bin index of a mark value (by its cdf).
  int bin_of(double z) const {
    const double p = dist_.cdf(z);
    int j = static_cast<int>(p * bins_);
    if (j >= bins_) j = bins_ - 1;
    // Marks sitting on an atom belong to the bin where the atom's mass starts.
    const double left = cdf_left(z);
    if (left < p) j = std::min(bins_ - 1, static_cast<int>(left * bins_ + 1e-12));
    return std::max(0, j);
  }

  // sum over pieces of int g(z, bin) dF, pieces split at the p-values in `kinks`.
  template <class G>
  double integrate(G&& g, const std::vector<double>& kinks = {}) const {
    double acc = 0.0;
    for (int j = 0; j < bins_; ++j) {
      bool split = false;
      for (double k : kinks)
        if (k > edges_[j] && k < edges_[j + 1]) split = true;
      if (!split) {
        for (const auto& n : cache_[j]) acc += n.w * g(n.z, j);
      } else {
        for (const auto& n : build(j, kinks)) acc += n.w * g(n.z, j);
      }
    }
    return acc;
  }

  // Nodes of one bin (for callers that assemble their own sums).
  const std::vector<Node>& nodes(int j) const { return cache_[j]; }

 private:
  double cdf_left(double z) const {
    if (dist_.kind() == MarkKind::point_mass) return z > dist_.p1() ? 1.0 : 0.0;
    if (dist_.kind() == MarkKind::exponential && std::isfinite(dist_.p2()) && z >= dist_.p2())
      return -std::expm1(-dist_.p1() * dist_.p2());
    return dist_.cdf(z);
  }

  std::vector<Node> build(int j, const std::vector<double>& kinks) const {
    std::vector<double> cuts{edges_[j], edges_[j + 1]};
    for (double b : breaks_)
      if (b > edges_[j] && b < edges_[j + 1]) cuts.push_back(b);
    for (double k : kinks)
      if (k > edges_[j] && k < edges_[j + 1]) cuts.push_back(k);
    std::sort(cuts.begin(), cuts.end());
    std::vector<Node> out;
    out.reserve((cuts.size() - 1) * rule_.order());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double a = cuts[c], b = cuts[c + 1];
      if (b <= a) continue;
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
      for (int i = 0; i < rule_.order(); ++i)
        out.push_back({dist_.quantile(mid + half * rule_.nodes()[i]), half * rule_.weights()[i], j});
    }
    return out;
  }

  MarkDistribution dist_;
  int bins_;
  GaussLegendre rule_;
  std::vector<double> edges_;
  std::vector<double> breaks_;
  std::vector<std::vector<Node>> cache_;
};

// Bin-constant function of the claim mark (the jump coefficient Theta).
struct BinnedTheta {
  std::vector<double> values;
  double operator[](int j) const { return values[j]; }
  static BinnedTheta zero(int bins) { return {std::vector<double>(bins, 0.0)}; }
};

// Point at which the driver integrand is maximised over the control.
struct StrategyState {
  double t = 0.0;
  double w = 1.0;
  BinnedTheta theta;
  double pi_lambda = 1.0;
};

enum class Regime { full, null, interior, max_coverage };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::full: return "full";
    case Regime::null: return "null";
    case Regime::interior: return "interior";
    case Regime::max_coverage: return "max_coverage";
  }
  return "?";
}

struct StrategyDecision {
  double u_star = 0.0;
  Regime regime = Regime::null;
  std::vector<double> thresholds;  // (theta_F, theta_N) or (theta_L)
  double foc_residual = 0.0;
  double ftilde_at_opt = 0.0;
  bool certificate_ok = true;
  std::string warning;
};

// Driver integrand
//   f(t, w, theta, u) = -w a q(u) - pi int (w + theta(z)) [e^{-a (z - Phi(z, u))} - 1] F1(dz),
// a = eta e^{r (T - t)}, with the expected-value premium q, and its exact
// derivative in u,
//   df/du = a pi int dPhi/du (z, u) [w (1 + theta_R) - (w + theta(z)) e^{-a (z - Phi(z, u))}] F1(dz).
class StrategyEvaluator {
 public:
  StrategyEvaluator(const ModelParams& p, const Contract& c, int bins = 8, int order = 64)
      : params_(p), contract_(c), integ_(p.claim_dist, bins, order) {
    if (c.kind == ContractKind::limited_stop_loss && !(c.coverage > 0.0))
      throw std::invalid_argument("limited stop-loss coverage must be > 0");
    hi_ = c.kind == ContractKind::proportional ? 1.0 : search_cap(p.claim_dist);
  }

  const ModelParams& params() const { return params_; }
  const Contract& contract() const { return contract_; }
  const MarkIntegrator& integrator() const { return integ_; }
  int bins() const { return integ_.bins(); }

  // Upper end of the searched control interval (beyond it the control is
  // equivalent to null reinsurance).
  double search_hi() const { return hi_; }

  bool is_null(double u) const {
    return contract_.kind == ContractKind::proportional ? u >= 1.0 : u >= hi_;
  }

  double ftilde(const StrategyState& s, double u) const {
    check(s);
    contract_.require_domain(u);
    if (is_null(u)) return 0.0;
    const double a = params_.effective_aversion(s.t);
    const double q = premium_rate(contract_, u, s.pi_lambda, params_);
    const double integral = integ_.integrate(
        [&](double z, int j) { return (s.w + s.theta[j]) * std::expm1(-a * ceded_unchecked(contract_, z, u)); },
        kinks(u));
    return -s.w * a * q - s.pi_lambda * integral;
  }

  double dftilde(const StrategyState& s, double u) const {
    check(s);
    const double a = params_.effective_aversion(s.t);
    const double load = s.w * (1.0 + params_.safety_loading);
    const double integral = integ_.integrate(
        [&](double z, int j) {
          const double d = dphi(z, u);
          if (d == 0.0) return 0.0;
          return d * (load - (s.w + s.theta[j]) * std::exp(-a * ceded_unchecked(contract_, z, u)));
        },
        kinks(u));
    return a * s.pi_lambda * integral;
  }

  // First-order-condition residual df/du / (a pi w).
  double foc_residual(const StrategyState& s, double u) const {
    return dftilde(s, u) / (params_.effective_aversion(s.t) * s.pi_lambda * s.w);
  }

  // Sign-equivalent slope: df/du divided by a pi w int dPhi/du dF. At the top
  // of the support the interval mass vanishes and the conditional limit is used.
  double slope(const StrategyState& s, double u) const {
    if (contract_.kind != ContractKind::proportional && u >= hi_) {
      const int top = bins() - 1;
      return params_.safety_loading - s.theta[top] / s.w;
    }
    const double m = integ_.integrate([&](double z, int) { return dphi(z, u); }, kinks(u));
    if (!(m > 0.0)) return 0.0;
    return dftilde(s, u) / (params_.effective_aversion(s.t) * s.pi_lambda * s.w * m);
  }

  // (theta_F, theta_N) for proportional reinsurance.
  std::pair<double, double> proportional_thresholds(const StrategyState& s) const {
    check(s);
    const double a = params_.effective_aversion(s.t);
    const double ez = integ_.integrate([](double z, int) { return z; });
    const double f = integ_.integrate([&](double z, int j) { return (s.w + s.theta[j]) / s.w * z * std::exp(-a * z); });
    const double n = integ_.integrate([&](double z, int j) { return (s.w + s.theta[j]) / s.w * z; });
    return {f / ez - 1.0, n / ez - 1.0};
  }

  // theta_L for a layer of width b (b = +inf gives excess-of-loss).
  double layer_threshold(const StrategyState& s, double b) const {
    check(s);
    const double a = params_.effective_aversion(s.t);
    std::vector<double> k;
    if (std::isfinite(b)) k.push_back(params_.claim_dist.cdf(b));
    const double mass = integ_.integrate([&](double z, int) { return z <= b ? 1.0 : 0.0; }, k);
    if (!(mass > 0.0)) throw std::invalid_argument("layer threshold: F1(b) = 0");
    const double v = integ_.integrate(
        [&](double z, int j) { return z <= b ? (s.w + s.theta[j]) / s.w * std::exp(-a * z) : 0.0; }, k);
    return v / mass - 1.0;
  }

  std::vector<double> thresholds(const StrategyState& s) const {
    switch (contract_.kind) {
      case ContractKind::proportional: {
        const auto [f, n] = proportional_thresholds(s);
        return {f, n};
      }
      case ContractKind::excess_of_loss: return {layer_threshold(s, kUnbounded)};
      case ContractKind::limited_stop_loss: return {layer_threshold(s, contract_.coverage)};
    }
    return {};
  }

  StrategyDecision maximize(const StrategyState& s) const {
    check(s);
    StrategyDecision d;
    d.thresholds = thresholds(s);
    constexpr int kProbe = 32;
    const double lo = 0.0, hi = hi_;
    std::vector<double> g(kProbe);
    for (int k = 0; k < kProbe; ++k) g[k] = slope(s, lo + (hi - lo) * k / (kProbe - 1));
    if (!std::all_of(g.begin(), g.end(), [](double x) { return std::isfinite(x); }))
      throw std::runtime_error("maximize_ftilde: non-finite integrand");
    bool nonincreasing = true;
    for (int k = 0; k + 1 < kProbe; ++k)
      if (g[k + 1] > g[k] + 1e-12 * (1.0 + std::abs(g[k]))) nonincreasing = false;
    int changes = 0;
    bool bad_change = false;
    for (int k = 0; k + 1 < kProbe; ++k) {
      const bool pos_a = g[k] > 0.0, pos_b = g[k + 1] > 0.0;
      if (pos_a != pos_b) {
        ++changes;
        if (!pos_a) bad_change = true;
      }
    }
    d.certificate_ok = nonincreasing || (changes <= 1 && !bad_change);
    if (!d.certificate_ok) {
      d.warning = "concavity certificate failed; dense-grid search used";
      dense_search(s, d);
      return d;
    }
    if (g.front() <= 0.0) {
      finish(s, d, lo);
    } else if (g.back() >= 0.0) {
      finish(s, d, contract_.u_null());
    } else {
      // Bracket from the probes, then bisection on the slope.
      int k = 0;
      while (k + 1 < kProbe && g[k + 1] > 0.0) ++k;
      double a = lo + (hi - lo) * k / (kProbe - 1);
      double b = lo + (hi - lo) * (k + 1) / (kProbe - 1);
      while (b - a > 1e-12 * std::max(1.0, hi)) {
        const double m = 0.5 * (a + b);
        if (slope(s, m) > 0.0)
          a = m;
        else
          b = m;
      }
      finish(s, d, 0.5 * (a + b));
    }
    return d;
  }

 private:
  static double search_cap(const MarkDistribution& dist) {
    if (dist.bounded()) return dist.support_cap();
    return dist.quantile(1.0 - 1e-14);
  }

  void check(const StrategyState& s) const {
    if (!(s.w > 0.0)) throw std::invalid_argument("strategy: w must be > 0");
    if (!(s.pi_lambda > 0.0)) throw std::invalid_argument("strategy: pi(lambda) must be > 0");
    if (static_cast<int>(s.theta.values.size()) != bins())
      throw std::invalid_argument("strategy: theta has the wrong number of bins");
  }

  // dPhi/du (z, u)
  double dphi(double z, double u) const {
    switch (contract_.kind) {
      case ContractKind::proportional: return z;
      case ContractKind::excess_of_loss: return z > u ? 1.0 : 0.0;
      case ContractKind::limited_stop_loss: return (z > u && z <= u + contract_.coverage) ? 1.0 : 0.0;
    }
    return 0.0;
  }

  std::vector<double> kinks(double u) const {
    std::vector<double> k;
    if (contract_.kind == ContractKind::proportional || std::isinf(u)) return k;
    k.push_back(params_.claim_dist.cdf(u));
    if (contract_.kind == ContractKind::limited_stop_loss) k.push_back(params_.claim_dist.cdf(u + contract_.coverage));
    return k;
  }

  Regime classify(double u) const {
    if (is_null(u)) return Regime::null;
    if (u <= 0.0) return contract_.kind == ContractKind::limited_stop_loss ? Regime::max_coverage : Regime::full;
    return Regime::interior;
  }

  void finish(const StrategyState& s, StrategyDecision& d, double u) const {
    if (is_null(u)) u = contract_.u_null();
    double best = ftilde(s, u);
    // Never do worse than full protection or null reinsurance.
    const double f0 = ftilde(s, 0.0);
    if (f0 > best) {
      best = f0;
      u = 0.0;
    }
    if (0.0 > best) {
      best = 0.0;
      u = contract_.u_null();
    }
    d.u_star = u;
    d.regime = classify(u);
    d.ftilde_at_opt = best;
    d.foc_residual = d.regime == Regime::interior ? foc_residual(s, u) : 0.0;
  }

  void dense_search(const StrategyState& s, StrategyDecision& d) const {
    constexpr int kGrid = 4000;
    const double lo = 0.0, hi = hi_;
    auto at = [&](int k) { return lo + (hi - lo) * k / kGrid; };
    int best_k = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= kGrid; ++k) {
      const double v = ftilde(s, at(k));
      if (v > best) {
        best = v;
        best_k = k;
      }
    }
    // Refine inside the neighbouring cells by bisection on the analytic
    // derivative when it brackets a local maximum.
    double u = at(best_k);
    double a = at(std::max(0, best_k - 1)), b = at(std::min(kGrid, best_k + 1));
    if (dftilde(s, a) > 0.0 && dftilde(s, b) < 0.0) {
      while (b - a > 1e-12 * std::max(1.0, hi)) {
        const double m = 0.5 * (a + b);
        if (dftilde(s, m) > 0.0)
          a = m;
        else
          b = m;
      }
      const double ur = 0.5 * (a + b);
      if (ftilde(s, ur) >= best) u = ur;
    }
    finish(s, d, u);
  }

  ModelParams params_;
  Contract contract_;
  MarkIntegrator integ_;
  double hi_;
};

// Free-function forms.
inline double ftilde(const StrategyState& s, double u, const Contract& c, const ModelParams& p, int order = 64) {
  return StrategyEvaluator(p, c, static_cast<int>(s.theta.values.size()), order).ftilde(s, u);
}

inline StrategyDecision maximize_ftilde(const StrategyState& s, const Contract& c, const ModelParams& p,
                                        int order = 64) {
  return StrategyEvaluator(p, c, static_cast<int>(s.theta.values.size()), order).maximize(s);
}

inline std::pair<double, double> proportional_thresholds(const StrategyState& s, const ModelParams& p,
                                                         int order = 64) {
  return StrategyEvaluator(p, Contract::proportional(), static_cast<int>(s.theta.values.size()), order)
      .proportional_thresholds(s);
}

inline double lsl_threshold(const StrategyState& s, const ModelParams& p, double b, int order = 64) {
  if (!(b > 0.0)) throw std::invalid_argument("lsl_threshold: coverage must be > 0");
  return StrategyEvaluator(p, Contract::limited_stop_loss(b), static_cast<int>(s.theta.values.size()), order)
      .layer_threshold(s, b);
}

inline double xl_threshold(const StrategyState& s, const ModelParams& p, int order = 64) {
  return StrategyEvaluator(p, Contract::excess_of_loss(), static_cast<int>(s.theta.values.size()), order)
      .layer_threshold(s, kUnbounded);
}

}  // namespace clusterre
