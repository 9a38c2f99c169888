#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterre/distributions.hpp"

namespace clusterre {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

enum class ExcitationKind { proportional, constant };

// Self-excitation kernel l(z): proportional l(z) = a z, or constant l(z) = a.
struct Excitation {
  ExcitationKind kind = ExcitationKind::proportional;
  double a = 0.5;

  double operator()(double z) const { return kind == ExcitationKind::proportional ? a * z : a; }

  // E[l(Z)^k] under the claim law.
  double moment(const MarkDistribution& claims, int k) const {
    if (k == 0) return 1.0;
    if (kind == ExcitationKind::constant) return std::pow(a, k);
    return std::pow(a, k) * claims.moment(k);
  }

  // Whether E[exp(s l(Z))] < infinity.
  bool mgf_finite(const MarkDistribution& claims, double s) const {
    if (kind == ExcitationKind::constant || a == 0.0) return true;
    return claims.mgf_finite(s * a);
  }

  std::string to_string() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s(%.17g)", kind == ExcitationKind::proportional ? "proportional" : "constant", a);
    return buf;
  }

  static Excitation parse(const std::string& text) {
    const auto open = text.find('(');
    const auto close = text.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
      throw std::invalid_argument("excitation must look like proportional(a) or constant(a): '" + text + "'");
    std::string kind = text.substr(0, open);
    kind.erase(std::remove_if(kind.begin(), kind.end(), ::isspace), kind.end());
    const std::string arg = text.substr(open + 1, close - open - 1);
    double a = 0.0;
    try {
      std::size_t used = 0;
      a = std::stod(arg, &used);
      if (arg.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(arg);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad excitation coefficient in '" + text + "'");
    }
    if (kind == "proportional") return {ExcitationKind::proportional, a};
    if (kind == "constant") return {ExcitationKind::constant, a};
    throw std::invalid_argument("unknown excitation kind '" + kind + "'");
  }

  friend bool operator==(const Excitation&, const Excitation&) = default;
};

// Static coefficients of the contagion model, the market and the preferences.
struct ModelParams {
  double alpha = 2.0;     // decay rate of the intensity
  double beta_rev = 1.0;  // reversion level
  double lambda0 = 1.5;   // initial intensity
  double rho = 0.5;       // rate of the external shock stream
  MarkDistribution claim_dist = MarkDistribution::uniform(0.0, 1.0);
  MarkDistribution shock_dist = MarkDistribution::uniform(0.0, 1.0);
  Excitation excitation{};
  double horizon = 1.0;
  double rate_r = 0.05;
  double eta = 1.0;
  double initial_capital = 1.0;
  double insurance_premium_rate = 2.0;
  double safety_loading = 0.3;

  // Long-run level of the shot-noise part: beta + rho E[Z2] / alpha.
  double beta_tilde() const { return beta_rev + rho * shock_dist.mean() / alpha; }

  // Risk-aversion coefficient seen at time t: eta e^{r (T - t)}.
  double effective_aversion(double t) const { return eta * std::exp(rate_r * (horizon - t)); }

  // Throws std::invalid_argument naming the first offending field.
  void validate() const {
    auto require = [](bool ok, const char* field, const char* what) {
      if (!ok) throw std::invalid_argument(std::string(field) + ": " + what);
    };
    require(alpha > 0.0 && std::isfinite(alpha), "alpha", "must be finite and > 0");
    require(beta_rev >= 0.0 && std::isfinite(beta_rev), "beta_rev", "must be finite and >= 0");
    require(lambda0 > 0.0 && std::isfinite(lambda0), "lambda0", "must be finite and > 0");
    require(rho >= 0.0 && std::isfinite(rho), "rho", "must be finite and >= 0");
    require(excitation.a >= 0.0 && std::isfinite(excitation.a), "excitation", "coefficient must be finite and >= 0");
    require(horizon > 0.0 && std::isfinite(horizon), "horizon", "must be finite and > 0");
    require(rate_r >= 0.0 && std::isfinite(rate_r), "rate_r", "must be finite and >= 0");
    require(eta > 0.0 && std::isfinite(eta), "eta", "must be finite and > 0");
    require(initial_capital >= 0.0 && std::isfinite(initial_capital), "initial_capital", "must be finite and >= 0");
    require(insurance_premium_rate >= 0.0 && std::isfinite(insurance_premium_rate), "insurance_premium_rate",
            "must be finite and >= 0");
    require(safety_loading > 0.0 && std::isfinite(safety_loading), "safety_loading", "must be finite and > 0");
  }
};

// (e^{r t} - 1) / r, with the r -> 0 limit t.
inline double accumulation_factor(double r, double t) {
  if (r == 0.0) return t;
  return std::expm1(r * t) / r;
}

// Wealth without reinsurance and without claims at time t.
inline double deterministic_wealth(const ModelParams& p, double t) {
  return p.initial_capital * std::exp(p.rate_r * t) + p.insurance_premium_rate * accumulation_factor(p.rate_r, t);
}

// Integral of exp(-alpha s) over [0, t].
inline double decay_integral(double alpha, double t) { return -std::expm1(-alpha * t) / alpha; }

struct IntensityState {
  double lambda = 1.0;
  double t_last = 0.0;
};

// beta + (lambda - beta) e^{-alpha dt}
inline double intensity_decay(const IntensityState& s, double dt, const ModelParams& p) {
  if (!(dt >= 0.0)) throw std::invalid_argument("intensity_decay: dt must be >= 0");
  return p.beta_rev + (s.lambda - p.beta_rev) * std::exp(-p.alpha * dt);
}

// Closed-form integral of the decaying intensity over [t_last, t_last + dt].
inline double intensity_decay_integral(double lambda, double dt, const ModelParams& p) {
  return p.beta_rev * dt + (lambda - p.beta_rev) * decay_integral(p.alpha, dt);
}

inline IntensityState apply_claim_jump(const IntensityState& s, double z, const ModelParams& p) {
  if (!(z > 0.0)) throw std::invalid_argument("apply_claim_jump: claim size must be > 0");
  return {s.lambda + p.excitation(z), s.t_last};
}

inline IntensityState apply_external_jump(const IntensityState& s, double z) {
  if (!(z > 0.0)) throw std::invalid_argument("apply_external_jump: shock mark must be > 0");
  return {s.lambda + z, s.t_last};
}

enum class ContractKind { proportional, excess_of_loss, limited_stop_loss };

inline const char* to_string(ContractKind k) {
  switch (k) {
    case ContractKind::proportional: return "proportional";
    case ContractKind::excess_of_loss: return "excess_of_loss";
    case ContractKind::limited_stop_loss: return "limited_stop_loss";
  }
  return "?";
}

inline ContractKind parse_contract_kind(const std::string& s) {
  if (s == "proportional") return ContractKind::proportional;
  if (s == "excess_of_loss" || s == "xl") return ContractKind::excess_of_loss;
  if (s == "limited_stop_loss" || s == "lsl") return ContractKind::limited_stop_loss;
  throw std::invalid_argument("unknown contract kind '" + s + "'");
}

// Reinsurance family with control domain [u_M, u_N]. For excess-of-loss and
// limited stop-loss u_N is the unbounded sentinel (retain everything).
struct Contract {
  ContractKind kind = ContractKind::proportional;
  double coverage = 0.0;  // layer width b of the limited stop-loss treaty

  static Contract proportional() { return {ContractKind::proportional, 0.0}; }
  static Contract excess_of_loss() { return {ContractKind::excess_of_loss, 0.0}; }
  static Contract limited_stop_loss(double b) {
    if (!(b > 0.0)) throw std::invalid_argument("limited stop-loss coverage must be > 0");
    return {ContractKind::limited_stop_loss, b};
  }

  double u_max_protection() const { return 0.0; }
  double u_null() const { return kind == ContractKind::proportional ? 1.0 : kUnbounded; }

  bool in_domain(double u) const {
    if (std::isnan(u) || u < 0.0) return false;
    return kind != ContractKind::proportional || u <= 1.0;
  }

  void require_domain(double u) const {
    if (!in_domain(u)) throw std::invalid_argument("control outside the contract domain");
  }

  friend bool operator==(const Contract&, const Contract&) = default;
};

// Retained part Phi(z, u) of a claim of size z.
inline double retention(const Contract& c, double z, double u) {
  if (!(z > 0.0)) throw std::invalid_argument("retention: claim size must be > 0");
  c.require_domain(u);
  switch (c.kind) {
    case ContractKind::proportional: return u * z;
    case ContractKind::excess_of_loss: return std::min(u, z);
    case ContractKind::limited_stop_loss: {
      if (std::isinf(u)) return z;
      return z - std::max(z - u, 0.0) + std::max(z - u - c.coverage, 0.0);
    }
  }
  return z;
}

// Ceded part z - Phi(z, u) without domain checks (hot loops).
inline double ceded_unchecked(const Contract& c, double z, double u) {
  switch (c.kind) {
    case ContractKind::proportional: return (1.0 - u) * z;
    case ContractKind::excess_of_loss: return std::max(z - u, 0.0);
    case ContractKind::limited_stop_loss: return std::max(z - u, 0.0) - std::max(z - u - c.coverage, 0.0);
  }
  return 0.0;
}

// E[Z - Phi(Z, u)] in closed form.
inline double expected_ceded(const Contract& c, double u, const MarkDistribution& claims) {
  c.require_domain(u);
  switch (c.kind) {
    case ContractKind::proportional: return claims.mean() * (1.0 - u);
    case ContractKind::excess_of_loss: return std::isinf(u) ? 0.0 : claims.integrated_survival(u, kUnbounded);
    case ContractKind::limited_stop_loss:
      return std::isinf(u) ? 0.0 : claims.integrated_survival(u, u + c.coverage);
  }
  return 0.0;
}

// Expected-value-principle reinsurance premium rate (1 + theta_R) pi(lambda) E[Z - Phi(Z, u)].
inline double premium_rate(const Contract& c, double u, double pi_lambda, const ModelParams& p) {
  if (!(pi_lambda > 0.0)) throw std::invalid_argument("premium_rate: filtered intensity must be > 0");
  return (1.0 + p.safety_loading) * pi_lambda * expected_ceded(c, u, p.claim_dist);
}

struct AssumptionCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.pass; });
  }
};

// Reports whether the configured mark laws satisfy the exponential-moment
// conditions needed by an experiment that uses exponents up to max_exponent.
inline ValidationReport validate_assumptions(const ModelParams& p, double max_exponent) {
  ValidationReport rep;
  const auto& f1 = p.claim_dist;
  const auto& f2 = p.shock_dist;

  // Some small exponent must give finite moments for the change of measure.
  {
    const double eps = 1e-6;
    const bool ok = p.excitation.mgf_finite(f1, eps) && f2.mgf_finite(eps);
    rep.checks.push_back({"measure_change_exponential_moment", ok,
                          ok ? "E[exp(eps l(Z1))] and E[exp(eps Z2)] finite for small eps"
                             : "no small exponential moment"});
  }
  // All polynomial moments (needed by the moment recursion and filter moments).
  rep.checks.push_back({"polynomial_moments", true, "all supported mark laws have finite moments of every order"});

  const bool claims_ok = f1.mgf_finite(max_exponent) && p.excitation.mgf_finite(f1, max_exponent);
  const bool shocks_ok = f2.mgf_finite(max_exponent);
  {
    std::string detail = "bounded support or exponent below the rate";
    if (!claims_ok) detail = "claim law " + f1.to_string() + " has no exponential moment at the requested order";
    rep.checks.push_back({"claim_exponential_moments", claims_ok, detail});
  }
  {
    std::string detail = "bounded support or exponent below the rate";
    if (!shocks_ok) detail = "shock law " + f2.to_string() + " has no exponential moment at the requested order";
    rep.checks.push_back({"shock_exponential_moments", shocks_ok, detail});
  }
  rep.checks.push_back({"max_protection_premium_moment", claims_ok && shocks_ok,
                        "expected-value premium is bounded by (1+theta_R) E[Z] pi(lambda); follows from the "
                        "exponential moments of the intensity"});
  return rep;
}

}  // namespace clusterre
