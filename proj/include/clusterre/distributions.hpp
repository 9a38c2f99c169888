#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterre/quadrature.hpp"
#include "clusterre/random.hpp"

namespace clusterre {

enum class MarkKind { point_mass, uniform, exponential };

// Law of a strictly positive mark (claim size or external shock).
//
//   point_mass(z0)          Z = z0
//   uniform(a, b)           Z ~ U(a, b), 0 <= a < b
//   exponential(rate, cap)  Z = min(E, cap), E ~ Exp(rate); cap = +inf gives
//                           the untruncated law. A finite cap leaves an atom of
//                           mass exp(-rate*cap) at the cap.
class MarkDistribution {
 public:
  static MarkDistribution point_mass(double z0) { return MarkDistribution(MarkKind::point_mass, z0, 0.0); }
  static MarkDistribution uniform(double a, double b) { return MarkDistribution(MarkKind::uniform, a, b); }
  static MarkDistribution exponential(double rate,
                                      double cap = std::numeric_limits<double>::infinity()) {
    return MarkDistribution(MarkKind::exponential, rate, cap);
  }

  MarkDistribution() : MarkDistribution(MarkKind::point_mass, 1.0, 0.0) {}

  MarkKind kind() const { return kind_; }
  double p1() const { return p1_; }
  double p2() const { return p2_; }

  bool bounded() const { return std::isfinite(support_cap()); }

  double support_cap() const {
    switch (kind_) {
      case MarkKind::point_mass: return p1_;
      case MarkKind::uniform: return p2_;
      case MarkKind::exponential: return p2_;
    }
    return 0.0;
  }

  double support_floor() const {
    switch (kind_) {
      case MarkKind::point_mass: return p1_;
      case MarkKind::uniform: return p1_;
      case MarkKind::exponential: return 0.0;
    }
    return 0.0;
  }

  // P(Z <= z)
  double cdf(double z) const {
    switch (kind_) {
      case MarkKind::point_mass: return z >= p1_ ? 1.0 : 0.0;
      case MarkKind::uniform:
        if (z <= p1_) return 0.0;
        if (z >= p2_) return 1.0;
        return (z - p1_) / (p2_ - p1_);
      case MarkKind::exponential:
        if (z <= 0.0) return 0.0;
        if (z >= p2_) return 1.0;
        return -std::expm1(-p1_ * z);
    }
    return 0.0;
  }

  double survival(double z) const { return 1.0 - cdf(z); }

  // Generalised inverse on (0, 1).
  double quantile(double p) const {
    switch (kind_) {
      case MarkKind::point_mass: return p1_;
      case MarkKind::uniform: return p1_ + (p2_ - p1_) * p;
      case MarkKind::exponential: {
        const double z = -std::log1p(-p) / p1_;
        return std::min(z, p2_);
      }
    }
    return 0.0;
  }

  // Points in (0, 1) where the quantile function is not smooth.
  std::vector<double> quantile_breakpoints() const {
    if (kind_ == MarkKind::exponential && std::isfinite(p2_)) return {-std::expm1(-p1_ * p2_)};
    return {};
  }

  double sample(Rng& rng) const { return quantile(rng.uniform()); }

  double mean() const { return moment(1); }

  // E[Z^k]
  double moment(int k) const {
    if (k == 0) return 1.0;
    switch (kind_) {
      case MarkKind::point_mass: return std::pow(p1_, k);
      case MarkKind::uniform:
        return (std::pow(p2_, k + 1) - std::pow(p1_, k + 1)) / ((k + 1) * (p2_ - p1_));
      case MarkKind::exponential: {
        const double r = p1_;
        double fact = 1.0;
        for (int i = 2; i <= k; ++i) fact *= i;
        if (!std::isfinite(p2_)) return fact / std::pow(r, k);
        // k!/r^k * P(k+1, r D) + D^k e^{-r D}
        const double x = r * p2_;
        double term = 1.0, series = 1.0;
        for (int i = 1; i <= k; ++i) {
          term *= x / i;
          series += term;
        }
        const double lower = 1.0 - std::exp(-x) * series;
        return fact / std::pow(r, k) * lower + std::pow(p2_, k) * std::exp(-x);
      }
    }
    return 0.0;
  }

  // Whether E[exp(a Z)] < infinity.
  bool mgf_finite(double a) const {
    if (bounded() || a <= 0.0) return true;
    return a < p1_;
  }

  // Integral of the survival function over [lo, hi] (hi may be +inf).
  double integrated_survival(double lo, double hi) const {
    lo = std::max(lo, 0.0);
    if (hi <= lo) return 0.0;
    switch (kind_) {
      case MarkKind::point_mass: return std::max(0.0, std::min(hi, p1_) - lo);
      case MarkKind::uniform: {
        double acc = std::max(0.0, std::min(hi, p1_) - lo);
        const double a = std::max(lo, p1_), b = std::min(hi, p2_);
        if (b > a) {
          // S(z) = (p2 - z) / (p2 - p1)
          const double w = p2_ - p1_;
          acc += ((p2_ - a) * (p2_ - a) - (p2_ - b) * (p2_ - b)) / (2.0 * w);
        }
        return acc;
      }
      case MarkKind::exponential: {
        const double b = std::min(hi, p2_);
        if (b <= lo) return 0.0;
        const double tail = std::isfinite(b) ? std::exp(-p1_ * b) : 0.0;
        return (std::exp(-p1_ * lo) - tail) / p1_;
      }
    }
    return 0.0;
  }

  // E[g(Z)] for smooth g by Gauss-Legendre over the continuous part plus atoms.
  template <class G>
  double expect(G&& g, const GaussLegendre& rule) const {
    switch (kind_) {
      case MarkKind::point_mass: return g(p1_);
      case MarkKind::uniform:
        return rule.integrate([&](double z) { return g(z); }, p1_, p2_, 4) / (p2_ - p1_);
      case MarkKind::exponential: {
        const double r = p1_;
        const double upper = std::isfinite(p2_) ? p2_ : 40.0 / r;
        double acc = rule.integrate([&](double z) { return g(z) * r * std::exp(-r * z); }, 0.0, upper, 16);
        if (std::isfinite(p2_)) acc += g(p2_) * std::exp(-r * p2_);
        return acc;
      }
    }
    return 0.0;
  }

  // Discrete representation {(z_n, w_n)} with sum_n w_n g(z_n) ~ E[g(Z)]:
  // Gauss-Legendre nodes on the continuous part plus the atoms.
  struct Node {
    double z;
    double w;
  };
  std::vector<Node> quadrature_nodes(const GaussLegendre& rule, int panels = 4) const {
    std::vector<Node> out;
    auto add_panelled = [&](double lo, double hi, int np, auto density) {
      const double h = (hi - lo) / np;
      for (int p = 0; p < np; ++p) {
        const double a = lo + p * h;
        const double half = 0.5 * h, mid = a + half;
        for (int i = 0; i < rule.order(); ++i) {
          const double z = mid + half * rule.nodes()[i];
          out.push_back({z, half * rule.weights()[i] * density(z)});
        }
      }
    };
    switch (kind_) {
      case MarkKind::point_mass: out.push_back({p1_, 1.0}); break;
      case MarkKind::uniform: {
        const double d = 1.0 / (p2_ - p1_);
        add_panelled(p1_, p2_, panels, [d](double) { return d; });
        break;
      }
      case MarkKind::exponential: {
        const double r = p1_;
        const double upper = std::isfinite(p2_) ? p2_ : 40.0 / r;
        add_panelled(0.0, upper, 4 * panels, [r](double z) { return r * std::exp(-r * z); });
        if (std::isfinite(p2_)) out.push_back({p2_, std::exp(-r * p2_)});
        break;
      }
    }
    return out;
  }

  std::string to_string() const {
    char buf[128];
    switch (kind_) {
      case MarkKind::point_mass: std::snprintf(buf, sizeof buf, "point(%.17g)", p1_); break;
      case MarkKind::uniform: std::snprintf(buf, sizeof buf, "uniform(%.17g, %.17g)", p1_, p2_); break;
      case MarkKind::exponential:
        if (std::isfinite(p2_))
          std::snprintf(buf, sizeof buf, "truncexp(%.17g, %.17g)", p1_, p2_);
        else
          std::snprintf(buf, sizeof buf, "exponential(%.17g)", p1_);
        break;
    }
    return buf;
  }

  // Parses "point(z0)", "uniform(a, b)", "truncexp(rate, cap)", "exponential(rate)".
  static MarkDistribution parse(const std::string& text) {
    const auto open = text.find('(');
    const auto close = text.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
      throw std::invalid_argument("distribution must look like kind(args): '" + text + "'");
    std::string kind = text.substr(0, open);
    kind.erase(std::remove_if(kind.begin(), kind.end(), ::isspace), kind.end());
    std::string args = text.substr(open + 1, close - open - 1);
    std::replace(args.begin(), args.end(), ',', ' ');
    std::istringstream in(args);
    std::vector<double> v;
    std::string tok;
    while (in >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::invalid_argument("bad number '" + tok + "' in distribution '" + text + "'");
      }
    }
    auto need = [&](std::size_t n) {
      if (v.size() != n)
        throw std::invalid_argument("distribution '" + kind + "' expects " + std::to_string(n) + " parameter(s)");
    };
    if (kind == "point") {
      need(1);
      return point_mass(v[0]);
    }
    if (kind == "uniform") {
      need(2);
      return uniform(v[0], v[1]);
    }
    if (kind == "truncexp") {
      need(2);
      return exponential(v[0], v[1]);
    }
    if (kind == "exponential") {
      need(1);
      return exponential(v[0]);
    }
    throw std::invalid_argument("unknown distribution kind '" + kind + "'");
  }

  friend bool operator==(const MarkDistribution&, const MarkDistribution&) = default;

 private:
  MarkDistribution(MarkKind kind, double p1, double p2) : kind_(kind), p1_(p1), p2_(p2) {
    switch (kind_) {
      case MarkKind::point_mass:
        if (!(p1_ > 0.0) || !std::isfinite(p1_)) throw std::invalid_argument("point mass must be > 0");
        break;
      case MarkKind::uniform:
        if (!(p1_ >= 0.0) || !(p2_ > p1_) || !std::isfinite(p2_))
          throw std::invalid_argument("uniform(a, b) needs 0 <= a < b");
        break;
      case MarkKind::exponential:
        if (!(p1_ > 0.0) || !std::isfinite(p1_)) throw std::invalid_argument("exponential rate must be > 0");
        if (!(p2_ > 0.0)) throw std::invalid_argument("exponential cap must be > 0");
        break;
    }
  }

  MarkKind kind_;
  double p1_;
  double p2_;
};

}  // namespace clusterre
