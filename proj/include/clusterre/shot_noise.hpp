#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "clusterre/model.hpp"
#include "clusterre/quadrature.hpp"
#include "clusterre/random.hpp"

namespace clusterre {

// Law of the shot-noise part S of the intensity accumulated since the last
// claim, under the exponential tilt exp(-int S du).
//
// Between claims the hidden intensity is D + S with D deterministic given the
// post-claim value and S = sum of shocks z e^{-alpha a} (a = age of the shock).
// Tilting a shock of age a by exp(-z k(a)), k(a) = (1 - e^{-alpha a}) / alpha,
// leaves a Poisson cloud with intensity rho e^{-z k(a)} F2(dz) da on [0, tau].
// Hence, at time tau after the claim,
//   log E[e^{-int_0^tau S}] = -rho int_0^tau (1 - E[e^{-Z k(a)}]) da,
//   j-th cumulant of S      =  rho int_0^tau E[Z^j e^{-Z k(a)}] e^{-j alpha a} da.
// Both are tabulated on a fine age grid and completed by Gauss-Legendre.
class TiltedShotNoise {
 public:
  static constexpr int kMaxOrder = 8;

  struct Cumulants {
    double tau = 0.0;
    double log_mass = 0.0;                  // log E[exp(-int_0^tau S)]
    std::array<double, kMaxOrder + 1> kappa{};  // kappa[j], j >= 1
  };

  TiltedShotNoise(const ModelParams& p, double max_age, int cells = 256)
      : alpha_(p.alpha), rho_(p.rho), shock_(p.shock_dist), rule_(8), max_age_(max_age) {
    if (!(max_age > 0.0)) throw std::invalid_argument("TiltedShotNoise: max_age must be > 0");
    GaussLegendre inner(32);
    nodes_ = shock_.quadrature_nodes(inner, 4);
    h_ = max_age / cells;
    table_.assign(cells + 1, {});
    for (int c = 0; c < cells; ++c) {
      Row add = integrate(c * h_, (c + 1) * h_);
      for (int j = 0; j <= kMaxOrder; ++j) table_[c + 1][j] = table_[c][j] + add[j];
    }
  }

  double alpha() const { return alpha_; }
  double rho() const { return rho_; }

  Cumulants at(double tau) const {
    if (!(tau >= 0.0)) throw std::invalid_argument("TiltedShotNoise: negative age");
    Cumulants out;
    out.tau = tau;
    if (rho_ == 0.0 || tau == 0.0) return out;
    const int cells = static_cast<int>(table_.size()) - 1;
    int c = std::min(static_cast<int>(tau / h_), cells);
    Row acc = table_[c];
    double lo = c * h_;
    // Beyond the table, integrate the excess in cell-sized panels.
    while (tau - lo > h_) {
      Row add = integrate(lo, lo + h_);
      for (int j = 0; j <= kMaxOrder; ++j) acc[j] += add[j];
      lo += h_;
    }
    Row add = integrate(lo, tau);
    for (int j = 0; j <= kMaxOrder; ++j) acc[j] += add[j];
    out.log_mass = acc[0];
    for (int j = 1; j <= kMaxOrder; ++j) out.kappa[j] = acc[j];
    return out;
  }

  // Raw moments E[S^j], j = 0..k, from the cumulants.
  static std::vector<double> raw_moments(const Cumulants& c, int k) {
    if (k > kMaxOrder) throw std::invalid_argument("TiltedShotNoise: moment order too high");
    std::vector<double> mu(k + 1, 0.0);
    mu[0] = 1.0;
    for (int n = 1; n <= k; ++n) {
      double binom = 1.0;  // C(n-1, m-1)
      double s = 0.0;
      for (int m = 1; m <= n; ++m) {
        s += binom * c.kappa[m] * mu[n - m];
        binom = binom * (n - m) / m;
      }
      mu[n] = s;
    }
    return mu;
  }

  // Exact draw of S at age tau by thinning a Poisson(rho tau) cloud of
  // untilted shocks with acceptance probability exp(-z k(a)).
  double sample(double tau, Rng& rng) const {
    if (rho_ == 0.0 || tau <= 0.0) return 0.0;
    const auto k = rng.poisson(rho_ * tau);
    double s = 0.0;
    for (std::uint64_t i = 0; i < k; ++i) {
      const double a = tau * rng.uniform();
      const double z = shock_.sample(rng);
      if (rng.uniform() < std::exp(-z * decay_integral(alpha_, a))) s += z * std::exp(-alpha_ * a);
    }
    return s;
  }

 private:
  using Row = std::array<double, kMaxOrder + 1>;

  Row integrand(double a) const {
    Row g{};
    const double kap = decay_integral(alpha_, a);
    const double damp = std::exp(-alpha_ * a);
    for (const auto& n : nodes_) {
      const double tilt = std::exp(-n.z * kap);
      g[0] -= n.w * (1.0 - tilt);
      double zp = tilt;
      double dp = 1.0;
      for (int j = 1; j <= kMaxOrder; ++j) {
        zp *= n.z;
        dp *= damp;
        g[j] += n.w * zp * dp;
      }
    }
    for (auto& x : g) x *= rho_;
    return g;
  }

  Row integrate(double lo, double hi) const {
    Row acc{};
    if (hi <= lo) return acc;
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (int i = 0; i < rule_.order(); ++i) {
      const Row g = integrand(mid + half * rule_.nodes()[i]);
      for (int j = 0; j <= kMaxOrder; ++j) acc[j] += rule_.weights()[i] * g[j];
    }
    for (auto& x : acc) x *= half;
    return acc;
  }

  double alpha_;
  double rho_;
  MarkDistribution shock_;
  GaussLegendre rule_;
  double max_age_;
  double h_ = 0.0;
  std::vector<MarkDistribution::Node> nodes_;
  std::vector<Row> table_;
};

}  // namespace clusterre
