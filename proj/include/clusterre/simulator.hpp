#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterre/model.hpp"
#include "clusterre/random.hpp"
#include "clusterre/trajectory.hpp"

namespace clusterre {

enum class EventSource { claim, shock };

struct Event {
  double time = 0.0;
  EventSource source = EventSource::claim;
  double mark = 0.0;
  double lambda_after = 0.0;  // intensity right after the event
};

// One realised path on [0, horizon]: claims and shocks in time order.
struct EventLog {
  double lambda0 = 1.0;
  double horizon = 1.0;
  std::vector<Event> events;

  std::size_t claim_count() const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [](const Event& e) { return e.source == EventSource::claim; }));
  }

  // Cumulative claim amount C_T.
  double total_claims() const {
    double c = 0.0;
    for (const auto& e : events)
      if (e.source == EventSource::claim) c += e.mark;
    return c;
  }

  // The observable part: claims only.
  EventLog claims_only() const {
    EventLog out{lambda0, horizon, {}};
    for (const auto& e : events)
      if (e.source == EventSource::claim) out.events.push_back(e);
    return out;
  }
};

// Right-continuous intensity lambda_t reconstructed from the log.
inline double lambda_at(const EventLog& log, const ModelParams& p, double t) {
  IntensityState s{log.lambda0, 0.0};
  for (const auto& e : log.events) {
    if (e.time > t) break;
    s.lambda = intensity_decay(s, e.time - s.t_last, p);
    s.t_last = e.time;
    s.lambda += e.source == EventSource::claim ? p.excitation(e.mark) : e.mark;
  }
  return intensity_decay(s, t - s.t_last, p);
}

// Intensity just before each event (left limits), in event order.
inline std::vector<double> lambda_left_limits(const EventLog& log, const ModelParams& p) {
  std::vector<double> out;
  out.reserve(log.events.size());
  IntensityState s{log.lambda0, 0.0};
  for (const auto& e : log.events) {
    s.lambda = intensity_decay(s, e.time - s.t_last, p);
    s.t_last = e.time;
    out.push_back(s.lambda);
    s.lambda += e.source == EventSource::claim ? p.excitation(e.mark) : e.mark;
  }
  return out;
}

// Integral of lambda over [0, t_end], exact per decay segment.
inline double integrated_intensity(const EventLog& log, const ModelParams& p, double t_end) {
  double acc = 0.0;
  IntensityState s{log.lambda0, 0.0};
  for (const auto& e : log.events) {
    if (e.time > t_end) break;
    acc += intensity_decay_integral(s.lambda, e.time - s.t_last, p);
    s.lambda = intensity_decay(s, e.time - s.t_last, p);
    s.t_last = e.time;
    s.lambda += e.source == EventSource::claim ? p.excitation(e.mark) : e.mark;
  }
  return acc + intensity_decay_integral(s.lambda, t_end - s.t_last, p);
}

// Checks ordering, marks and the stored post-event intensities; throws on violation.
inline void validate_event_log(const EventLog& log, const ModelParams& p, double rel_tol = 1e-9) {
  double prev = 0.0;
  IntensityState s{log.lambda0, 0.0};
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const auto& e = log.events[i];
    const std::string where = "event " + std::to_string(i) + ": ";
    if (!(e.time > prev) || e.time > log.horizon) throw std::invalid_argument(where + "time out of order or range");
    if (!(e.mark > 0.0)) throw std::invalid_argument(where + "mark must be > 0");
    s.lambda = intensity_decay(s, e.time - s.t_last, p);
    s.t_last = e.time;
    s.lambda += e.source == EventSource::claim ? p.excitation(e.mark) : e.mark;
    if (!std::isnan(e.lambda_after) && std::abs(e.lambda_after - s.lambda) > rel_tol * std::max(1.0, s.lambda))
      throw std::invalid_argument(where + "stored intensity inconsistent with the log");
    prev = e.time;
  }
}

// Exact path under P by thinning. Between events the intensity moves
// monotonically towards beta, so max(lambda, beta) bounds it until the next
// event; shocks are an independent Poisson(rho) stream.
inline EventLog simulate_path(const ModelParams& p, std::uint64_t seed) {
  Rng rng(seed);
  const double T = p.horizon;
  EventLog log{p.lambda0, T, {}};
  IntensityState s{p.lambda0, 0.0};
  double next_shock = p.rho > 0.0 ? rng.exponential(p.rho) : kUnbounded;
  double t = 0.0;
  for (;;) {
    const double bound = std::max(s.lambda, p.beta_rev);
    const double candidate = bound > 0.0 ? t + rng.exponential(bound) : kUnbounded;
    if (std::min(candidate, next_shock) > T) break;
    if (next_shock <= candidate) {
      s.lambda = intensity_decay(s, next_shock - s.t_last, p);
      s.t_last = t = next_shock;
      const double z = p.shock_dist.sample(rng);
      s.lambda += z;
      log.events.push_back({t, EventSource::shock, z, s.lambda});
      next_shock = t + rng.exponential(p.rho);
      continue;
    }
    s.lambda = intensity_decay(s, candidate - s.t_last, p);
    s.t_last = t = candidate;
    if (rng.uniform() * bound <= s.lambda) {
      const double z = p.claim_dist.sample(rng);
      s.lambda += p.excitation(z);
      log.events.push_back({t, EventSource::claim, z, s.lambda});
    }
  }
  return log;
}

inline std::vector<EventLog> batch_simulate(std::size_t n, const ModelParams& p, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("batch_simulate: n must be >= 1");
  std::vector<EventLog> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(simulate_path(p, derive_seed(seed, i)));
  return out;
}

// log L_T = -int (lambda_s - 1) ds + sum over claims of log lambda_{T_j-}.
inline double log_likelihood(const EventLog& log, const ModelParams& p) {
  double acc = -(integrated_intensity(log, p, log.horizon) - log.horizon);
  const auto left = lambda_left_limits(log, p);
  for (std::size_t i = 0; i < log.events.size(); ++i)
    if (log.events[i].source == EventSource::claim) acc += std::log(left[i]);
  return acc;
}

struct QPath {
  EventLog log;
  double log_likelihood = 0.0;
  double likelihood() const { return std::exp(log_likelihood); }
};

// Path under the reference measure: unit-rate claims, Poisson(rho) shocks,
// i.i.d. marks, all independent; the likelihood is evaluated along the path.
inline QPath simulate_under_q(const ModelParams& p, std::uint64_t seed) {
  Rng rng(seed);
  const double T = p.horizon;
  std::vector<Event> ev;
  for (double t = rng.exponential(1.0); t <= T; t += rng.exponential(1.0))
    ev.push_back({t, EventSource::claim, p.claim_dist.sample(rng), 0.0});
  if (p.rho > 0.0)
    for (double t = rng.exponential(p.rho); t <= T; t += rng.exponential(p.rho))
      ev.push_back({t, EventSource::shock, p.shock_dist.sample(rng), 0.0});
  std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
  IntensityState s{p.lambda0, 0.0};
  for (auto& e : ev) {
    s.lambda = intensity_decay(s, e.time - s.t_last, p);
    s.t_last = e.time;
    s.lambda += e.source == EventSource::claim ? p.excitation(e.mark) : e.mark;
    e.lambda_after = s.lambda;
  }
  QPath q{EventLog{p.lambda0, T, std::move(ev)}, 0.0};
  q.log_likelihood = log_likelihood(q.log, p);
  return q;
}

// Coefficient of variation of L_T across an ensemble; values above 10 signal
// weight degeneracy.
inline double likelihood_cv(const std::vector<QPath>& paths) {
  double s = 0.0, s2 = 0.0;
  for (const auto& q : paths) {
    const double l = q.likelihood();
    s += l;
    s2 += l * l;
  }
  const double n = static_cast<double>(paths.size());
  const double mean = s / n;
  const double var = std::max(0.0, s2 / n - mean * mean);
  return std::sqrt(var) / mean;
}

inline constexpr double kLikelihoodCvWarning = 10.0;

// ---------------------------------------------------------------- wealth

using FeedbackStrategy = std::function<double(const FilterSummary&)>;

struct WealthPath {
  double terminal = 0.0;
  std::vector<double> times;
  std::vector<double> wealth;      // X_t at the knots (after any claim)
  double premium_outflow = 0.0;    // int e^{r(T-s)} q_s ds
  double claim_outflow = 0.0;      // sum e^{r(T-T_j)} Phi(Z_j, u_{T_j})
};

// Terminal wealth X_T = R0 e^{rT} + int e^{r(T-s)} (c - q_s) ds - sum e^{r(T-T_j)} Phi(Z_j, u_{T_j}).
// The insurance premium is integrated exactly; the reinsurance premium is
// integrated by the trapezoid rule over the trajectory knots, using the right
// limit of the filter at the start of each interval and the left limit at its
// end. The strategy only ever sees left limits at claim times.
inline WealthPath wealth_path(const EventLog& log, const Contract& contract, const FeedbackStrategy& strategy,
                              const FilterTrajectory& track, const ModelParams& p) {
  if (track.empty() || track.front().t != 0.0) throw std::invalid_argument("wealth_path: trajectory must start at 0");
  const double r = p.rate_r;
  const double T = p.horizon;
  std::vector<double> claim_times;
  for (const auto& e : log.events)
    if (e.source == EventSource::claim) claim_times.push_back(e.time);

  auto control = [&](const FilterSummary& s) {
    const double u = strategy(s);
    if (!contract.in_domain(u)) throw std::invalid_argument("wealth_path: strategy returned a control outside U");
    return u;
  };

  WealthPath out;
  double x = p.initial_capital;
  out.times.push_back(0.0);
  out.wealth.push_back(x);
  std::size_t claims_seen = 0;
  for (std::size_t k = 0; k + 1 < track.size(); ++k) {
    const auto& a = track[k];
    const auto& b = track[k + 1];
    const double h = b.t - a.t;
    const double ua = control({a.t, a.pi_right, a.pi2_right});
    const double ub = control({b.t, b.pi_left, b.pi2_left});
    const double qa = premium_rate(contract, ua, a.pi_right, p);
    const double qb = premium_rate(contract, ub, b.pi_left, p);
    const double growth = std::exp(r * h);
    const double prem = 0.5 * h * (growth * qa + qb);
    x = x * growth + p.insurance_premium_rate * accumulation_factor(r, h) - prem;
    out.premium_outflow += prem * std::exp(r * (T - b.t));
    if (b.claim) {
      if (claims_seen >= claim_times.size() || claim_times[claims_seen] != b.t)
        throw std::invalid_argument("wealth_path: trajectory claims do not match the log");
      ++claims_seen;
      const double kept = retention(contract, b.mark, ub);
      x -= kept;
      out.claim_outflow += kept * std::exp(r * (T - b.t));
    }
    out.times.push_back(b.t);
    out.wealth.push_back(x);
  }
  if (claims_seen != claim_times.size()) throw std::invalid_argument("wealth_path: trajectory misses claims of the log");
  out.terminal = x;
  return out;
}

// Terminal wealth without reinsurance; needs only the claims.
inline double null_reinsurance_wealth(const EventLog& log, const ModelParams& p) {
  double x = deterministic_wealth(p, p.horizon);
  for (const auto& e : log.events)
    if (e.source == EventSource::claim) x -= std::exp(p.rate_r * (p.horizon - e.time)) * e.mark;
  return x;
}

// ---------------------------------------------------------------- CSV

inline const char* to_string(EventSource s) { return s == EventSource::claim ? "claim" : "shock"; }

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_event_log_csv(std::ostream& os, const EventLog& log, const std::string& manifest_hash) {
  os << "# manifest: " << manifest_hash << '\n';
  os << "# lambda0: " << format_real(log.lambda0) << '\n';
  os << "# horizon: " << format_real(log.horizon) << '\n';
  os << "time,source,mark,lambda_after\n";
  for (const auto& e : log.events)
    os << format_real(e.time) << ',' << to_string(e.source) << ',' << format_real(e.mark) << ','
       << format_real(e.lambda_after) << '\n';
}

// Reads the CSV written above. Errors are reported as "line N: reason".
// An empty lambda_after field is accepted (observed logs need not carry it).
inline EventLog read_event_log_csv(std::istream& is) {
  EventLog log;
  bool have_l0 = false, have_t = false, have_header = false;
  std::string line;
  int lineno = 0;
  double prev = 0.0;
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("line " + std::to_string(lineno) + ": " + why);
  };
  auto real = [&](const std::string& s, const char* what) {
    try {
      std::size_t used = 0;
      const double x = std::stod(s, &used);
      if (used != s.size()) fail(std::string("bad ") + what + " '" + s + "'");
      return x;
    } catch (const std::invalid_argument&) {
      fail(std::string("bad ") + what + " '" + s + "'");
    } catch (const std::out_of_range&) {
      fail(std::string(what) + " out of range");
    }
    return 0.0;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string key = line.substr(1, colon - 1);
      key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
      std::string val = line.substr(colon + 1);
      val.erase(std::remove_if(val.begin(), val.end(), ::isspace), val.end());
      if (key == "lambda0") {
        log.lambda0 = real(val, "lambda0");
        have_l0 = true;
      } else if (key == "horizon") {
        log.horizon = real(val, "horizon");
        have_t = true;
      }
      continue;
    }
    if (!have_header) {
      if (line != "time,source,mark,lambda_after") fail("expected header 'time,source,mark,lambda_after'");
      have_header = true;
      if (!have_l0 || !have_t) fail("missing '# lambda0:' or '# horizon:' header comment");
      if (!(log.lambda0 > 0.0)) fail("lambda0 must be > 0");
      if (!(log.horizon > 0.0)) fail("horizon must be > 0");
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 4) fail("expected 4 fields, got " + std::to_string(f.size()));
    Event e;
    e.time = real(f[0], "time");
    if (f[1] == "claim")
      e.source = EventSource::claim;
    else if (f[1] == "shock")
      e.source = EventSource::shock;
    else
      fail("source must be 'claim' or 'shock', got '" + f[1] + "'");
    e.mark = real(f[2], "mark");
    e.lambda_after = f[3].empty() ? std::nan("") : real(f[3], "lambda_after");
    if (!(e.time > prev)) fail("event times must be strictly increasing and > 0");
    if (e.time > log.horizon) fail("event time beyond the horizon");
    if (!(e.mark > 0.0)) fail("mark must be > 0");
    if (!std::isnan(e.lambda_after) && !(e.lambda_after > 0.0)) fail("lambda_after must be > 0");
    prev = e.time;
    log.events.push_back(e);
  }
  if (!have_header) throw std::invalid_argument("line " + std::to_string(lineno) + ": missing CSV header");
  return log;
}

}  // namespace clusterre
