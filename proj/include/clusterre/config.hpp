#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "clusterre/model.hpp"

namespace clusterre {

// Everything a batch run needs: model, contract, and numerical settings.
//
// File format: one `key = value` per line, `#` starts a comment, keys are the
// field names below. Distributions are written `uniform(a, b)`, `point(z0)`,
// `truncexp(rate, cap)` or `exponential(rate)`; the excitation kernel is
// `proportional(a)` or `constant(a)`; the contract is `proportional`,
// `excess_of_loss` or `limited_stop_loss` with `coverage = b`.
struct RunConfig {
  ModelParams params;
  Contract contract = Contract::proportional();
  std::uint64_t seed = 20240601;

  // simulation
  std::size_t paths = 1000;

  // filtering
  std::size_t particles = 1000;
  double resample_threshold = 0.5;
  bool stratified_resampling = false;
  int report_steps = 100;
  double initial_spread = 0.0;  // 0 = Dirac initial law at lambda0

  // backward solver
  std::size_t bsde_paths = 10000;
  int bsde_steps = 50;
  int bsde_bins = 8;
  std::size_t bsde_particles = 500;
  int quadrature_order = 64;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& v) {
  std::size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters in number '" + v + "'");
  return x;
}

inline long long parse_integer(const std::string& v) {
  std::size_t used = 0;
  const long long x = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("not an integer: '" + v + "'");
  return x;
}

inline std::size_t parse_count(const std::string& v) {
  const long long x = parse_integer(v);
  if (x < 0) throw std::invalid_argument("count must be >= 0");
  return static_cast<std::size_t>(x);
}

}  // namespace detail

// Sets one field; throws std::invalid_argument("<key>: <reason>") on failure.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_count;
  using detail::parse_integer;
  using detail::parse_real;
  auto& p = cfg.params;
  const std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"alpha", [&](const std::string& v) { p.alpha = parse_real(v); }},
      {"beta_rev", [&](const std::string& v) { p.beta_rev = parse_real(v); }},
      {"lambda0", [&](const std::string& v) { p.lambda0 = parse_real(v); }},
      {"rho", [&](const std::string& v) { p.rho = parse_real(v); }},
      {"claim_dist", [&](const std::string& v) { p.claim_dist = MarkDistribution::parse(v); }},
      {"shock_dist", [&](const std::string& v) { p.shock_dist = MarkDistribution::parse(v); }},
      {"excitation", [&](const std::string& v) { p.excitation = Excitation::parse(v); }},
      {"horizon", [&](const std::string& v) { p.horizon = parse_real(v); }},
      {"rate_r", [&](const std::string& v) { p.rate_r = parse_real(v); }},
      {"eta", [&](const std::string& v) { p.eta = parse_real(v); }},
      {"initial_capital", [&](const std::string& v) { p.initial_capital = parse_real(v); }},
      {"insurance_premium_rate", [&](const std::string& v) { p.insurance_premium_rate = parse_real(v); }},
      {"safety_loading", [&](const std::string& v) { p.safety_loading = parse_real(v); }},
      {"contract", [&](const std::string& v) { cfg.contract.kind = parse_contract_kind(v); }},
      {"coverage", [&](const std::string& v) { cfg.contract.coverage = parse_real(v); }},
      {"seed", [&](const std::string& v) { cfg.seed = static_cast<std::uint64_t>(std::stoull(v)); }},
      {"paths", [&](const std::string& v) { cfg.paths = parse_count(v); }},
      {"particles", [&](const std::string& v) { cfg.particles = parse_count(v); }},
      {"resample_threshold", [&](const std::string& v) { cfg.resample_threshold = parse_real(v); }},
      {"stratified_resampling",
       [&](const std::string& v) {
         if (v != "true" && v != "false") throw std::invalid_argument("expected true or false");
         cfg.stratified_resampling = v == "true";
       }},
      {"report_steps", [&](const std::string& v) { cfg.report_steps = static_cast<int>(parse_integer(v)); }},
      {"initial_spread", [&](const std::string& v) { cfg.initial_spread = parse_real(v); }},
      {"bsde_paths", [&](const std::string& v) { cfg.bsde_paths = parse_count(v); }},
      {"bsde_steps", [&](const std::string& v) { cfg.bsde_steps = static_cast<int>(parse_integer(v)); }},
      {"bsde_bins", [&](const std::string& v) { cfg.bsde_bins = static_cast<int>(parse_integer(v)); }},
      {"bsde_particles", [&](const std::string& v) { cfg.bsde_particles = parse_count(v); }},
      {"quadrature_order", [&](const std::string& v) { cfg.quadrature_order = static_cast<int>(parse_integer(v)); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw std::invalid_argument(key + ": unknown key");
  try {
    it->second(value);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what());
  } catch (const std::out_of_range&) {
    throw std::invalid_argument(key + ": value out of range");
  }
}

// Range checks beyond ModelParams::validate; throws naming the field.
inline void validate_config(const RunConfig& cfg) {
  cfg.params.validate();
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw std::invalid_argument(std::string(field) + ": " + what);
  };
  if (cfg.contract.kind == ContractKind::limited_stop_loss)
    require(cfg.contract.coverage > 0.0, "coverage", "limited stop-loss needs coverage > 0");
  require(cfg.particles >= 1, "particles", "must be >= 1");
  require(cfg.resample_threshold > 0.0 && cfg.resample_threshold <= 1.0, "resample_threshold", "must be in (0, 1]");
  require(cfg.report_steps >= 1, "report_steps", "must be >= 1");
  require(cfg.initial_spread >= 0.0 && cfg.initial_spread < 1.0, "initial_spread", "must be in [0, 1)");
  require(cfg.bsde_steps >= 1, "bsde_steps", "must be >= 1");
  require(cfg.bsde_bins >= 1, "bsde_bins", "must be >= 1");
  require(cfg.bsde_particles >= 1, "bsde_particles", "must be >= 1");
  require(cfg.quadrature_order >= 2, "quadrature_order", "must be >= 2");
}

// Parses a config stream; errors carry "line N: key: reason".
inline RunConfig parse_config(std::istream& in, RunConfig cfg = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path, RunConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return parse_config(in, std::move(cfg));
}

// Canonical text form of the model parameters (one key per line, %.17g).
inline std::string canonical_params(const ModelParams& p) {
  std::ostringstream os;
  char buf[64];
  auto num = [&](const char* k, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << k << " = " << buf << '\n';
  };
  num("alpha", p.alpha);
  num("beta_rev", p.beta_rev);
  num("lambda0", p.lambda0);
  num("rho", p.rho);
  os << "claim_dist = " << p.claim_dist.to_string() << '\n';
  os << "shock_dist = " << p.shock_dist.to_string() << '\n';
  os << "excitation = " << p.excitation.to_string() << '\n';
  num("horizon", p.horizon);
  num("rate_r", p.rate_r);
  num("eta", p.eta);
  num("initial_capital", p.initial_capital);
  num("insurance_premium_rate", p.insurance_premium_rate);
  num("safety_loading", p.safety_loading);
  return os.str();
}

// 64-bit FNV-1a of the canonical parameter text, as 16 hex digits.
inline std::string params_hash(const ModelParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_params(p)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace clusterre
