// clusterre: batch front end for simulation, filtering, the backward solver,
// single-state strategy decisions and the validation suites.
//
//   clusterre [--config FILE] [--seed S] <command> [options]
//
// Flags override the config file; the CLUSTERRE_SEED environment variable
// overrides both. Every output file carries the run manifest hash.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "clusterre/bsde.hpp"
#include "clusterre/config.hpp"
#include "clusterre/filter.hpp"
#include "clusterre/manifest.hpp"
#include "clusterre/oracle.hpp"
#include "clusterre/simulator.hpp"
#include "clusterre/strategy.hpp"
#include "clusterre/validate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace clusterre;

namespace {

// Identity of a run: canonical parameters, command, seed and effective flags.
struct Run {
  RunConfig cfg;
  std::string command;
  std::vector<std::pair<std::string, std::string>> flags;

  std::string identity() const {
    std::ostringstream os;
    os << "command = " << command << '\n' << canonical_params(cfg.params);
    os << "contract = " << to_string(cfg.contract.kind) << '\n';
    os << "coverage = " << format_real(cfg.contract.coverage) << '\n';
    os << "seed = " << cfg.seed << '\n';
    for (const auto& [k, v] : flags) os << k << " = " << v << '\n';
    return os.str();
  }
  std::string hash() const { return git_blob_hash(identity()); }
};

// Writes a file and records its content hash in the manifest.
void write_output(const fs::path& path, const std::string& content, json& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  manifest["outputs"][path.filename().string()] = git_blob_hash(content);
}

json base_manifest(const Run& run) {
  json m;
  m["manifest_hash"] = run.hash();
  m["command"] = run.command;
  m["params_hash"] = params_hash(run.cfg.params);
  m["seed"] = run.cfg.seed;
  json flags = json::object();
  for (const auto& [k, v] : run.flags) flags[k] = v;
  m["flags"] = flags;
  m["outputs"] = json::object();
  return m;
}

std::string with_header(const std::string& hash, const std::string& body) { return "# manifest: " + hash + "\n" + body; }

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json verdict_json(const validation::Verdict& v) {
  return {{"name", v.name}, {"lhs", number_or_null(v.lhs)}, {"rhs", number_or_null(v.rhs)},
          {"se", number_or_null(v.se)}, {"pass", v.pass}, {"detail", v.detail}};
}

FilterOptions filter_options(const RunConfig& cfg) {
  FilterOptions fo;
  fo.particles = cfg.particles;
  fo.report_steps = cfg.report_steps;
  fo.resample_threshold = cfg.resample_threshold;
  fo.scheme = cfg.stratified_resampling ? ResampleScheme::stratified : ResampleScheme::systematic;
  fo.initial_spread = cfg.initial_spread;
  return fo;
}

void require_assumptions(const ModelParams& p, double exponent) {
  const auto rep = validate_assumptions(p, exponent);
  for (const auto& c : rep.checks)
    if (!c.pass) throw std::invalid_argument("assumption " + c.name + " fails: " + c.detail);
}

// ------------------------------------------------------------- commands

int cmd_simulate(Run& run, std::size_t n, const std::string& out_dir) {
  if (n == 0) throw std::invalid_argument("--n: must be >= 1");
  const auto& p = run.cfg.params;
  require_assumptions(p, 1.0);
  run.flags.push_back({"n", std::to_string(n)});
  const std::string hash = run.hash();
  json manifest = base_manifest(run);
  const auto logs = batch_simulate(n, p, run.cfg.seed);
  std::vector<double> counts, lam;
  for (std::size_t i = 0; i < n; ++i) {
    std::ostringstream os;
    write_event_log_csv(os, logs[i], hash);
    write_output(fs::path(out_dir) / ("path_" + std::to_string(i) + ".csv"), os.str(), manifest);
    counts.push_back(static_cast<double>(logs[i].claim_count()));
    lam.push_back(lambda_at(logs[i], p, p.horizon));
  }
  auto stats = [](const std::vector<double>& v) {
    double s = 0.0, s2 = 0.0;
    for (double x : v) {
      s += x;
      s2 += x * x;
    }
    const double m = s / v.size();
    const double se = v.size() > 1 ? std::sqrt(std::max(0.0, s2 / v.size() - m * m) / (v.size() - 1)) : 0.0;
    return std::pair<double, double>{m, se};
  };
  const auto [mc, sc] = stats(counts);
  const auto [ml, sl] = stats(lam);
  const double m_t = oracle::moment_ode_oracle(p, {p.horizon}).m.back();
  json summary = {{"manifest_hash", hash},
                  {"paths", n},
                  {"mean_claim_count", mc},
                  {"mean_claim_count_se", sc},
                  {"mean_lambda_T", ml},
                  {"mean_lambda_T_se", sl},
                  {"oracle_mean_lambda_T", m_t},
                  {"within_3se", std::abs(ml - m_t) <= 3.0 * sl}};
  write_output(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n", manifest);
  std::ofstream(fs::path(out_dir) / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_filter(Run& run, const std::string& observed, const std::string& out) {
  std::ifstream in(observed);
  if (!in) throw std::runtime_error("cannot open observed log '" + observed + "'");
  EventLog log = read_event_log_csv(in);
  const auto& p = run.cfg.params;
  if (std::abs(log.horizon - p.horizon) > 1e-12 * p.horizon)
    throw std::invalid_argument("observed log horizon differs from the configured horizon");
  run.flags.push_back({"observed_hash", [&] {
                         std::ifstream f(observed, std::ios::binary);
                         std::stringstream ss;
                         ss << f.rdbuf();
                         return git_blob_hash(ss.str());
                       }()});
  const std::string hash = run.hash();
  FilterTrajectory traj = run_filter(log.claims_only(), p, filter_options(run.cfg), run.cfg.seed);
  std::ostringstream os;
  os << "t,claim,mark,pi_left,pi_right,pi2_left,pi2_right,ess,log_norm,y_dominating\n";
  for (const auto& pt : traj)
    os << format_real(pt.t) << ',' << (pt.claim ? 1 : 0) << ',' << format_real(pt.mark) << ','
       << format_real(pt.pi_left) << ',' << format_real(pt.pi_right) << ',' << format_real(pt.pi2_left) << ','
       << format_real(pt.pi2_right) << ',' << format_real(pt.ess) << ',' << format_real(pt.log_norm) << ','
       << format_real(pt.y_dominating) << '\n';
  const std::string body = with_header(hash, os.str());
  if (out.empty()) {
    std::cout << body;
  } else {
    json manifest = base_manifest(run);
    write_output(out, body, manifest);
    std::ofstream(fs::path(out).string() + ".manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
  }
  return 0;
}

int cmd_solve(Run& run, const std::string& out_dir) {
  const auto& cfg = run.cfg;
  const auto& p = cfg.params;
  require_assumptions(p, bsde_required_exponent(p));
  run.flags.push_back({"paths", std::to_string(cfg.bsde_paths)});
  run.flags.push_back({"steps", std::to_string(cfg.bsde_steps)});
  run.flags.push_back({"bins", std::to_string(cfg.bsde_bins)});
  run.flags.push_back({"particles", std::to_string(cfg.bsde_particles)});
  const std::string hash = run.hash();
  BsdeEnsembleOptions eo;
  eo.particles = cfg.bsde_particles;
  eo.resample_threshold = cfg.resample_threshold;
  eo.scheme = cfg.stratified_resampling ? ResampleScheme::stratified : ResampleScheme::systematic;
  eo.initial_spread = cfg.initial_spread;
  const BsdeGrid grid = build_ensemble(cfg.bsde_paths, cfg.bsde_steps, p, cfg.seed, eo);
  BsdeOptions bo;
  bo.bins = cfg.bsde_bins;
  bo.keep_paths = false;
  BsdeSolution sol;
  try {
    sol = solve_backward(grid, cfg.contract, p, bo);
  } catch (const BsdeRegressionError& e) {
    std::cerr << "regression failure at slice " << e.slice() << " (condition number " << e.condition() << ")\n";
    throw;
  }
  sol.terminal_gap = 0.0;
  const auto mb = martingale_bounds(grid, p);
  const auto [exi, exi_se] = mean_terminal(grid);
  json manifest = base_manifest(run);
  std::ostringstream csv;
  write_solution_csv(csv, sol, hash);
  write_output(fs::path(out_dir) / "solution.csv", csv.str(), manifest);
  json slices = json::array();
  for (std::size_t k = 0; k < sol.slices.size(); ++k) {
    const auto& d = sol.slices[k];
    slices.push_back({{"slice", k}, {"t", d.t}, {"features", d.features_used}, {"condition", number_or_null(d.condition)},
                      {"r2", number_or_null(d.r2)}});
  }
  json report = {{"manifest_hash", hash},
                 {"y0", sol.y0},
                 {"y0_se", sol.y0_se},
                 {"optimal_utility", optimal_utility_at_zero(sol)},
                 {"null_reinsurance_utility", exi},
                 {"null_reinsurance_utility_se", exi_se},
                 {"m1", mb.m1},
                 {"m2", mb.m2},
                 {"m2_se", mb.m2_se},
                 {"min_driver", sol.min_driver},
                 {"floor_hits", sol.floor_hits},
                 {"dense_grid_fallbacks", sol.fallback_count},
                 {"slices", slices}};
  write_output(fs::path(out_dir) / "report.json", report.dump(2) + "\n", manifest);
  std::ofstream(fs::path(out_dir) / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
  std::cout << "Y0 = " << format_real(sol.y0) << " +- " << format_real(sol.y0_se) << "\n"
            << "M1 = " << format_real(mb.m1) << ", M2 = " << format_real(mb.m2) << " +- " << format_real(mb.m2_se)
            << "\n";
  return 0;
}

int cmd_optimize(Run& run, const std::string& state_arg, const std::string& out) {
  json st;
  {
    std::ifstream f(state_arg);
    try {
      st = f ? json::parse(f) : json::parse(state_arg);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(std::string("--state: malformed JSON: ") + e.what());
    }
  }
  for (const char* key : {"w", "theta", "pi_lambda", "t"})
    if (!st.contains(key)) throw std::invalid_argument(std::string("--state: missing field '") + key + "'");
  StrategyState s;
  s.t = st.at("t").get<double>();
  s.w = st.at("w").get<double>();
  s.pi_lambda = st.at("pi_lambda").get<double>();
  if (!st.at("theta").is_array() || st.at("theta").empty())
    throw std::invalid_argument("--state: 'theta' must be a non-empty array of bin values");
  s.theta.values = st.at("theta").get<std::vector<double>>();
  if (!(s.t >= 0.0 && s.t <= run.cfg.params.horizon)) throw std::invalid_argument("--state: t must lie in [0, T]");
  const std::string hash = run.hash();
  const StrategyEvaluator ev(run.cfg.params, run.cfg.contract, static_cast<int>(s.theta.values.size()),
                             run.cfg.quadrature_order);
  const auto d = ev.maximize(s);
  json res = {{"manifest_hash", hash},
              {"contract", to_string(run.cfg.contract.kind)},
              {"u_star", number_or_null(d.u_star)},
              {"null_reinsurance", d.regime == Regime::null},
              {"regime", to_string(d.regime)},
              {"thresholds", d.thresholds},
              {"foc_residual", d.foc_residual},
              {"ftilde_at_opt", d.ftilde_at_opt},
              {"certificate_ok", d.certificate_ok},
              {"warning", d.warning}};
  if (out.empty()) {
    std::cout << res.dump(2) << "\n";
  } else {
    json manifest = base_manifest(run);
    write_output(out, res.dump(2) + "\n", manifest);
  }
  return 0;
}

int cmd_validate(Run& run, const std::string& suite, bool quick) {
  const auto& p = run.cfg.params;
  const auto scale = quick ? validation::SuiteScale::quick() : validation::SuiteScale{};
  const std::uint64_t seed = run.cfg.seed;
  std::vector<validation::Verdict> all;
  auto add = [&](const std::vector<validation::Verdict>& v) {
    for (const auto& x : v) {
      std::cout << verdict_json(x).dump() << "\n" << std::flush;
      all.push_back(x);
    }
  };
  const bool every = suite == "all";
  if (every) add(validation::kinematics_suite(p, seed));
  if (every || suite == "moments") add(validation::moments_suite(p, seed, scale));
  if (every || suite == "girsanov") add(validation::girsanov_suite(p, seed, scale));
  if (every || suite == "filter") add(validation::filter_suite(p, seed, scale));
  if (every || suite == "strategy") add(validation::strategy_suite(p, seed, scale));
  if (every || suite == "bsde") add(validation::bsde_suite(p, seed, scale));
  if (every) add(validation::reproducibility_suite(p, seed));
  return validation::all_pass(all) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clusterre: optimal reinsurance under partially observed contagion"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed_flag = 0;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_flag, "master seed (overrides the config)");

  auto* sim = app.add_subcommand("simulate", "simulate an ensemble of event logs");
  std::size_t sim_n = 0;
  std::string sim_out = "simulate_out";
  auto* sim_n_opt = sim->add_option("--n", sim_n, "number of paths");
  sim->add_option("--out", sim_out, "output directory");
  auto* sim_seed = sim->add_option("--seed", seed_flag, "master seed");

  auto* fil = app.add_subcommand("filter", "run the particle filter on an observed log");
  std::size_t particles = 0;
  std::string observed, fil_out;
  auto* fil_particles = fil->add_option("--particles", particles, "number of particles");
  fil->add_option("--observed", observed, "event-log CSV")->required();
  fil->add_option("--out", fil_out, "trajectory CSV (stdout when omitted)");
  auto* fil_seed = fil->add_option("--seed", seed_flag, "filter seed");

  auto* sol = app.add_subcommand("solve", "solve the value-process equation by backward regression");
  std::size_t paths = 0;
  int steps = 0, bins = 0;
  std::string features = "pi,pi_sq,pi2";
  std::string sol_out = "solve_out";
  auto* sol_paths = sol->add_option("--paths", paths, "ensemble size");
  auto* sol_steps = sol->add_option("--steps", steps, "time steps");
  auto* sol_bins = sol->add_option("--bins", bins, "claim-mark bins of the jump coefficient");
  sol->add_option("--features", features, "regression features (fixed set)")
      ->check(CLI::IsMember({"pi,pi_sq,pi2"}));
  sol->add_option("--out", sol_out, "output directory");
  auto* sol_seed = sol->add_option("--seed", seed_flag, "master seed");

  auto* opt = app.add_subcommand("optimize", "maximize the driver integrand for one state");
  std::string state, contract_name, opt_out;
  double coverage = -1.0;
  opt->add_option("--state", state, "JSON file or inline JSON with w, theta, pi_lambda, t")->required();
  auto* opt_contract =
      opt->add_option("--contract", contract_name, "proportional | excess_of_loss | limited_stop_loss");
  opt->add_option("--coverage", coverage, "layer width for limited stop-loss");
  opt->add_option("--out", opt_out, "decision JSON file (stdout when omitted)");

  auto* val = app.add_subcommand("validate", "run validation suites; nonzero exit on any failure");
  std::string suite;
  bool quick = false;
  val->add_option("--suite", suite, "suite name")
      ->required()
      ->check(CLI::IsMember({"girsanov", "moments", "filter", "bsde", "strategy", "all"}));
  val->add_flag("--quick", quick, "reduced sample sizes");
  auto* val_seed = val->add_option("--seed", seed_flag, "master seed");

  CLI11_PARSE(app, argc, argv);

  try {
    Run run;
    if (!config_path.empty()) run.cfg = load_config(config_path);
    if (seed_opt->count() || sim_seed->count() || fil_seed->count() || sol_seed->count() || val_seed->count()) run.cfg.seed = seed_flag;
    if (const char* env = std::getenv("CLUSTERRE_SEED")) {
      try {
        run.cfg.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw std::invalid_argument(std::string("CLUSTERRE_SEED: not an unsigned integer: '") + env + "'");
      }
    }
    if (fil_particles->count()) run.cfg.particles = particles;
    if (sol_paths->count()) run.cfg.bsde_paths = paths;
    if (sol_steps->count()) run.cfg.bsde_steps = steps;
    if (sol_bins->count()) run.cfg.bsde_bins = bins;
    if (opt_contract->count()) run.cfg.contract.kind = parse_contract_kind(contract_name);
    if (coverage >= 0.0) run.cfg.contract.coverage = coverage;
    validate_config(run.cfg);

    if (sim->parsed()) {
      run.command = "simulate";
      if (!sim_n_opt->count()) sim_n = run.cfg.paths;
      return cmd_simulate(run, sim_n, sim_out);
    }
    if (fil->parsed()) {
      run.command = "filter";
      run.flags.push_back({"particles", std::to_string(run.cfg.particles)});
      return cmd_filter(run, observed, fil_out);
    }
    if (sol->parsed()) {
      run.command = "solve";
      if (run.cfg.bsde_paths < 2) throw std::invalid_argument("--paths: must be >= 2");
      return cmd_solve(run, sol_out);
    }
    if (opt->parsed()) {
      run.command = "optimize";
      return cmd_optimize(run, state, opt_out);
    }
    if (val->parsed()) {
      run.command = "validate";
      return cmd_validate(run, suite, quick);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
