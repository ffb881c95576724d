#include "thermo_mdp/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include "thermo_mdp/maxent_program.hpp"
#include "thermo_mdp/scenario.hpp"

namespace thermo_mdp::cli {

namespace {

using nlohmann::json;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct Report {
  std::string name;  ///< file stem under --out
  json body;
  Table table;
};

struct Context {
  Scenario scenario;
  std::uint64_t seed = 0;
  std::size_t max_paths = kDefaultMaxPaths;
  bool csv = false;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + csv_field(r[i]);
    out += "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

std::string R(double x) { return format_real(x); }
std::string I(long long x) { return std::to_string(x); }

std::string path_text(const std::vector<int>& states) {
  std::string s;
  for (std::size_t i = 0; i < states.size(); ++i) s += (i ? "-" : "") + std::to_string(states[i]);
  return s;
}

json reals(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

json matrices(const std::vector<MatrixXd>& ms) {
  json out = json::array();
  for (const auto& m : ms) out.push_back(to_json(m));
  return out;
}

template <typename T>
const T& need(const std::optional<T>& block, const char* name, const char* command) {
  if (!block) fail(ErrorCode::InvalidScenario, std::string(command) + " needs a '" + name + "' block");
  return *block;
}

json objective_json(const InfoObjectiveReport& r) {
  return {{"expected_cost", number(r.expected_cost)},
          {"transfer_terms", reals(r.transfer_terms)},
          {"transfer_terms_reduced", reals(r.transfer_terms_reduced)},
          {"transfer_total", number(r.transfer_total)},
          {"final_term", number(r.final_term)},
          {"initial_term", number(r.initial_term)},
          {"theta", number(r.theta)},
          {"beta_inverse", number(r.beta_inverse)},
          {"include_final_term", r.include_final_term},
          {"objective", number(r.objective)}};
}

void objective_rows(Table& t, const std::string& section, const InfoObjectiveReport& r) {
  for (std::size_t k = 0; k < r.transfer_terms.size(); ++k) {
    t.rows.push_back({section, "transfer", I(static_cast<long long>(k) + 1), R(r.transfer_terms[k])});
    t.rows.push_back({section, "transfer_reduced", I(static_cast<long long>(k) + 1), R(r.transfer_terms_reduced[k])});
  }
  for (auto [name, v] : {std::pair{"expected_cost", r.expected_cost}, {"transfer_total", r.transfer_total},
                         {"final_term", r.final_term}, {"initial_term", r.initial_term}, {"theta", r.theta},
                         {"beta_inverse", r.beta_inverse}, {"objective", r.objective}})
    t.rows.push_back({section, name, "", R(v)});
}

json model_json(const PolicyUncertaintyModel& m) {
  return {{"policies", m.policies},
          {"state_initial", to_json(m.state_initial)},
          {"policy_initial", to_json(m.policy_initial)},
          {"nu", matrices(m.nu)},
          {"beta", number(m.beta)}};
}

const char* solver_name(InfoSolver s) { return s == InfoSolver::alternating ? "alternating" : "brute-force"; }

// ---- commands ----

Report cmd_validate(const Context& c) {
  Report r{"validate", normalized_json(c.scenario), {{"block", "num_states", "horizon"}, {}}};
  const auto& s = c.scenario;
  if (s.mdp) r.table.rows.push_back({"mdp", I(s.mdp->mdp.num_states()), I(s.mdp->mdp.horizon)});
  if (s.passive) r.table.rows.push_back({"passive", I(s.passive->num_states()), I(s.passive->horizon)});
  if (s.thermo) r.table.rows.push_back({"thermo", I(s.thermo->chain.num_states()), I(s.thermo->chain.horizon())});
  if (s.coupled) r.table.rows.push_back({"coupled", I(s.coupled->system.nx), I(s.coupled->system.horizon)});
  if (s.info) r.table.rows.push_back({"info", I(s.mdp->mdp.num_states()), I(s.mdp->mdp.horizon)});
  if (s.parametric)
    r.table.rows.push_back(
        {"parametric", I(s.parametric->family.front().num_states()), I(s.parametric->family.front().horizon)});
  return r;
}

Report cmd_bellman(const Context& c) {
  const auto& b = need(c.scenario.mdp, "mdp", "solve bellman");
  const auto sol = bellman_backward(b.mdp);
  Report r{"solve_bellman", {}, {{"t", "state", "value", "greedy_action"}, {}}};
  r.body = {{"values", to_json(sol.values.values)},
            {"greedy", sol.greedy},
            {"initial", to_json(b.initial)},
            {"expected_value", number(b.initial.dot(sol.values.slice(1)))}};
  for (int t = 1; t <= sol.values.horizon(); ++t)
    for (Index s = 0; s < b.mdp.num_states(); ++s)
      r.table.rows.push_back({I(t), I(s), R(sol.values.at(t, s)),
                              t < sol.values.horizon() ? I(sol.greedy[t - 1][s]) : std::string()});
  return r;
}

Report cmd_kl(const Context& c) {
  const auto& p = need(c.scenario.passive, "passive", "solve kl");
  const auto sol = kl_value_backward(p);
  const auto law = optimal_control(p, sol.values);
  Report r{"solve_kl", {}, {{"quantity", "t", "state", "next_state", "value"}, {}}};
  r.body = {{"values", to_json(sol.values.values)},
            {"log_z", to_json(sol.desirability.log_z)},
            {"log_g", to_json(sol.desirability.log_g)},
            {"control", matrices(law.kernels)}};
  const Index n = p.num_states();
  for (int t = 1; t <= p.horizon; ++t)
    for (Index s = 0; s < n; ++s) {
      r.table.rows.push_back({"value", I(t), I(s), "", R(sol.values.at(t, s))});
      r.table.rows.push_back({"log_z", I(t), I(s), "", R(sol.desirability.log_z(t - 1, s))});
    }
  for (int t = 1; t < p.horizon; ++t)
    for (Index s = 0; s < n; ++s)
      for (Index s2 = 0; s2 < n; ++s2)
        r.table.rows.push_back({"control", I(t), I(s), I(s2), R(law.kernels[t - 1](s, s2))});
  return r;
}

struct MaxentArgs {
  double K = 0.0;
  int state = 0;
  int time = 1;
  std::string measure = "expected";
};

Report cmd_maxent(const Context& c, const MaxentArgs& a) {
  const auto& s = c.scenario;
  if (!s.passive && !s.mdp) fail(ErrorCode::InvalidScenario, "solve maxent needs a 'passive' or 'mdp' block");
  const Index n = s.passive ? s.passive->num_states() : s.mdp->mdp.num_states();
  const int horizon = s.passive ? s.passive->horizon : s.mdp->mdp.horizon;
  if (a.state < 0 || a.state >= n) fail(ErrorCode::InvalidScenario, "--state out of range");
  if (a.time < 1 || a.time >= horizon) fail(ErrorCode::InvalidScenario, "--time must lie in 1..N-1");
  MaxEntOptions opt;
  opt.measure = a.measure == "kl-regularized" ? PerformanceMeasure::kl_regularized : PerformanceMeasure::expected;

  VectorXd base, values;
  MaxEntSolution sol;
  std::string source;
  if (s.passive) {
    // tilt of the passive row against the next-step KL values
    source = "passive";
    const auto v = kl_value_backward(*s.passive).values;
    base = s.passive->kernel.row(a.state).transpose();
    values = v.slice(a.time + 1);
    sol = solve_for_performance(base, values, a.K, opt);
  } else {
    // Gibbs law over actions with their one-step lookahead costs
    source = "mdp";
    const auto& m = s.mdp->mdp;
    const auto v = bellman_backward(m).values;
    values.resize(m.num_actions());
    for (Index u = 0; u < m.num_actions(); ++u)
      values(u) = m.stage_cost(a.state, u) + m.transition[u].row(a.state).dot(v.slice(a.time + 1));
    base = VectorXd::Constant(m.num_actions(), 1.0 / static_cast<double>(m.num_actions()));
    sol = saridis_gibbs(values, a.K, opt);
  }
  Report r{"solve_maxent", {}, {{"index", "base", "value", "control"}, {}}};
  r.body = {{"source", source},      {"time", a.time},
            {"state", a.state},      {"measure", a.measure},
            {"K", number(a.K)},      {"base", to_json(base)},
            {"values", to_json(values)}, {"control", to_json(sol.control)},
            {"mu", number(sol.mu)},  {"lambda", number(sol.lambda)},
            {"achieved", number(sol.achieved)}, {"entropy", number(sol.entropy)}};
  for (Index i = 0; i < base.size(); ++i) r.table.rows.push_back({I(i), R(base(i)), R(values(i)), R(sol.control(i))});
  return r;
}

struct ThermoArgs {
  std::optional<std::string> mode;
  std::size_t samples = 0;
};

Report cmd_thermo_audit(const Context& c, const ThermoArgs& a) {
  const auto& t = need(c.scenario.thermo, "thermo", "thermo audit");
  const BackwardMode mode =
      a.mode ? (*a.mode == "reversal" ? BackwardMode::reversal : BackwardMode::detailed_balance) : t.mode;
  const EnergyModel* em = t.energy ? &*t.energy : nullptr;
  const auto ens = enumerate_paths(t.chain, c.max_paths);
  const auto bwd = backward_chain(t.chain, mode, em);
  const auto ep = entropy_production(ens, t.chain, bwd);

  Report r{"thermo_audit", {}, {{"path", "probability", "log_backward", "sigma", "system_term", "bath_term"}, {}}};
  if (em) {
    r.table.header.push_back("heat");
    r.table.header.push_back("work");
  }
  json paths = json::array();
  double max_residual = 0.0;
  std::vector<double> work(ens.size(), 0.0);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    json p = {{"path", ens.paths[i].states},
              {"probability", number(ens.probabilities[i])},
              {"log_backward", number(ep.backward_log_probabilities[i])},
              {"sigma", number(ep.sigma[i])},
              {"system_term", number(ep.system_term[i])},
              {"bath_term", number(ep.bath_term[i])}};
    std::vector<std::string> row = {path_text(ens.paths[i].states), R(ens.probabilities[i]),
                                    R(ep.backward_log_probabilities[i]), R(ep.sigma[i]),
                                    R(ep.system_term[i]), R(ep.bath_term[i])};
    if (em) {
      const auto led = heat_work_ledger(*em, ens.paths[i]);
      for (double res : led.first_law_residual) max_residual = std::max(max_residual, std::abs(res));
      work[i] = led.total_work;
      p["heat"] = number(led.total_heat);
      p["work"] = number(led.total_work);
      row.push_back(R(led.total_heat));
      row.push_back(R(led.total_work));
    }
    paths.push_back(p);
    r.table.rows.push_back(row);
  }
  json summary = {{"path_count", ens.size()},
                  {"mean_sigma", number(ep.mean_sigma)},
                  {"ift", number(ep.ift)},
                  {"infinite_sigma_paths", ep.infinite_sigma_paths}};
  if (em) {
    const auto gap = second_law_gap(ens, *em, t.chain);
    summary["mean_work"] = number(gap.mean_work);
    summary["delta_f"] = number(gap.delta_f);
    summary["gap"] = number(gap.gap);
    summary["max_first_law_residual"] = number(max_residual);
  }
  r.body = {{"mode", mode == BackwardMode::reversal ? "reversal" : "detailed-balance"},
            {"summary", summary},
            {"paths", paths}};
  if (a.samples > 0) {
    const auto sampled = sample_paths(t.chain, c.seed, a.samples);
    double sigma = 0.0, w = 0.0;
    for (const auto& tr : sampled) {
      const auto it = std::lower_bound(ens.paths.begin(), ens.paths.end(), tr);
      const auto i = static_cast<std::size_t>(it - ens.paths.begin());
      sigma += ep.sigma[i];
      w += work[i];
    }
    const double n = static_cast<double>(sampled.size());
    json mc = {{"samples", a.samples}, {"seed", c.seed}, {"mean_sigma", number(sigma / n)}};
    if (em) mc["mean_work"] = number(w / n);
    r.body["monte_carlo"] = mc;
  }
  return r;
}

Report cmd_info_audit(const Context& c, bool include_final_term) {
  const auto& s = c.scenario;
  if (!s.coupled && !s.parametric) fail(ErrorCode::InvalidScenario, "info audit needs a 'coupled' or 'parametric' block");
  Report r{"info_audit", json::object(), {{"section", "quantity", "index", "value"}, {}}};
  if (s.coupled) {
    SecondLawOptions opt;
    opt.mode = s.coupled->mode;
    opt.energy = s.coupled->energy;
    opt.max_paths = c.max_paths;
    const auto x = generalized_second_law_gap(s.coupled->system, opt);
    json j = {{"mode", s.coupled->mode == BackwardMode::reversal ? "reversal" : "detailed-balance"},
              {"i_ini", number(x.i_ini)},
              {"i_fin", number(x.i_fin)},
              {"i_tr_per_step", reals(x.i_tr_per_step)},
              {"i_tr_reduced_per_step", reals(x.i_tr_reduced_per_step)},
              {"d_marginal_markov", x.d_marginal_markov},
              {"i_tr_total", number(x.i_tr_total)},
              {"theta", number(x.theta)},
              {"mean_sigma", number(x.mean_sigma)},
              {"gap", number(x.gap)},
              {"ift_plain", number(x.ift_plain)},
              {"ift_info", number(x.ift_info)},
              {"infinite_sigma_paths", x.infinite_sigma_paths}};
    for (std::size_t k = 0; k < x.i_tr_per_step.size(); ++k) {
      r.table.rows.push_back({"coupled", "i_tr", I(static_cast<long long>(k) + 1), R(x.i_tr_per_step[k])});
      r.table.rows.push_back(
          {"coupled", "i_tr_reduced", I(static_cast<long long>(k) + 1), R(x.i_tr_reduced_per_step[k])});
    }
    for (auto [name, v] : {std::pair{"i_ini", x.i_ini}, {"i_fin", x.i_fin}, {"i_tr_total", x.i_tr_total},
                           {"theta", x.theta}, {"mean_sigma", x.mean_sigma}, {"gap", x.gap},
                           {"ift_plain", x.ift_plain}, {"ift_info", x.ift_info}})
      r.table.rows.push_back({"coupled", name, "", R(v)});
    if (x.work) {
      const auto& w = *x.work;
      j["work"] = {{"mean_work", number(w.mean_work)},
                   {"delta_f", number(w.delta_f)},
                   {"bound_as_written", number(w.bound_as_written)},
                   {"bound_sign_corrected", number(w.bound_sign_corrected)}};
      for (auto [name, v] : {std::pair{"mean_work", w.mean_work}, {"delta_f", w.delta_f},
                             {"bound_as_written", w.bound_as_written}, {"bound_sign_corrected", w.bound_sign_corrected}})
        r.table.rows.push_back({"coupled", name, "", R(v)});
    }
    r.body["coupled"] = j;
  }
  if (s.parametric) {
    const auto rep = parametric_info_objective(*s.parametric, include_final_term, c.max_paths);
    r.body["parametric"] = objective_json(rep);
    objective_rows(r.table, "parametric", rep);
  }
  return r;
}

struct InfoArgs {
  std::optional<double> beta;
  bool include_final_term = false;
  std::optional<std::string> solver;
};

InfoSolveOptions solve_options(const Context& c, const InfoArgs& a) {
  InfoSolveOptions o = c.scenario.info->solve;
  if (a.include_final_term) o.include_final_term = true;
  if (a.solver) o.solver = *a.solver == "alternating" ? InfoSolver::alternating : InfoSolver::brute_force;
  o.max_paths = c.max_paths;
  return o;
}

VectorXd state_initial(const Scenario& s) { return s.info->state_initial.value_or(s.mdp->initial); }

Report cmd_solve_info(const Context& c, const InfoArgs& a) {
  const auto& info = need(c.scenario.info, "info", "solve info");
  const auto opt = solve_options(c, a);
  const double beta = a.beta.value_or(info.beta);
  const auto sol = optimize_policy_uncertainty(c.scenario.mdp->mdp, info.policies, state_initial(c.scenario), beta, opt);
  Report r{"solve_info", {}, {{"section", "quantity", "index", "value"}, {}}};
  r.body = {{"solver", solver_name(opt.solver)},
            {"beta", number(beta)},
            {"model", model_json(sol.model)},
            {"report", objective_json(sol.report)},
            {"objective_trace", reals(sol.objective_trace)},
            {"sweeps", sol.objective_trace.size()},
            {"evaluations", sol.evaluations}};
  objective_rows(r.table, "report", sol.report);
  return r;
}

struct CalibrateArgs {
  int state = 0;
  double value = 0.0;
  std::optional<double> beta_lo, beta_hi;
};

Report cmd_calibrate(const Context& c, const CalibrateArgs& a) {
  const auto& info = need(c.scenario.info, "info", "calibrate-beta");
  CalibrationOptions opt;
  opt.solve = solve_options(c, {});
  opt.beta_lo = a.beta_lo.value_or(info.beta_lo);
  opt.beta_hi = a.beta_hi.value_or(info.beta_hi);
  const auto res = calibrate_beta(c.scenario.mdp->mdp, info.policies, a.state, a.value, opt);
  Report r{"calibrate_beta", {}, {{"beta", "achieved", "iterations"}, {}}};
  r.body = {{"reference_state", a.state},
            {"known_value", number(a.value)},
            {"beta_lo", number(opt.beta_lo)},
            {"beta_hi", number(opt.beta_hi)},
            {"beta", number(res.beta)},
            {"achieved", number(res.achieved)},
            {"iterations", res.iterations}};
  r.table.rows.push_back({R(res.beta), R(res.achieved), I(res.iterations)});
  return r;
}

struct SweepArgs {
  double from = 0.0, to = 0.0;
  int points = 0;
  InfoArgs info;
};

Report cmd_sweep(const Context& c, const SweepArgs& a) {
  const auto& info = need(c.scenario.info, "info", "sweep beta");
  if (!(a.from > 0) || !(a.to > 0) || !std::isfinite(a.from) || !std::isfinite(a.to))
    fail(ErrorCode::InvalidScenario, "--from and --to must be positive and finite");
  if (a.points < 1) fail(ErrorCode::InvalidScenario, "--points must be at least 1");
  const auto opt = solve_options(c, a.info);
  Report r{"sweep_beta", {}, {{"beta", "expected_cost", "i_tr_total", "i_fin", "objective"}, {}}};
  json points = json::array();
  for (int i = 0; i < a.points; ++i) {
    // geometric spacing
    const double beta = i == 0                ? a.from
                        : i == a.points - 1 ? a.to
                                            : std::exp(std::log(a.from) + (std::log(a.to) - std::log(a.from)) * i /
                                                                              static_cast<double>(a.points - 1));
    const auto sol =
        optimize_policy_uncertainty(c.scenario.mdp->mdp, info.policies, state_initial(c.scenario), beta, opt);
    const auto& rep = sol.report;
    points.push_back({{"beta", number(beta)},
                      {"expected_cost", number(rep.expected_cost)},
                      {"i_tr_total", number(rep.transfer_total)},
                      {"i_fin", number(rep.final_term)},
                      {"objective", number(rep.objective)}});
    r.table.rows.push_back(
        {R(beta), R(rep.expected_cost), R(rep.transfer_total), R(rep.final_term), R(rep.objective)});
  }
  r.body = {{"solver", solver_name(opt.solver)}, {"include_final_term", opt.include_final_term}, {"points", points}};
  return r;
}

// ---- plumbing ----

std::size_t cap_from_env(std::size_t fallback) {
  const char* v = std::getenv("THERMO_MDP_MAX_PATHS");
  if (!v || !*v) return fallback;
  std::size_t cap = 0;
  const std::string s(v);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
  if (ec != std::errc() || ptr != s.data() + s.size() || cap == 0)
    fail(ErrorCode::InvalidScenario, "THERMO_MDP_MAX_PATHS must be a positive integer");
  return cap;
}

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::numerical: return "numerical";
    case ErrorCategory::cap: return "cap";
  }
  return "validation";
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::validation: return kValidation;
    case ErrorCategory::numerical: return kNumerical;
    case ErrorCategory::cap: return kCap;
  }
  return kInternal;
}

void report_error(std::ostream& err, const std::string& code, const std::string& category, const std::string& msg) {
  err << json{{"error", {{"code", code}, {"category", category}, {"message", msg}}}}.dump() << "\n";
}

}  // namespace

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";  // no "-0"
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thermodynamic decision-making on finite MDPs", "thermo-mdp"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string format = "json", out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--out", out_dir, "Write the report under this directory instead of stdout");
  app.add_option("--seed", seed, "Override the scenario seed");

  std::string scenario_path;
  std::function<Report(const Context&)> action;
  auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& help) {
    auto* sub = parent->add_subcommand(name, help);
    sub->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    return sub;
  };

  auto* validate = leaf(&app, "validate", "Check a scenario and echo it normalized");
  validate->callback([&] { action = cmd_validate; });

  auto* solve = app.add_subcommand("solve", "Solvers")->require_subcommand(1);
  leaf(solve, "bellman", "Classical finite-horizon Bellman recursion")->callback([&] { action = cmd_bellman; });
  leaf(solve, "kl", "KL-control value recursion and optimal control")->callback([&] { action = cmd_kl; });

  MaxentArgs maxent;
  auto* maxent_cmd = leaf(solve, "maxent", "Minimum-KL control meeting a performance level");
  maxent_cmd->add_option("--K", maxent.K, "Performance level")->required();
  maxent_cmd->add_option("--state", maxent.state, "State whose control row is tilted");
  maxent_cmd->add_option("--time", maxent.time, "Decision time, 1..N-1");
  maxent_cmd->add_option("--measure", maxent.measure, "Constrained quantity")
      ->check(CLI::IsMember({"expected", "kl-regularized"}));
  maxent_cmd->callback([&] { action = [&](const Context& c) { return cmd_maxent(c, maxent); }; });

  InfoArgs info;
  auto* info_cmd = leaf(solve, "info", "Information-regularized policy optimization");
  info_cmd->add_option("--beta", info.beta, "Inverse temperature (default from the scenario)");
  info_cmd->add_flag("--include-final-term", info.include_final_term, "Charge the final information term");
  info_cmd->add_option("--solver", info.solver, "Optimizer")->check(CLI::IsMember({"alternating", "brute-force"}));
  info_cmd->callback([&] { action = [&](const Context& c) { return cmd_solve_info(c, info); }; });

  ThermoArgs thermo;
  auto* thermo_grp = app.add_subcommand("thermo", "Stochastic thermodynamics")->require_subcommand(1);
  auto* audit = leaf(thermo_grp, "audit", "Entropy production, fluctuation theorem and energetics");
  audit->add_option("--mode", thermo.mode, "Backward process")->check(CLI::IsMember({"reversal", "detailed-balance"}));
  audit->add_option("--samples", thermo.samples, "Monte Carlo paths drawn with the seed");
  audit->callback([&] { action = [&](const Context& c) { return cmd_thermo_audit(c, thermo); }; });

  bool audit_final = false;
  auto* info_grp = app.add_subcommand("info", "Information flows")->require_subcommand(1);
  auto* info_audit = leaf(info_grp, "audit", "Information exchange and the generalized second law");
  info_audit->add_flag("--include-final-term", audit_final, "Charge the final term in the parametric objective");
  info_audit->callback([&] { action = [&](const Context& c) { return cmd_info_audit(c, audit_final); }; });

  CalibrateArgs calib;
  auto* calib_cmd = leaf(&app, "calibrate-beta", "Find beta reproducing a known value");
  calib_cmd->add_option("--state", calib.state, "Reference state")->required();
  calib_cmd->add_option("--value", calib.value, "Known expected cost from the reference state")->required();
  calib_cmd->add_option("--beta-lo", calib.beta_lo, "Lower end of the beta bracket");
  calib_cmd->add_option("--beta-hi", calib.beta_hi, "Upper end of the beta bracket");
  calib_cmd->callback([&] { action = [&](const Context& c) { return cmd_calibrate(c, calib); }; });

  SweepArgs sweep;
  auto* sweep_grp = app.add_subcommand("sweep", "Parameter sweeps")->require_subcommand(1);
  auto* sweep_beta = leaf(sweep_grp, "beta", "Optimize over a geometric grid of beta");
  sweep_beta->add_option("--from", sweep.from, "First beta")->required();
  sweep_beta->add_option("--to", sweep.to, "Last beta")->required();
  sweep_beta->add_option("--points", sweep.points, "Number of grid points")->required();
  sweep_beta->add_flag("--include-final-term", sweep.info.include_final_term, "Charge the final information term");
  sweep_beta->add_option("--solver", sweep.info.solver, "Optimizer")
      ->check(CLI::IsMember({"alternating", "brute-force"}));
  sweep_beta->callback([&] { action = [&](const Context& c) { return cmd_sweep(c, sweep); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "UsageError", "validation", e.what());
    return kValidation;
  }

  try {
    Context ctx;
    ctx.scenario = load_scenario(scenario_path);
    ctx.seed = seed.value_or(ctx.scenario.seed);
    ctx.max_paths = cap_from_env(ctx.scenario.max_paths);
    ctx.csv = format == "csv";
    Report rep = action(ctx);

    std::string text;
    if (ctx.csv) {
      text = to_csv(rep.table);
    } else {
      if (rep.name != "validate") {
        rep.body["seed"] = ctx.seed;
        rep.body["max_paths"] = ctx.max_paths;
      }
      text = rep.body.dump(2) + "\n";
    }
    if (out_dir.empty()) {
      out << text;
    } else {
      std::filesystem::create_directories(out_dir);
      const auto file = std::filesystem::path(out_dir) / (rep.name + (ctx.csv ? ".csv" : ".json"));
      std::ofstream f(file, std::ios::binary);
      f << text;
      if (!f) throw std::runtime_error("cannot write " + file.string());
    }
    return kOk;
  } catch (const Error& e) {
    report_error(err, std::string(to_string(e.code())), category_name(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    report_error(err, "InternalError", "internal", e.what());
    return kInternal;
  }
}

}  // namespace thermo_mdp::cli
