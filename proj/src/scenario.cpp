#include "thermo_mdp/scenario.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>

namespace thermo_mdp {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  fail(ErrorCode::InvalidScenario, where + ": " + what);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad(where, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) bad(where, "unknown field '" + k + "'");
}

const json& required(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) bad(where, std::string("missing field '") + key + "'");
  return obj.at(key);
}

double real(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  bad(where, "expected a number");
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) bad(where, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) bad(where, "integer out of range");
  return static_cast<int>(v);
}

bool boolean(const json& j, const std::string& where) {
  if (!j.is_boolean()) bad(where, "expected true or false");
  return j.get<bool>();
}

std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) bad(where, "expected a string");
  return j.get<std::string>();
}

VectorXd vector(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) bad(where, "expected a nonempty array of numbers");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = real(j[i], where);
  return v;
}

std::vector<int> int_list(const json& j, const std::string& where) {
  if (!j.is_array()) bad(where, "expected an array of integers");
  std::vector<int> v;
  for (const auto& x : j) v.push_back(integer(x, where));
  return v;
}

MatrixXd matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) bad(where, "expected a nonempty table");
  const std::size_t cols = j[0].size();
  MatrixXd m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) bad(where, "rows must all have length " + std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = real(j[r][c], where);
  }
  return m;
}

std::vector<MatrixXd> matrices(const json& j, const std::string& where) {
  if (!j.is_array()) bad(where, "expected an array of tables");
  std::vector<MatrixXd> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(matrix(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

BackwardMode mode(const json& j, const std::string& where) {
  const auto s = text(j, where);
  if (s == "reversal") return BackwardMode::reversal;
  if (s == "detailed-balance") return BackwardMode::detailed_balance;
  bad(where, "mode must be 'reversal' or 'detailed-balance'");
}

const char* mode_name(BackwardMode m) { return m == BackwardMode::reversal ? "reversal" : "detailed-balance"; }

MatrixXd renormalized(MatrixXd m, const std::string& where) {
  for (Index r = 0; r < m.rows(); ++r) {
    if ((m.row(r).array() < 0).any()) fail(ErrorCode::NegativeProbability, where + ": negative probability");
    const double s = m.row(r).sum();
    if (std::abs(s - 1.0) > kIngestTol)
      fail(ErrorCode::NonStochasticRow, where + ": row " + std::to_string(r) + " sums to " + std::to_string(s));
    m.row(r) /= s;
  }
  return m;
}

VectorXd renormalized(const VectorXd& v, const std::string& where) {
  return renormalized(MatrixXd(v.transpose()), where).row(0).transpose();
}

FiniteMdp parse_mdp_tables(const json& j, const std::string& where, int horizon) {
  RawMdp raw;
  raw.horizon = horizon;
  raw.transition = matrices(required(j, "transition", where), where + ".transition");
  const bool has_cost = j.contains("cost"), has_reward = j.contains("reward");
  if (has_cost == has_reward) bad(where, "give exactly one of 'cost' or 'reward'");
  raw.rewards = has_reward;
  raw.cost = matrices(has_cost ? j.at("cost") : j.at("reward"), where + (has_cost ? ".cost" : ".reward"));
  return validate_mdp(raw);
}

MdpBlock parse_mdp(const json& j) {
  const std::string w = "mdp";
  check_keys(j, w, {"horizon", "transition", "cost", "reward", "initial"});
  MdpBlock b;
  b.mdp = parse_mdp_tables(j, w, integer(required(j, "horizon", w), w + ".horizon"));
  const Index n = b.mdp.num_states();
  b.initial = j.contains("initial") ? renormalized(vector(j.at("initial"), w + ".initial"), w + ".initial")
                                    : VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  if (b.initial.size() != n) fail(ErrorCode::DimensionMismatch, w + ".initial has the wrong length");
  return b;
}

PassiveDynamics parse_passive(const json& j) {
  const std::string w = "passive";
  check_keys(j, w, {"kernel", "state_cost", "horizon", "terminal"});
  PassiveDynamics p;
  p.kernel = renormalized(matrix(required(j, "kernel", w), w + ".kernel"), w + ".kernel");
  p.horizon = integer(required(j, "horizon", w), w + ".horizon");
  p.state_cost = j.contains("state_cost") ? vector(j.at("state_cost"), w + ".state_cost")
                                          : VectorXd::Zero(p.kernel.rows());
  p.terminal = j.contains("terminal") ? vector(j.at("terminal"), w + ".terminal") : VectorXd::Zero(p.kernel.rows());
  validate_passive(p);
  return p;
}

MarkovChain parse_chain(const json& j, const std::string& w) {
  check_keys(j, w, {"initial", "kernel", "horizon", "steps"});
  MarkovChain c;
  c.initial = renormalized(vector(required(j, "initial", w), w + ".initial"), w + ".initial");
  const bool stationary = j.contains("kernel");
  if (stationary == j.contains("steps")) bad(w, "give either 'kernel' with 'horizon' or 'steps'");
  if (stationary) {
    const int n = integer(required(j, "horizon", w), w + ".horizon");
    if (n < 1) bad(w, "horizon must be at least 1");
    c = stationary_chain(c.initial, renormalized(matrix(j.at("kernel"), w + ".kernel"), w + ".kernel"), n);
  } else {
    if (j.contains("horizon")) bad(w, "'horizon' is implied by 'steps'");
    for (auto& m : matrices(j.at("steps"), w + ".steps")) c.steps.push_back(renormalized(m, w + ".steps"));
  }
  validate_chain(c);
  return c;
}

ThermoBlock parse_thermo(const json& j) {
  const std::string w = "thermo";
  check_keys(j, w, {"chain", "energy", "mode"});
  ThermoBlock b;
  b.chain = parse_chain(required(j, "chain", w), w + ".chain");
  if (j.contains("energy")) {
    const json& e = j.at("energy");
    check_keys(e, w + ".energy", {"table", "protocol", "beta"});
    EnergyModel m;
    m.energy = matrix(required(e, "table", w + ".energy"), w + ".energy.table");
    m.protocol = int_list(required(e, "protocol", w + ".energy"), w + ".energy.protocol");
    m.beta = e.contains("beta") ? real(e.at("beta"), w + ".energy.beta") : 1.0;
    validate_energy_model(m);
    if (m.num_states() != b.chain.num_states())
      fail(ErrorCode::DimensionMismatch, "thermo.energy.table needs one row per chain state");
    if (static_cast<int>(m.protocol.size()) != b.chain.horizon() - 1)
      fail(ErrorCode::ProtocolLengthMismatch, "thermo.energy.protocol needs N-1 entries");
    b.energy = m;
  }
  if (j.contains("mode")) b.mode = mode(j.at("mode"), w + ".mode");
  return b;
}

CoupledBlock parse_coupled(const json& j) {
  const std::string w = "coupled";
  check_keys(j, w, {"horizon", "initial", "d_kernel", "x_kernel", "energy", "mode"});
  CoupledBlock b;
  auto& s = b.system;
  s.horizon = integer(required(j, "horizon", w), w + ".horizon");
  s.initial = matrix(required(j, "initial", w), w + ".initial");
  s.nx = s.initial.rows();
  s.nd = s.initial.cols();
  if ((s.initial.array() < 0).any()) fail(ErrorCode::NegativeProbability, w + ".initial has a negative entry");
  if (std::abs(s.initial.sum() - 1.0) > kIngestTol)
    fail(ErrorCode::UnnormalizedJoint, w + ".initial sums to " + std::to_string(s.initial.sum()));
  s.initial /= s.initial.sum();
  s.d_kernel = matrices(required(j, "d_kernel", w), w + ".d_kernel");
  s.x_kernel = matrices(required(j, "x_kernel", w), w + ".x_kernel");
  for (auto& m : s.d_kernel) m = renormalized(m, w + ".d_kernel");
  for (auto& m : s.x_kernel) m = renormalized(m, w + ".x_kernel");
  validate_coupled(s);
  if (j.contains("energy")) {
    const json& e = j.at("energy");
    check_keys(e, w + ".energy", {"table", "beta"});
    CoupledEnergyModel m;
    m.energy = matrix(required(e, "table", w + ".energy"), w + ".energy.table");
    m.beta = e.contains("beta") ? real(e.at("beta"), w + ".energy.beta") : 1.0;
    if (m.energy.rows() != s.nx || m.energy.cols() != s.nd)
      fail(ErrorCode::DimensionMismatch, "coupled.energy.table must be |X| x |D|");
    if (!m.energy.allFinite()) fail(ErrorCode::NonFiniteCost, "coupled.energy.table must be finite");
    if (!(m.beta > 0) || !std::isfinite(m.beta)) bad(w + ".energy.beta", "must be positive");
    b.energy = m;
  }
  if (j.contains("mode")) b.mode = mode(j.at("mode"), w + ".mode");
  if (b.mode == BackwardMode::detailed_balance && !b.energy)
    fail(ErrorCode::MissingEnergyModel, "coupled.mode detailed-balance needs coupled.energy");
  return b;
}

InfoSolver solver(const json& j, const std::string& where) {
  const auto s = text(j, where);
  if (s == "alternating") return InfoSolver::alternating;
  if (s == "brute-force") return InfoSolver::brute_force;
  bad(where, "solver must be 'alternating' or 'brute-force'");
}

InfoBlock parse_info(const json& j, const MdpBlock& mdp) {
  const std::string w = "info";
  check_keys(j, w, {"policies", "state_initial", "beta", "include_final_term", "solver", "grid_resolution", "tol",
                    "max_sweeps", "calibration"});
  InfoBlock b;
  const json& p = j.contains("policies") ? j.at("policies") : json("all_deterministic");
  if (p.is_string()) {
    if (p.get<std::string>() != "all_deterministic") bad(w + ".policies", "expected 'all_deterministic' or a list");
    b.all_deterministic = true;
    b.policies = all_deterministic_policies(mdp.mdp.num_states(), mdp.mdp.num_actions());
  } else {
    if (!p.is_array() || p.empty()) bad(w + ".policies", "expected a nonempty list of decision rules");
    for (const auto& r : p) b.policies.push_back(int_list(r, w + ".policies"));
  }
  if (j.contains("state_initial"))
    b.state_initial = renormalized(vector(j.at("state_initial"), w + ".state_initial"), w + ".state_initial");
  if (j.contains("beta")) b.beta = real(j.at("beta"), w + ".beta");
  if (j.contains("include_final_term")) b.solve.include_final_term = boolean(j.at("include_final_term"), w);
  if (j.contains("solver")) b.solve.solver = solver(j.at("solver"), w + ".solver");
  if (j.contains("grid_resolution")) b.solve.grid_resolution = real(j.at("grid_resolution"), w + ".grid_resolution");
  if (j.contains("tol")) b.solve.tol = real(j.at("tol"), w + ".tol");
  if (j.contains("max_sweeps")) b.solve.max_sweeps = integer(j.at("max_sweeps"), w + ".max_sweeps");
  if (j.contains("calibration")) {
    const json& c = j.at("calibration");
    check_keys(c, w + ".calibration", {"beta_lo", "beta_hi"});
    if (c.contains("beta_lo")) b.beta_lo = real(c.at("beta_lo"), w + ".calibration.beta_lo");
    if (c.contains("beta_hi")) b.beta_hi = real(c.at("beta_hi"), w + ".calibration.beta_hi");
  }
  // validates the policy set, the state law and beta against the mdp
  validate_policy_model(mdp.mdp, uniform_policy_model(mdp.mdp, b.policies, b.state_initial.value_or(mdp.initial),
                                                      b.beta));
  return b;
}

ParametricBelief parse_parametric(const json& j) {
  const std::string w = "parametric";
  check_keys(j, w, {"horizon", "family", "prior", "true_parameter", "rule", "state_initial", "beta"});
  ParametricBelief b;
  const int horizon = integer(required(j, "horizon", w), w + ".horizon");
  const json& fam = required(j, "family", w);
  if (!fam.is_array() || fam.empty()) bad(w + ".family", "expected a nonempty list of models");
  for (std::size_t i = 0; i < fam.size(); ++i) {
    const std::string wi = w + ".family[" + std::to_string(i) + "]";
    check_keys(fam[i], wi, {"transition", "cost", "reward"});
    b.family.push_back(parse_mdp_tables(fam[i], wi, horizon));
  }
  const Index nl = static_cast<Index>(b.family.size());
  b.prior = j.contains("prior") ? renormalized(vector(j.at("prior"), w + ".prior"), w + ".prior")
                                : VectorXd::Constant(nl, 1.0 / static_cast<double>(nl));
  b.true_parameter = j.contains("true_parameter") ? integer(j.at("true_parameter"), w + ".true_parameter") : 0;
  for (auto& m : matrices(required(j, "rule", w), w + ".rule")) b.rule.push_back(renormalized(m, w + ".rule"));
  const Index ns = b.family.front().num_states();
  b.state_initial = j.contains("state_initial")
                        ? renormalized(vector(j.at("state_initial"), w + ".state_initial"), w + ".state_initial")
                        : VectorXd::Constant(ns, 1.0 / static_cast<double>(ns));
  b.beta = j.contains("beta") ? real(j.at("beta"), w + ".beta") : 1.0;
  lower_parametric(b);  // full validation
  return b;
}

void require_same_states(const char* a, Index na, const char* b, Index nb) {
  if (na != nb)
    fail(ErrorCode::DimensionMismatch, std::string(a) + " has " + std::to_string(na) + " states but " + b + " has " +
                                           std::to_string(nb));
}

json mdp_json(const FiniteMdp& m) {
  json t = json::array(), c = json::array();
  for (Index a = 0; a < m.num_actions(); ++a) {
    t.push_back(to_json(m.transition[a]));
    c.push_back(to_json(m.cost[a]));
  }
  return {{"horizon", m.horizon}, {"transition", t}, {"cost", c}};
}

json matrices_json(const std::vector<MatrixXd>& ms) {
  json out = json::array();
  for (const auto& m : ms) out.push_back(to_json(m));
  return out;
}

}  // namespace

json number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x == 0.0 ? 0.0 : x;  // no "-0.0"
}

json to_json(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

json to_json(const MatrixXd& m) {
  json out = json::array();
  for (Index r = 0; r < m.rows(); ++r) out.push_back(to_json(VectorXd(m.row(r).transpose())));
  return out;
}

Scenario parse_scenario(const json& doc) {
  check_keys(doc, "scenario", {"schema_version", "seed", "max_paths", "mdp", "passive", "thermo", "coupled", "info",
                               "parametric"});
  Scenario s;
  s.schema_version = text(required(doc, "schema_version", "scenario"), "schema_version");
  if (s.schema_version != kSchemaVersion)
    bad("schema_version", "unsupported version '" + s.schema_version + "', expected '" + kSchemaVersion + "'");
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) bad("seed", "expected a nonnegative integer");
    s.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (doc.contains("max_paths")) {
    if (!doc.at("max_paths").is_number_unsigned() || doc.at("max_paths").get<std::uint64_t>() == 0)
      bad("max_paths", "expected a positive integer");
    s.max_paths = doc.at("max_paths").get<std::size_t>();
  }
  if (doc.contains("mdp")) s.mdp = parse_mdp(doc.at("mdp"));
  if (doc.contains("passive")) s.passive = parse_passive(doc.at("passive"));
  if (doc.contains("thermo")) s.thermo = parse_thermo(doc.at("thermo"));
  if (doc.contains("coupled")) s.coupled = parse_coupled(doc.at("coupled"));
  if (doc.contains("info")) {
    if (!s.mdp) bad("info", "needs an mdp block");
    s.info = parse_info(doc.at("info"), *s.mdp);
  }
  if (doc.contains("parametric")) s.parametric = parse_parametric(doc.at("parametric"));
  if (!s.mdp && !s.passive && !s.thermo && !s.coupled && !s.parametric) bad("scenario", "no blocks present");

  // every block describes the same state set
  std::optional<std::pair<const char*, Index>> first;
  auto agree = [&](const char* name, Index n) {
    if (first)
      require_same_states(first->first, first->second, name, n);
    else
      first = std::make_pair(name, n);
  };
  if (s.mdp) agree("mdp", s.mdp->mdp.num_states());
  if (s.passive) agree("passive", s.passive->num_states());
  if (s.thermo) agree("thermo", s.thermo->chain.num_states());
  if (s.coupled) agree("coupled", s.coupled->system.nx);
  if (s.parametric) agree("parametric", s.parametric->family.front().num_states());
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidScenario, "cannot open scenario file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidScenario, "'" + path + "' is not valid JSON: " + e.what());
  }
  return parse_scenario(doc);
}

json normalized_json(const Scenario& s) {
  json out = {{"schema_version", s.schema_version}, {"seed", s.seed}, {"max_paths", s.max_paths}};
  if (s.mdp) {
    out["mdp"] = mdp_json(s.mdp->mdp);
    out["mdp"]["initial"] = to_json(s.mdp->initial);
  }
  if (s.passive) {
    const auto& p = *s.passive;
    out["passive"] = {{"kernel", to_json(p.kernel)},
                      {"state_cost", to_json(p.state_cost)},
                      {"horizon", p.horizon},
                      {"terminal", to_json(p.terminal)}};
  }
  if (s.thermo) {
    const auto& t = *s.thermo;
    out["thermo"] = {{"chain", {{"initial", to_json(t.chain.initial)}, {"steps", matrices_json(t.chain.steps)}}},
                     {"mode", mode_name(t.mode)}};
    if (t.energy)
      out["thermo"]["energy"] = {
          {"table", to_json(t.energy->energy)}, {"protocol", t.energy->protocol}, {"beta", number(t.energy->beta)}};
  }
  if (s.coupled) {
    const auto& c = *s.coupled;
    out["coupled"] = {{"horizon", c.system.horizon},
                      {"initial", to_json(c.system.initial)},
                      {"d_kernel", matrices_json(c.system.d_kernel)},
                      {"x_kernel", matrices_json(c.system.x_kernel)},
                      {"mode", mode_name(c.mode)}};
    if (c.energy) out["coupled"]["energy"] = {{"table", to_json(c.energy->energy)}, {"beta", number(c.energy->beta)}};
  }
  if (s.info) {
    const auto& i = *s.info;
    out["info"] = {{"policies", i.policies},
                   {"state_initial", to_json(i.state_initial.value_or(s.mdp->initial))},
                   {"beta", number(i.beta)},
                   {"include_final_term", i.solve.include_final_term},
                   {"solver", i.solve.solver == InfoSolver::alternating ? "alternating" : "brute-force"},
                   {"grid_resolution", number(i.solve.grid_resolution)},
                   {"tol", number(i.solve.tol)},
                   {"max_sweeps", i.solve.max_sweeps},
                   {"calibration", {{"beta_lo", number(i.beta_lo)}, {"beta_hi", number(i.beta_hi)}}}};
  }
  if (s.parametric) {
    const auto& p = *s.parametric;
    json fam = json::array();
    for (const auto& m : p.family) {
      json e = mdp_json(m);
      e.erase("horizon");
      fam.push_back(e);
    }
    out["parametric"] = {{"horizon", p.family.front().horizon},
                         {"family", fam},
                         {"prior", to_json(p.prior)},
                         {"true_parameter", p.true_parameter},
                         {"rule", matrices_json(p.rule)},
                         {"state_initial", to_json(p.state_initial)},
                         {"beta", number(p.beta)}};
  }
  return out;
}

}  // namespace thermo_mdp
