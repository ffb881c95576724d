#include "thermo_mdp/info_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

namespace thermo_mdp {

namespace {

double inverse_beta(double beta) {
  if (!(beta > 0) || std::isnan(beta)) fail(ErrorCode::InvalidScenario, "beta must be positive");
  return std::isinf(beta) ? 0.0 : 1.0 / beta;
}

// Stage cost of rule d at state x, c(x, pi_d(x)).
MatrixXd policy_stage_costs(const FiniteMdp& mdp, const PolicySet& policies) {
  MatrixXd c(mdp.num_states(), static_cast<Index>(policies.size()));
  for (std::size_t d = 0; d < policies.size(); ++d)
    for (Index x = 0; x < mdp.num_states(); ++x) c(x, static_cast<Index>(d)) = mdp.stage_cost(x, policies[d][x]);
  return c;
}

// sum_k E[c(x_k, d_{k-1})], k = 1..N-1, with c indexed (x, d).
double expected_stage_cost(const CoupledEnsemble& ens, const MatrixXd& c) {
  double total = 0.0;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    double path_cost = 0.0;
    for (int k = 1; k < ens.horizon; ++k)
      path_cost += c(ens.paths[i][static_cast<std::size_t>(ens.x_coord(k))],
                     ens.paths[i][static_cast<std::size_t>(ens.d_coord(k - 1))]);
    total += ens.probabilities[i] * path_cost;
  }
  return total;
}

InfoObjectiveReport assemble_report(double cost, const InfoExchangeReport& ie, double beta, bool include_final) {
  InfoObjectiveReport r;
  r.expected_cost = cost;
  r.transfer_terms = ie.i_tr_per_step;
  r.transfer_terms_reduced = ie.i_tr_reduced_per_step;
  r.transfer_total = ie.i_tr_total;
  r.final_term = ie.i_fin;
  r.initial_term = ie.i_ini;
  r.theta = ie.theta;
  r.beta_inverse = inverse_beta(beta);
  r.include_final_term = include_final;
  r.objective = cost - r.beta_inverse * r.transfer_total + (include_final ? r.beta_inverse * r.final_term : 0.0);
  return r;
}

// One optimizable row: the law of d_0 (table = -1) or a row of nu[table].
struct RowRef {
  int table;
  Index row;
};

VectorXd get_row(const PolicyUncertaintyModel& m, const RowRef& r) {
  if (r.table < 0) return m.policy_initial;
  return m.nu[static_cast<std::size_t>(r.table)].row(r.row).transpose();
}

void set_row(PolicyUncertaintyModel& m, const RowRef& r, const VectorXd& v) {
  if (r.table < 0)
    m.policy_initial = v;
  else
    m.nu[static_cast<std::size_t>(r.table)].row(r.row) = v.transpose();
}

// Backward in time, then the initial law.
std::vector<RowRef> optimization_rows(const PolicyUncertaintyModel& m) {
  std::vector<RowRef> rows;
  for (int t = static_cast<int>(m.nu.size()) - 1; t >= 0; --t)
    for (Index r = 0; r < m.nu[static_cast<std::size_t>(t)].rows(); ++r) rows.push_back({t, r});
  rows.push_back({-1, 0});
  return rows;
}

// Objective w_cost E[c] - w_info (I_tr - [final] I_fin); the public objective is w_cost = 1,
// w_info = 1/beta.
class Problem {
 public:
  Problem(const FiniteMdp& mdp, const PolicySet& policies, bool include_final, std::size_t max_paths, double w_cost,
          double w_info)
      : mdp_(mdp),
        costs_(policy_stage_costs(mdp, policies)),
        include_final_(include_final),
        max_paths_(max_paths),
        w_cost_(w_cost),
        w_info_(w_info) {}

  struct Eval {
    double objective;
    double cost;
    CoupledEnsemble ensemble;
    InfoExchangeReport info;
  };

  Eval evaluate(const PolicyUncertaintyModel& m) {
    ++evaluations;
    Eval e{0.0, 0.0, build_coupled_ensemble(lower_policy_model(mdp_, m), max_paths_), {}};
    e.info = info_exchange(e.ensemble);
    e.cost = expected_stage_cost(e.ensemble, costs_);
    e.objective = w_cost_ * e.cost - w_info_ * (e.info.i_tr_total - (include_final_ ? e.info.i_fin : 0.0));
    return e;
  }

  double objective(const PolicyUncertaintyModel& m) { return evaluate(m).objective; }

  double w_cost() const { return w_cost_; }
  double w_info() const { return w_info_; }

  std::size_t evaluations = 0;

 private:
  const FiniteMdp& mdp_;
  MatrixXd costs_;
  bool include_final_;
  std::size_t max_paths_;
  double w_cost_;
  double w_info_;
};

// P(context of row) and the current conditional law m(d' | d_prev) of the row's output.
struct RowContext {
  double probability = 0.0;
  VectorXd marginal;
};

RowContext row_context(const CoupledEnsemble& ens, const PolicyUncertaintyModel& m, const RowRef& r) {
  const Index nd = ens.nd;
  RowContext ctx;
  if (r.table <= 0) {
    // d_0 law, or nu[0](. | d_0 = row): the output marginal given the context is the row itself
    ctx.marginal = get_row(m, r);
    if (r.table < 0) {
      ctx.probability = 1.0;
    } else {
      for (std::size_t i = 0; i < ens.size(); ++i)
        if (ens.paths[i][static_cast<std::size_t>(ens.d_coord(0))] == r.row) ctx.probability += ens.probabilities[i];
    }
    return ctx;
  }
  const int k = r.table + 1;  // the row draws d_k from (x_{k-1}, d_{k-1})
  const Index x_ctx = r.row / nd;
  const Index d_ctx = r.row % nd;
  VectorXd joint = VectorXd::Zero(nd);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto& p = ens.paths[i];
    if (p[static_cast<std::size_t>(ens.d_coord(k - 1))] != d_ctx) continue;
    joint(p[static_cast<std::size_t>(ens.d_coord(k))]) += ens.probabilities[i];
    if (p[static_cast<std::size_t>(ens.x_coord(k - 1))] == x_ctx) ctx.probability += ens.probabilities[i];
  }
  const double z = joint.sum();
  ctx.marginal = z > 0 ? VectorXd(joint / z) : get_row(m, r);
  return ctx;
}

// Golden-section search on t in [0, 1] along a -> b; returns the best point seen.
std::pair<VectorXd, double> line_search(Problem& prob, PolicyUncertaintyModel& m, const RowRef& r, const VectorXd& a,
                                        double fa, const VectorXd& b, int steps) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  auto f = [&](double t) {
    set_row(m, r, ((1.0 - t) * a + t * b).eval());
    return prob.objective(m);
  };
  VectorXd best = a;
  double best_f = fa;
  auto consider = [&](double t, double v) {
    if (v < best_f) {
      best_f = v;
      best = (1.0 - t) * a + t * b;
    }
  };
  double lo = 0.0, hi = 1.0;
  double t1 = hi - g * (hi - lo), t2 = lo + g * (hi - lo);
  double f1 = f(t1), f2 = f(t2);
  consider(t1, f1);
  consider(t2, f2);
  for (int i = 0; i < steps; ++i) {
    if (f1 <= f2) {
      hi = t2;
      t2 = t1;
      f2 = f1;
      t1 = hi - g * (hi - lo);
      f1 = f(t1);
      consider(t1, f1);
    } else {
      lo = t1;
      t1 = t2;
      f1 = f2;
      t2 = lo + g * (hi - lo);
      f2 = f(t2);
      consider(t2, f2);
    }
  }
  return {best, best_f};
}

// Best row among the vertices, the marginal-times-tilt update and line searches from the
// incumbent; the row only changes on strict improvement.
double update_row(Problem& prob, PolicyUncertaintyModel& m, const RowRef& r, double current, int ls_steps) {
  const Index nd = static_cast<Index>(m.policies.size());
  const VectorXd incumbent = get_row(m, r);
  const Problem::Eval base = prob.evaluate(m);
  const RowContext ctx = row_context(base.ensemble, m, r);

  VectorXd best = incumbent;
  double best_f = current;
  std::vector<VectorXd> targets;
  VectorXd vertex_cost(nd);
  for (Index d = 0; d < nd; ++d) {
    VectorXd v = VectorXd::Zero(nd);
    v(d) = 1.0;
    set_row(m, r, v);
    const Problem::Eval e = prob.evaluate(m);
    vertex_cost(d) = e.cost;
    if (e.objective < best_f) {
      best_f = e.objective;
      best = v;
    }
    targets.push_back(v);
  }
  if (prob.w_info() > 0 && ctx.probability > 0) {
    // marginal times exp(-(w_cost / w_info) Phi), Phi the per-context cost of each vertex
    VectorXd tilt;
    const VectorXd phi = (vertex_cost.array() - vertex_cost.minCoeff()).matrix() / ctx.probability;
    const double lz = gibbs_tilt(ctx.marginal, phi, prob.w_cost() / prob.w_info(), tilt);
    if (std::isfinite(lz) && tilt.allFinite()) {
      set_row(m, r, tilt);
      const double f = prob.objective(m);
      if (f < best_f) {
        best_f = f;
        best = tilt;
      }
      targets.push_back(tilt);
    }
  }
  if (ctx.probability > 0) {
    for (const auto& t : targets) {
      if ((t - best).cwiseAbs().maxCoeff() < 1e-15) continue;
      auto [x, fx] = line_search(prob, m, r, best, best_f, t, ls_steps);
      if (fx < best_f) {
        best_f = fx;
        best = x;
      }
    }
  }
  set_row(m, r, best_f < current ? best : incumbent);
  return std::min(best_f, current);
}

// All points of the simplex grid with `parts` steps over n coordinates.
std::vector<VectorXd> simplex_grid(Index n, int parts) {
  std::vector<VectorXd> out;
  std::vector<int> c(static_cast<std::size_t>(n), 0);
  std::function<void(Index, int)> rec = [&](Index i, int left) {
    if (i == n - 1) {
      c[static_cast<std::size_t>(i)] = left;
      VectorXd v(n);
      for (Index j = 0; j < n; ++j) v(j) = static_cast<double>(c[static_cast<std::size_t>(j)]) / parts;
      out.push_back(v);
      return;
    }
    for (int a = left; a >= 0; --a) {
      c[static_cast<std::size_t>(i)] = a;
      rec(i + 1, left - a);
    }
  };
  rec(0, parts);
  return out;
}

InfoSolution solve_alternating(Problem& prob, PolicyUncertaintyModel m, const InfoSolveOptions& options) {
  const auto rows = optimization_rows(m);
  InfoSolution sol;
  double f = prob.objective(m);
  for (int sweep = 0;; ++sweep) {
    if (sweep >= options.max_sweeps)
      fail(ErrorCode::NoConvergence, "alternating solver hit the sweep cap of " + std::to_string(options.max_sweeps));
    const double before = f;
    for (const auto& r : rows) f = update_row(prob, m, r, f, options.line_search_steps);
    sol.objective_trace.push_back(f);
    if (before - f < options.tol) break;
  }
  sol.model = std::move(m);
  return sol;
}

InfoSolution solve_brute_force(Problem& prob, PolicyUncertaintyModel m, const InfoSolveOptions& options) {
  const int parts = static_cast<int>(std::lround(1.0 / options.grid_resolution));
  if (parts < 1 || std::abs(parts * options.grid_resolution - 1.0) > 1e-9)
    fail(ErrorCode::InvalidScenario, "grid resolution must divide one");
  const auto rows = optimization_rows(m);
  const auto grid = simplex_grid(static_cast<Index>(m.policies.size()), parts);
  double total = 1.0;
  for (std::size_t i = 0; i < rows.size(); ++i) total *= static_cast<double>(grid.size());
  if (total > static_cast<double>(options.max_grid_evaluations))
    fail(ErrorCode::EnumerationCapExceeded, "grid search needs " + std::to_string(total) + " evaluations, cap is " +
                                                std::to_string(options.max_grid_evaluations));

  std::vector<std::size_t> idx(rows.size(), 0);
  for (const auto& r : rows) set_row(m, r, grid[0]);
  PolicyUncertaintyModel best = m;
  double best_f = std::numeric_limits<double>::infinity();
  for (;;) {
    const double f = prob.objective(m);
    if (f < best_f) {
      best_f = f;
      best = m;
    }
    std::size_t j = 0;
    for (; j < rows.size(); ++j) {
      if (++idx[j] < grid.size()) {
        set_row(m, rows[j], grid[idx[j]]);
        break;
      }
      idx[j] = 0;
      set_row(m, rows[j], grid[0]);
    }
    if (j == rows.size()) break;
  }
  InfoSolution sol;
  sol.model = std::move(best);
  return sol;
}

InfoSolution solve_weighted(const FiniteMdp& mdp, const PolicySet& policies, const VectorXd& state_initial,
                            double beta, double w_cost, double w_info, const InfoSolveOptions& options,
                            const std::optional<PolicyUncertaintyModel>& start) {
  PolicyUncertaintyModel m = start ? *start : uniform_policy_model(mdp, policies, state_initial, beta);
  m.beta = beta;
  validate_policy_model(mdp, m);
  Problem prob(mdp, policies, options.include_final_term, options.max_paths, w_cost, w_info);
  InfoSolution sol = options.solver == InfoSolver::alternating ? solve_alternating(prob, std::move(m), options)
                                                              : solve_brute_force(prob, std::move(m), options);
  sol.evaluations = prob.evaluations;
  sol.report = info_objective(mdp, sol.model, options.include_final_term, options.max_paths);
  return sol;
}

PolicyUncertaintyModel blend(const PolicyUncertaintyModel& a, const PolicyUncertaintyModel& b, double theta) {
  PolicyUncertaintyModel m = a;
  m.policy_initial = (1.0 - theta) * a.policy_initial + theta * b.policy_initial;
  for (std::size_t t = 0; t < m.nu.size(); ++t) m.nu[t] = (1.0 - theta) * a.nu[t] + theta * b.nu[t];
  return m;
}

}  // namespace

PolicySet all_deterministic_policies(Index num_states, Index num_actions, std::size_t limit) {
  if (num_states < 1 || num_actions < 1) fail(ErrorCode::EmptyStateSet, "need states and actions");
  double count = std::pow(static_cast<double>(num_actions), static_cast<double>(num_states));
  if (count > static_cast<double>(limit))
    fail(ErrorCode::EnumerationCapExceeded, "|A|^|S| = " + std::to_string(count) + " exceeds " +
                                                std::to_string(limit) + "; supply an explicit policy set");
  PolicySet out;
  std::vector<int> rule(static_cast<std::size_t>(num_states), 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
    out.push_back(rule);
    for (Index s = num_states - 1; s >= 0; --s) {
      if (++rule[static_cast<std::size_t>(s)] < num_actions) break;
      rule[static_cast<std::size_t>(s)] = 0;
    }
  }
  return out;
}

PolicyUncertaintyModel uniform_policy_model(const FiniteMdp& mdp, const PolicySet& policies,
                                            const VectorXd& state_initial, double beta) {
  const Index nd = static_cast<Index>(policies.size());
  const Index nx = mdp.num_states();
  if (nd == 0) fail(ErrorCode::EmptyStateSet, "policy set is empty");
  PolicyUncertaintyModel m;
  m.policies = policies;
  m.state_initial = state_initial;
  m.policy_initial = VectorXd::Constant(nd, 1.0 / static_cast<double>(nd));
  m.beta = beta;
  for (int k = 1; k < mdp.horizon; ++k)
    m.nu.push_back(MatrixXd::Constant(k == 1 ? nd : nx * nd, nd, 1.0 / static_cast<double>(nd)));
  return m;
}

void validate_policy_model(const FiniteMdp& mdp, const PolicyUncertaintyModel& model) {
  const Index nx = mdp.num_states();
  const Index nd = static_cast<Index>(model.policies.size());
  if (nd == 0) fail(ErrorCode::EmptyStateSet, "policy set is empty");
  for (const auto& p : model.policies) {
    if (static_cast<Index>(p.size()) != nx) fail(ErrorCode::DimensionMismatch, "decision rule must cover every state");
    for (int a : p)
      if (a < 0 || a >= mdp.num_actions()) fail(ErrorCode::InvalidAction, "decision rule uses an unknown action");
  }
  if (model.state_initial.size() != nx) fail(ErrorCode::DimensionMismatch, "state_initial has the wrong length");
  require_distribution(model.state_initial, kStochasticTol, ErrorCode::Unnormalized, "state_initial");
  if (model.policy_initial.size() != nd) fail(ErrorCode::DimensionMismatch, "policy_initial has the wrong length");
  require_distribution(model.policy_initial, kStochasticTol, ErrorCode::Unnormalized, "policy_initial");
  if (static_cast<int>(model.nu.size()) != mdp.horizon - 1)
    fail(ErrorCode::HorizonMismatch, "nu needs one table per step");
  for (std::size_t t = 0; t < model.nu.size(); ++t) {
    const Index rows = t == 0 ? nd : nx * nd;
    if (model.nu[t].rows() != rows || model.nu[t].cols() != nd)
      fail(ErrorCode::DimensionMismatch, "nu table " + std::to_string(t + 1) + " has the wrong shape");
    require_stochastic(model.nu[t], kStochasticTol, ErrorCode::UnnormalizedRule, "nu table " + std::to_string(t + 1));
  }
  inverse_beta(model.beta);
}

CoupledSystem lower_policy_model(const FiniteMdp& mdp, const PolicyUncertaintyModel& model) {
  validate_policy_model(mdp, model);
  CoupledSystem sys;
  sys.nx = mdp.num_states();
  sys.nd = static_cast<Index>(model.policies.size());
  sys.horizon = mdp.horizon;
  sys.initial = model.state_initial * model.policy_initial.transpose();
  sys.d_kernel = model.nu;
  MatrixXd xk(sys.nx * sys.nd, sys.nx);
  for (Index x = 0; x < sys.nx; ++x)
    for (Index d = 0; d < sys.nd; ++d)
      xk.row(CoupledSystem::context(x, d, sys.nd)) = mdp.transition[model.policies[d][x]].row(x);
  sys.x_kernel.assign(static_cast<std::size_t>(mdp.horizon - 1), xk);
  return sys;
}

InfoObjectiveReport info_objective(const FiniteMdp& mdp, const PolicyUncertaintyModel& model, bool include_final_term,
                                   std::size_t max_paths) {
  const CoupledEnsemble ens = build_coupled_ensemble(lower_policy_model(mdp, model), max_paths);
  const double cost = expected_stage_cost(ens, policy_stage_costs(mdp, model.policies));
  return assemble_report(cost, info_exchange(ens), model.beta, include_final_term);
}

InfoSolution optimize_policy_uncertainty(const FiniteMdp& mdp, const PolicySet& policies,
                                         const VectorXd& state_initial, double beta, const InfoSolveOptions& options,
                                         const std::optional<PolicyUncertaintyModel>& start) {
  return solve_weighted(mdp, policies, state_initial, beta, 1.0, inverse_beta(beta), options, start);
}

MaxEntInfoSolution maxent_info_program(const FiniteMdp& mdp, const PolicySet& policies, const VectorXd& state_initial,
                                       double K, const MaxEntInfoOptions& options) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  auto solve_at = [&](double angle) {
    const double w_cost = std::abs(angle) == half_pi ? (angle > 0 ? 1.0 : -1.0) : std::sin(angle);
    const double w_info = std::abs(angle) == half_pi ? 0.0 : std::cos(angle);
    return solve_weighted(mdp, policies, state_initial, 1.0, w_cost, w_info, options.solve, std::nullopt);
  };
  auto finish = [&](InfoSolution s, double angle, double mix, double lo, double hi) {
    MaxEntInfoSolution out;
    out.model = std::move(s.model);
    out.report = info_objective(mdp, out.model, options.solve.include_final_term, options.solve.max_paths);
    out.information_value =
        out.report.transfer_total - (options.solve.include_final_term ? out.report.final_term : 0.0);
    out.cost_min = lo;
    out.cost_max = hi;
    out.angle = angle;
    out.mix = mix;
    return out;
  };

  InfoSolution at_min = solve_at(half_pi);
  InfoSolution at_max = solve_at(-half_pi);
  const double c_min = at_min.report.expected_cost;
  const double c_max = at_max.report.expected_cost;
  if (K < c_min - options.tol || K > c_max + options.tol)
    fail(ErrorCode::UnattainablePerformance, "K = " + std::to_string(K) + " outside the attainable cost range [" +
                                                 std::to_string(c_min) + ", " + std::to_string(c_max) + "]");
  if (std::abs(K - c_min) <= options.tol) return finish(std::move(at_min), half_pi, 1.0, c_min, c_max);
  if (std::abs(K - c_max) <= options.tol) return finish(std::move(at_max), -half_pi, 1.0, c_min, c_max);

  // cost is nonincreasing along the angle; keep cost(lo) > K > cost(hi)
  double lo = -half_pi, hi = half_pi;
  InfoSolution s_lo = std::move(at_max), s_hi = std::move(at_min);
  for (int i = 0; i < options.max_bisection_steps; ++i) {
    const double mid = 0.5 * (lo + hi);
    InfoSolution s = solve_at(mid);
    const double c = s.report.expected_cost;
    if (std::abs(c - K) <= options.tol) return finish(std::move(s), mid, 1.0, c_min, c_max);
    if (c > K) {
      lo = mid;
      s_lo = std::move(s);
    } else {
      hi = mid;
      s_hi = std::move(s);
    }
  }
  // the optimizer jumps across K; blend the two bracketing models row by row
  double t_lo = 0.0, t_hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double t = 0.5 * (t_lo + t_hi);
    InfoSolution s;
    s.model = blend(s_lo.model, s_hi.model, t);
    const double c = info_objective(mdp, s.model, false, options.solve.max_paths).expected_cost;
    if (std::abs(c - K) <= options.tol) return finish(std::move(s), 0.5 * (lo + hi), t, c_min, c_max);
    (c > K ? t_lo : t_hi) = t;
  }
  fail(ErrorCode::NoConvergence, "could not meet the cost level within " + std::to_string(options.tol));
}

VectorXd bayes_update(const VectorXd& belief, const std::vector<FiniteMdp>& family, const Observation& obs) {
  if (family.empty()) fail(ErrorCode::EmptyStateSet, "empty parameter set");
  if (belief.size() != static_cast<Index>(family.size()))
    fail(ErrorCode::DimensionMismatch, "belief and parameter set differ in size");
  require_distribution(belief, kStochasticTol, ErrorCode::Unnormalized, "belief");
  VectorXd post(belief.size());
  for (std::size_t l = 0; l < family.size(); ++l) {
    const auto& m = family[l];
    if (obs.a < 0 || obs.a >= m.num_actions()) fail(ErrorCode::InvalidAction, "observed action out of range");
    if (obs.s < 0 || obs.s >= m.num_states() || obs.s_next < 0 || obs.s_next >= m.num_states())
      fail(ErrorCode::DimensionMismatch, "observed state out of range");
    post(static_cast<Index>(l)) = belief(static_cast<Index>(l)) * m.transition[obs.a](obs.s, obs.s_next);
  }
  const double z = post.sum();
  if (!(z > 0)) fail(ErrorCode::ZeroLikelihoodEverywhere, "observation has zero likelihood under every parameter");
  return post / z;
}

namespace {

void validate_parametric(const ParametricBelief& model) {
  if (model.family.empty()) fail(ErrorCode::EmptyStateSet, "empty parameter set");
  const auto& ref = model.family.front();
  for (const auto& m : model.family) {
    if (m.num_states() != ref.num_states() || m.num_actions() != ref.num_actions() || m.horizon != ref.horizon)
      fail(ErrorCode::DimensionMismatch, "candidate models must share states, actions and horizon");
    for (const auto& t : m.transition)
      require_stochastic(t, kStochasticTol, ErrorCode::NonStochasticRow, "candidate transition");
  }
  if (model.prior.size() != static_cast<Index>(model.family.size()))
    fail(ErrorCode::DimensionMismatch, "prior and parameter set differ in size");
  require_distribution(model.prior, kStochasticTol, ErrorCode::Unnormalized, "prior");
  if (model.true_parameter < 0 || model.true_parameter >= static_cast<int>(model.family.size()))
    fail(ErrorCode::InvalidScenario, "true_parameter out of range");
  if (static_cast<int>(model.rule.size()) != ref.horizon - 1) fail(ErrorCode::HorizonMismatch, "rule needs N-1 steps");
  for (const auto& r : model.rule) {
    if (r.rows() != ref.num_states() || r.cols() != ref.num_actions())
      fail(ErrorCode::DimensionMismatch, "rule table must be |S| x |A|");
    require_stochastic(r, kStochasticTol, ErrorCode::UnnormalizedRule, "rule");
  }
  if (model.state_initial.size() != ref.num_states()) fail(ErrorCode::DimensionMismatch, "state_initial length");
  require_distribution(model.state_initial, kStochasticTol, ErrorCode::Unnormalized, "state_initial");
  inverse_beta(model.beta);
}

// Posterior after s -> s_next when the action follows rule row s (actions unobserved).
VectorXd transition_posterior(const ParametricBelief& model, const MatrixXd& rule, int s, int s_next) {
  VectorXd post = VectorXd::Zero(model.prior.size());
  for (Index a = 0; a < rule.cols(); ++a) {
    const double w = rule(s, a);
    if (w <= 0) continue;
    for (std::size_t l = 0; l < model.family.size(); ++l)
      post(static_cast<Index>(l)) +=
          w * model.prior(static_cast<Index>(l)) * model.family[l].transition[a](s, s_next);
  }
  const double z = post.sum();
  return z > 0 ? VectorXd(post / z) : model.prior;  // unreachable contexts keep the prior
}

}  // namespace

CoupledSystem lower_parametric(const ParametricBelief& model) {
  validate_parametric(model);
  const FiniteMdp& truth = model.family[static_cast<std::size_t>(model.true_parameter)];
  const Index ns = truth.num_states();
  const int nl = static_cast<int>(model.family.size());
  const int none = static_cast<int>(ns);
  CoupledSystem sys;
  sys.nx = ns;
  sys.nd = static_cast<Index>(nl) * (ns + 1);
  sys.horizon = truth.horizon;

  sys.initial = MatrixXd::Zero(sys.nx, sys.nd);
  for (Index x = 0; x < ns; ++x)
    for (int l = 0; l < nl; ++l) sys.initial(x, parametric_d_state(l, none, ns)) = model.state_initial(x) * model.prior(l);

  auto spread = [&](const VectorXd& belief, int memory) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(sys.nd);
    for (int l = 0; l < nl; ++l) row(parametric_d_state(l, memory, ns)) = belief(l);
    return row;
  };
  for (int k = 1; k < sys.horizon; ++k) {
    if (k == 1) {
      MatrixXd dk(sys.nd, sys.nd);
      for (Index d = 0; d < sys.nd; ++d) dk.row(d) = spread(model.prior, none);
      sys.d_kernel.push_back(std::move(dk));
    } else {
      MatrixXd dk(sys.nx * sys.nd, sys.nd);
      for (Index x = 0; x < sys.nx; ++x)
        for (Index d = 0; d < sys.nd; ++d) {
          const int memory = static_cast<int>(d % (ns + 1));
          const VectorXd belief = k == 2 || memory == none
                                      ? model.prior
                                      : transition_posterior(model, model.rule[static_cast<std::size_t>(k - 3)], memory,
                                                             static_cast<int>(x));
          dk.row(CoupledSystem::context(x, d, sys.nd)) = spread(belief, static_cast<int>(x));
        }
      sys.d_kernel.push_back(std::move(dk));
    }
    MatrixXd xk(sys.nx * sys.nd, sys.nx);
    const MatrixXd& rule = model.rule[static_cast<std::size_t>(k - 1)];
    for (Index x = 0; x < sys.nx; ++x) {
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(sys.nx);
      for (Index a = 0; a < rule.cols(); ++a) row += rule(x, a) * truth.transition[a].row(x);
      for (Index d = 0; d < sys.nd; ++d) xk.row(CoupledSystem::context(x, d, sys.nd)) = row;
    }
    sys.x_kernel.push_back(std::move(xk));
  }
  return sys;
}

InfoObjectiveReport parametric_info_objective(const ParametricBelief& model, bool include_final_term,
                                              std::size_t max_paths) {
  const CoupledSystem sys = lower_parametric(model);
  CoupledEnsemble ens = build_coupled_ensemble(sys, max_paths);
  ens.d_label.resize(static_cast<std::size_t>(sys.nd));
  for (Index d = 0; d < sys.nd; ++d) ens.d_label[static_cast<std::size_t>(d)] = static_cast<int>(d / (sys.nx + 1));

  const FiniteMdp& truth = model.family[static_cast<std::size_t>(model.true_parameter)];
  double cost = 0.0;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    double c = 0.0;
    for (int k = 1; k < ens.horizon; ++k) {
      const int x = ens.paths[i][static_cast<std::size_t>(ens.x_coord(k))];
      const MatrixXd& rule = model.rule[static_cast<std::size_t>(k - 1)];
      for (Index a = 0; a < rule.cols(); ++a)
        if (rule(x, a) > 0) c += rule(x, a) * truth.stage_cost(x, a);
    }
    cost += ens.probabilities[i] * c;
  }
  return assemble_report(cost, info_exchange(ens), model.beta, include_final_term);
}

double calibration_value(const FiniteMdp& mdp, const PolicySet& policies, int reference_state, double beta,
                         const InfoSolveOptions& options) {
  if (reference_state < 0 || reference_state >= mdp.num_states())
    fail(ErrorCode::InvalidScenario, "reference state out of range");
  VectorXd start = VectorXd::Zero(mdp.num_states());
  start(reference_state) = 1.0;
  return optimize_policy_uncertainty(mdp, policies, start, beta, options).report.expected_cost;
}

CalibrationResult calibrate_beta(const FiniteMdp& mdp, const PolicySet& policies, int reference_state,
                                 double known_value, const CalibrationOptions& options) {
  if (!(options.beta_lo > 0) || !(options.beta_hi > options.beta_lo))
    fail(ErrorCode::InvalidScenario, "calibration bracket must satisfy 0 < lo < hi");
  const int n = std::max(options.monotonicity_samples, 2);
  const double llo = std::log(options.beta_lo), lhi = std::log(options.beta_hi);
  // bracket ends are reported exactly
  auto beta_at = [&](double l) { return l == lhi ? options.beta_hi : l == llo ? options.beta_lo : std::exp(l); };
  auto value = [&](double log_beta) {
    return calibration_value(mdp, policies, reference_state, beta_at(log_beta), options.solve);
  };
  std::vector<double> lb(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    lb[i] = i == n - 1 ? lhi : llo + (lhi - llo) * i / (n - 1);
    v[i] = value(lb[i]);
  }
  const double lo_v = *std::min_element(v.begin(), v.end());
  const double hi_v = *std::max_element(v.begin(), v.end());
  if (known_value < lo_v - options.tol || known_value > hi_v + options.tol)
    fail(ErrorCode::NotBracketed, "value " + std::to_string(known_value) + " outside [" + std::to_string(lo_v) + ", " +
                                      std::to_string(hi_v) + "] over the beta bracket");
  const double dir = v.back() >= v.front() ? 1.0 : -1.0;
  for (int i = 1; i < n; ++i)
    if (dir * (v[i] - v[i - 1]) < -1e-9)
      fail(ErrorCode::NonMonotoneResponse, "value is not monotone in beta near beta = " + std::to_string(std::exp(lb[i])));

  // on a plateau prefer the large-beta end, nearest the classical limit
  for (int i = n - 1; i >= 0; --i)
    if (std::abs(v[i] - known_value) <= options.tol) return {beta_at(lb[i]), v[i], 0};
  int seg = 0;
  while (seg + 1 < n && dir * (v[seg + 1] - known_value) < 0) ++seg;
  double a = lb[seg], b = lb[std::min(seg + 1, n - 1)];
  for (int it = 1; it <= options.max_bisection_steps; ++it) {
    const double mid = 0.5 * (a + b);
    const double vm = value(mid);
    if (std::abs(vm - known_value) <= options.tol) return {beta_at(mid), vm, it};
    (dir * (vm - known_value) < 0 ? a : b) = mid;
  }
  fail(ErrorCode::NoConvergence, "beta bisection did not reach the target value");
}

}  // namespace thermo_mdp
