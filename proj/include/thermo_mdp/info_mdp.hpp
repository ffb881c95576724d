#pragma once

// Information-regularized decision making on a finite MDP. The decision maker's state
// d_k is a decision rule drawn from a finite set (or, in the parametric variant, a
// sampled model parameter), and the joint (s, d) process is evaluated exactly through
// the coupled-system machinery of info_measures.
//
// Objective:  sum_k E[c(s_k, pi_{k-1}(s_k))] - beta^{-1} sum_k I_tr^k + beta^{-1} I_fin,
// with the final term optional.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "thermo_mdp/info_measures.hpp"
#include "thermo_mdp/mdp_core.hpp"

namespace thermo_mdp {

/// policies[i][s] is the action of decision rule i in state s.
using PolicySet = std::vector<std::vector<int>>;

/// Every deterministic Markov rule, in lexicographic order (state 0 varies slowest).
/// Throws EnumerationCapExceeded when |A|^|S| > limit.
PolicySet all_deterministic_policies(Index num_states, Index num_actions, std::size_t limit = 64);

/// Distribution over decision rules, updated from the state:
///   d_0 ~ policy_initial, d_1 ~ nu[0](. | d_0), d_k ~ nu[k-1](. | s_{k-1}, d_{k-1}).
/// Rule d_{k-1} picks the action at step k. Row layout of nu follows CoupledSystem.
struct PolicyUncertaintyModel {
  PolicySet policies;
  VectorXd state_initial;   ///< law of s_1
  VectorXd policy_initial;  ///< law of d_0
  std::vector<MatrixXd> nu;
  double beta = 1.0;        ///< +inf switches the information terms off
};

/// Uniform rows everywhere.
PolicyUncertaintyModel uniform_policy_model(const FiniteMdp& mdp, const PolicySet& policies,
                                            const VectorXd& state_initial, double beta);

void validate_policy_model(const FiniteMdp& mdp, const PolicyUncertaintyModel& model);

/// Joint (s, d) process of a model.
CoupledSystem lower_policy_model(const FiniteMdp& mdp, const PolicyUncertaintyModel& model);

struct InfoObjectiveReport {
  double expected_cost = 0.0;
  std::vector<double> transfer_terms;          ///< I(d_k; s_{k-1} | d_0..d_{k-1}), k = 1..N-1
  std::vector<double> transfer_terms_reduced;  ///< I(d_k; s_{k-1} | d_{k-1})
  double transfer_total = 0.0;
  double final_term = 0.0;  ///< I(s_N; d_0..d_{N-1})
  double initial_term = 0.0;
  double theta = 0.0;       ///< final_term - transfer_total - initial_term
  double beta_inverse = 0.0;
  bool include_final_term = false;
  double objective = 0.0;
};

InfoObjectiveReport info_objective(const FiniteMdp& mdp, const PolicyUncertaintyModel& model,
                                   bool include_final_term = false, std::size_t max_paths = kDefaultMaxPaths);

enum class InfoSolver { alternating, brute_force };

struct InfoSolveOptions {
  bool include_final_term = false;
  InfoSolver solver = InfoSolver::alternating;
  double tol = 1e-9;                 ///< stop once a sweep improves by less
  int max_sweeps = 10000;
  int line_search_steps = 40;
  double grid_resolution = 0.01;
  std::size_t max_grid_evaluations = 5'000'000;
  std::size_t max_paths = kDefaultMaxPaths;
};

struct InfoSolution {
  PolicyUncertaintyModel model;
  InfoObjectiveReport report;
  std::vector<double> objective_trace;  ///< objective after each sweep (alternating only)
  std::size_t evaluations = 0;
};

/// Minimizes the objective over policy_initial and every nu row. `start` seeds the
/// alternating solver (uniform rows otherwise).
InfoSolution optimize_policy_uncertainty(const FiniteMdp& mdp, const PolicySet& policies,
                                         const VectorXd& state_initial, double beta,
                                         const InfoSolveOptions& options = {},
                                         const std::optional<PolicyUncertaintyModel>& start = std::nullopt);

struct MaxEntInfoOptions {
  InfoSolveOptions solve;
  double tol = 1e-6;
  int max_bisection_steps = 30;
};

struct MaxEntInfoSolution {
  PolicyUncertaintyModel model;
  InfoObjectiveReport report;
  double information_value = 0.0;  ///< transfer_total, minus final_term when included
  double cost_min = 0.0;
  double cost_max = 0.0;
  double angle = 0.0;  ///< Lagrangian path position: weights (sin a) on cost, (cos a) on information
  double mix = 1.0;    ///< weight of the path model when two path models were blended
};

/// max information value subject to E[cost] = K.
MaxEntInfoSolution maxent_info_program(const FiniteMdp& mdp, const PolicySet& policies, const VectorXd& state_initial,
                                       double K, const MaxEntInfoOptions& options = {});

/// A finite family of candidate models sharing states, actions and horizon.
struct ParametricBelief {
  std::vector<FiniteMdp> family;
  VectorXd prior;
  int true_parameter = 0;  ///< index of the model generating the states
  StochasticRule rule;     ///< action law per step, independent of the parameter
  VectorXd state_initial;
  double beta = 1.0;
};

struct Observation {
  int s;
  int a;
  int s_next;
};

/// posterior(l) proportional to belief(l) T_l(s' | s, a).
VectorXd bayes_update(const VectorXd& belief, const std::vector<FiniteMdp>& family, const Observation& obs);

/// D-state (parameter l, remembered state m) with m = |S| meaning "nothing remembered".
inline int parametric_d_state(int lambda, int memory, Index num_states) {
  return lambda * static_cast<int>(num_states + 1) + memory;
}

/// Joint process in which d_k carries a parameter sample and the previous state:
/// d_0, d_1 draw from the prior, d_2 from the prior remembering s_1, and for k >= 3
/// d_k draws from the posterior after the transition s_{k-2} -> s_{k-1}.
CoupledSystem lower_parametric(const ParametricBelief& model);

/// Same report as info_objective with information measured on the parameter samples.
InfoObjectiveReport parametric_info_objective(const ParametricBelief& model, bool include_final_term = false,
                                              std::size_t max_paths = kDefaultMaxPaths);

struct CalibrationOptions {
  InfoSolveOptions solve;
  double beta_lo = 1.0;
  double beta_hi = 1e6;
  int monotonicity_samples = 13;
  double tol = 1e-6;
  int max_bisection_steps = 200;
};

struct CalibrationResult {
  double beta;
  double achieved;
  int iterations;
};

/// Expected cost from s_1 = reference_state of the optimized model at beta.
double calibration_value(const FiniteMdp& mdp, const PolicySet& policies, int reference_state, double beta,
                         const InfoSolveOptions& options = {});

/// beta whose optimized model reaches known_value from reference_state.
CalibrationResult calibrate_beta(const FiniteMdp& mdp, const PolicySet& policies, int reference_state,
                                 double known_value, const CalibrationOptions& options = {});

}  // namespace thermo_mdp
