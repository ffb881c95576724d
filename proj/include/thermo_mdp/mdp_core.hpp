#pragma once

// Finite-horizon MDPs, Markov chains over paths, exact path enumeration and the
// classical Bellman recursion used as ground truth elsewhere.
//
// Time is 1-based in the mathematics (t = 1..N) and 0-based in storage: row k of a
// ValueTable holds V_{k+1}, and steps[k] of a chain is the kernel moving x_{k+1} to x_{k+2}.

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "thermo_mdp/numeric.hpp"

namespace thermo_mdp {

inline constexpr std::size_t kDefaultMaxPaths = 10'000'000;

/// Unvalidated MDP as read from a scenario. transition[a](s, s') and cost[a](s, s').
struct RawMdp {
  std::vector<MatrixXd> transition;
  std::vector<MatrixXd> cost;
  int horizon = 1;
  /// When true the tables hold rewards to maximize; ingestion negates them.
  bool rewards = false;
};

/// Finite MDP (S, A, T, R, N) in cost-minimization form.
struct FiniteMdp {
  std::vector<MatrixXd> transition;  ///< transition[a](s, s') = T(s' | s, a)
  std::vector<MatrixXd> cost;        ///< cost[a](s, s') = R(s' | s, a)
  int horizon = 1;

  Index num_states() const { return transition.empty() ? 0 : transition.front().rows(); }
  Index num_actions() const { return static_cast<Index>(transition.size()); }

  /// Expected one-step cost c(s, a) = sum_s' T(s'|s,a) R(s'|s,a).
  double stage_cost(Index s, Index a) const {
    return transition[a].row(s).dot(cost[a].row(s));
  }
};

/// Validates and (within kIngestTol) renormalizes a raw MDP.
FiniteMdp validate_mdp(const RawMdp& raw);

/// V_t(s) for t = 1..N. values(t-1, s) = V_t(s).
struct ValueTable {
  MatrixXd values;

  int horizon() const { return static_cast<int>(values.rows()); }
  double at(int t, Index s) const { return values(t - 1, s); }
  Eigen::Ref<const VectorXd> slice(int t) const { return values.row(t - 1).transpose(); }
};

/// Deterministic decision rule: rule[t-1][s] is the action at time t, t = 1..N-1.
using DeterministicRule = std::vector<std::vector<int>>;
/// Stochastic decision rule: rule[t-1](s, a) is the probability of a at (t, s).
using StochasticRule = std::vector<MatrixXd>;

StochasticRule to_stochastic(const DeterministicRule& rule, Index num_actions);

struct BellmanSolution {
  ValueTable values;
  DeterministicRule greedy;
};

/// Backward recursion V_t(s) = min_a sum_s' T(s'|s,a)[R(s'|s,a) + V_{t+1}(s')].
/// Ties go to the lowest action index. Terminal defaults to zero.
BellmanSolution bellman_backward(const FiniteMdp& mdp, const std::optional<VectorXd>& terminal = std::nullopt);

/// Policy evaluation of a (possibly stochastic) rule under the same cost convention.
ValueTable evaluate_rule(const FiniteMdp& mdp, const StochasticRule& rule,
                         const std::optional<VectorXd>& terminal = std::nullopt);

/// Time-inhomogeneous Markov chain over a finite state set.
struct MarkovChain {
  VectorXd initial;
  std::vector<MatrixXd> steps;  ///< steps[k](i, j) = K_{k+1}(j | i)

  int horizon() const { return static_cast<int>(steps.size()) + 1; }
  Index num_states() const { return initial.size(); }
};

/// Checks the chain invariants (rows and initial sum to one within 1e-9).
void validate_chain(const MarkovChain& chain);

/// Chain whose every step applies `kernel`.
MarkovChain stationary_chain(const VectorXd& initial, const MatrixXd& kernel, int horizon);

MarkovChain lower_to_chain(const FiniteMdp& mdp, const StochasticRule& rule, const VectorXd& initial);
MarkovChain lower_to_chain(const FiniteMdp& mdp, const DeterministicRule& rule, const VectorXd& initial);

/// State marginals p_1 .. p_N of a chain.
std::vector<VectorXd> state_marginals(const MarkovChain& chain);

struct Trajectory {
  std::vector<int> states;

  std::size_t size() const { return states.size(); }
  int operator[](std::size_t k) const { return states[k]; }
  auto operator<=>(const Trajectory&) const = default;
};

/// Exact path measure. Paths are in lexicographic order and only the support is stored.
struct TrajectoryEnsemble {
  int horizon = 0;
  std::vector<Trajectory> paths;
  std::vector<double> probabilities;
  std::vector<double> log_probabilities;

  std::size_t size() const { return paths.size(); }
};

TrajectoryEnsemble enumerate_paths(const MarkovChain& chain, std::size_t max_paths = kDefaultMaxPaths);

struct PathProbability {
  double probability;
  double log_probability;  ///< -inf for unreachable paths
};

PathProbability path_probability(const MarkovChain& chain, const Trajectory& traj);

/// Deterministic Monte-Carlo paths. The generator is mt19937_64 with a portable
/// 53-bit uniform conversion, so samples are identical across standard libraries.
std::vector<Trajectory> sample_paths(const MarkovChain& chain, std::uint64_t seed, std::size_t count);

using PathFunctional = std::function<double(const Trajectory&)>;

/// sum_O p(O) f(O). f must be finite on the support.
double expected_path_functional(const TrajectoryEnsemble& ensemble, const PathFunctional& f);

/// sum_O p(O) exp(g(O)) evaluated as exp(logsumexp(ln p + g)). g may be -inf.
double expected_exp(const TrajectoryEnsemble& ensemble, const PathFunctional& g);

/// Cumulative cost of a path when the action at time t is rule[t-1][x_t].
double cumulative_cost(const FiniteMdp& mdp, const DeterministicRule& rule, const Trajectory& traj);

}  // namespace thermo_mdp
