#include "thermo_mdp/mdp_core.hpp"

#include <random>
#include <string>

namespace thermo_mdp {

namespace {

void check_row(Eigen::Ref<VectorXd> row, const std::string& where) {
  for (Index j = 0; j < row.size(); ++j) {
    if (!std::isfinite(row(j)) || row(j) < 0)
      fail(ErrorCode::NegativeProbability, where + ": entry " + std::to_string(j) + " is negative or non-finite");
  }
  const double s = row.sum();
  if (std::abs(s - 1.0) > kIngestTol)
    fail(ErrorCode::NonStochasticRow, where + ": row sums to " + std::to_string(s));
  row /= s;
}

// 53 random bits from the top of a 64-bit draw, mapped into [0, 1).
double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

int draw(std::mt19937_64& gen, const Eigen::Ref<const VectorXd>& p) {
  const double u = uniform01(gen);
  double acc = 0.0;
  int last = -1;
  for (Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0) continue;
    acc += p(i);
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;  // rounding: u landed beyond the accumulated mass
}

}  // namespace

FiniteMdp validate_mdp(const RawMdp& raw) {
  if (raw.transition.empty()) fail(ErrorCode::EmptyStateSet, "mdp has no actions");
  const Index ns = raw.transition.front().rows();
  if (ns == 0) fail(ErrorCode::EmptyStateSet, "mdp has no states");
  if (raw.horizon < 1) fail(ErrorCode::HorizonMismatch, "horizon must be positive");
  if (raw.cost.size() != raw.transition.size())
    fail(ErrorCode::DimensionMismatch, "cost and transition disagree on the number of actions");

  FiniteMdp mdp;
  mdp.horizon = raw.horizon;
  mdp.transition = raw.transition;
  mdp.cost = raw.cost;
  for (std::size_t a = 0; a < raw.transition.size(); ++a) {
    auto& t = mdp.transition[a];
    auto& c = mdp.cost[a];
    if (t.rows() != ns || t.cols() != ns || c.rows() != ns || c.cols() != ns)
      fail(ErrorCode::DimensionMismatch, "action " + std::to_string(a) + ": tables must be |S| x |S|");
    for (Index s = 0; s < ns; ++s) {
      VectorXd row = t.row(s).transpose();
      check_row(row, "transition[a=" + std::to_string(a) + "][s=" + std::to_string(s) + "]");
      t.row(s) = row.transpose();
    }
    if (!c.allFinite()) fail(ErrorCode::NonFiniteCost, "action " + std::to_string(a) + " has a non-finite cost");
    if (raw.rewards) c = -c;
  }
  return mdp;
}

StochasticRule to_stochastic(const DeterministicRule& rule, Index num_actions) {
  StochasticRule out;
  out.reserve(rule.size());
  for (const auto& step : rule) {
    MatrixXd m = MatrixXd::Zero(static_cast<Index>(step.size()), num_actions);
    for (std::size_t s = 0; s < step.size(); ++s) {
      if (step[s] < 0 || step[s] >= num_actions)
        fail(ErrorCode::InvalidAction, "action " + std::to_string(step[s]) + " out of range");
      m(static_cast<Index>(s), step[s]) = 1.0;
    }
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

VectorXd terminal_or_zero(const FiniteMdp& mdp, const std::optional<VectorXd>& terminal) {
  if (!terminal) return VectorXd::Zero(mdp.num_states());
  if (terminal->size() != mdp.num_states())
    fail(ErrorCode::HorizonMismatch, "terminal value slice has the wrong number of states");
  if (!terminal->allFinite()) fail(ErrorCode::NonFiniteCost, "terminal values must be finite");
  return *terminal;
}

}  // namespace

BellmanSolution bellman_backward(const FiniteMdp& mdp, const std::optional<VectorXd>& terminal) {
  const Index ns = mdp.num_states();
  const int n = mdp.horizon;
  BellmanSolution sol;
  sol.values.values = MatrixXd::Zero(n, ns);
  sol.values.values.row(n - 1) = terminal_or_zero(mdp, terminal).transpose();
  sol.greedy.assign(static_cast<std::size_t>(n - 1), std::vector<int>(static_cast<std::size_t>(ns), 0));

  for (int t = n - 1; t >= 1; --t) {
    const VectorXd next = sol.values.values.row(t).transpose();
    for (Index s = 0; s < ns; ++s) {
      double best = std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (Index a = 0; a < mdp.num_actions(); ++a) {
        const double q = mdp.transition[a].row(s).dot(mdp.cost[a].row(s) + next.transpose());
        if (q < best) {  // strict: lowest index wins ties
          best = q;
          best_a = static_cast<int>(a);
        }
      }
      sol.values.values(t - 1, s) = best;
      sol.greedy[t - 1][s] = best_a;
    }
  }
  return sol;
}

ValueTable evaluate_rule(const FiniteMdp& mdp, const StochasticRule& rule, const std::optional<VectorXd>& terminal) {
  const Index ns = mdp.num_states();
  const int n = mdp.horizon;
  if (static_cast<int>(rule.size()) != n - 1) fail(ErrorCode::HorizonMismatch, "rule must cover t = 1..N-1");
  ValueTable v;
  v.values = MatrixXd::Zero(n, ns);
  v.values.row(n - 1) = terminal_or_zero(mdp, terminal).transpose();
  for (int t = n - 1; t >= 1; --t) {
    const VectorXd next = v.values.row(t).transpose();
    for (Index s = 0; s < ns; ++s) {
      double acc = 0.0;
      for (Index a = 0; a < mdp.num_actions(); ++a) {
        const double w = rule[t - 1](s, a);
        if (w > 0) acc += w * mdp.transition[a].row(s).dot(mdp.cost[a].row(s) + next.transpose());
      }
      v.values(t - 1, s) = acc;
    }
  }
  return v;
}

void validate_chain(const MarkovChain& chain) {
  if (chain.initial.size() == 0) fail(ErrorCode::EmptyStateSet, "chain has no states");
  require_distribution(chain.initial, kStochasticTol, ErrorCode::NonStochasticRow, "chain initial");
  for (std::size_t k = 0; k < chain.steps.size(); ++k) {
    const auto& m = chain.steps[k];
    if (m.rows() != chain.num_states() || m.cols() != chain.num_states())
      fail(ErrorCode::DimensionMismatch, "step kernel " + std::to_string(k + 1) + " has the wrong shape");
    require_stochastic(m, kStochasticTol, ErrorCode::NonStochasticRow, "step kernel " + std::to_string(k + 1));
  }
}

MarkovChain stationary_chain(const VectorXd& initial, const MatrixXd& kernel, int horizon) {
  if (horizon < 1) fail(ErrorCode::HorizonMismatch, "horizon must be positive");
  MarkovChain c{initial, std::vector<MatrixXd>(static_cast<std::size_t>(horizon - 1), kernel)};
  validate_chain(c);
  return c;
}

MarkovChain lower_to_chain(const FiniteMdp& mdp, const StochasticRule& rule, const VectorXd& initial) {
  const Index ns = mdp.num_states();
  if (static_cast<int>(rule.size()) != mdp.horizon - 1) fail(ErrorCode::HorizonMismatch, "rule must cover t = 1..N-1");
  MarkovChain chain;
  chain.initial = initial;
  for (std::size_t t = 0; t < rule.size(); ++t) {
    const auto& r = rule[t];
    if (r.rows() != ns || r.cols() != mdp.num_actions())
      fail(ErrorCode::InvalidAction, "rule table at t=" + std::to_string(t + 1) + " has the wrong shape");
    MatrixXd k = MatrixXd::Zero(ns, ns);
    for (Index s = 0; s < ns; ++s) {
      for (Index a = 0; a < r.cols(); ++a)
        if (r(s, a) < 0) fail(ErrorCode::UnnormalizedRule, "negative action weight");
      if (std::abs(r.row(s).sum() - 1.0) > kStochasticTol)
        fail(ErrorCode::UnnormalizedRule,
             "rule row (t=" + std::to_string(t + 1) + ", s=" + std::to_string(s) + ") sums to " +
                 std::to_string(r.row(s).sum()));
      for (Index a = 0; a < r.cols(); ++a) k.row(s) += r(s, a) * mdp.transition[a].row(s);
    }
    chain.steps.push_back(std::move(k));
  }
  validate_chain(chain);
  return chain;
}

MarkovChain lower_to_chain(const FiniteMdp& mdp, const DeterministicRule& rule, const VectorXd& initial) {
  return lower_to_chain(mdp, to_stochastic(rule, mdp.num_actions()), initial);
}

std::vector<VectorXd> state_marginals(const MarkovChain& chain) {
  std::vector<VectorXd> out;
  out.reserve(chain.steps.size() + 1);
  out.push_back(chain.initial);
  for (const auto& k : chain.steps) out.push_back((out.back().transpose() * k).transpose());
  return out;
}

TrajectoryEnsemble enumerate_paths(const MarkovChain& chain, std::size_t max_paths) {
  validate_chain(chain);
  const int n = chain.horizon();
  const Index ns = chain.num_states();

  TrajectoryEnsemble ens;
  ens.horizon = n;

  // Precomputed log kernels keep zero transitions structural (-inf).
  std::vector<MatrixXd> log_steps;
  log_steps.reserve(chain.steps.size());
  for (const auto& k : chain.steps) log_steps.push_back(k.unaryExpr([](double v) { return safe_log(v); }));

  std::vector<int> path(static_cast<std::size_t>(n));
  std::vector<double> prefix(static_cast<std::size_t>(n));

  // Depth-first in lexicographic order; ordered emission makes every reduction
  // over the ensemble schedule independent.
  std::function<void(int)> descend = [&](int depth) {
    if (depth == n) {
      if (ens.paths.size() >= max_paths)
        fail(ErrorCode::EnumerationCapExceeded,
             "path support exceeds the cap of " + std::to_string(max_paths) + " entries");
      ens.paths.push_back(Trajectory{path});
      ens.log_probabilities.push_back(prefix[n - 1]);
      ens.probabilities.push_back(std::exp(prefix[n - 1]));
      return;
    }
    for (Index s = 0; s < ns; ++s) {
      const double lp = depth == 0 ? safe_log(chain.initial(s))
                                   : prefix[depth - 1] + log_steps[depth - 1](path[depth - 1], s);
      if (lp == neg_inf<double>) continue;
      path[depth] = static_cast<int>(s);
      prefix[depth] = lp;
      descend(depth + 1);
    }
  };
  descend(0);
  return ens;
}

PathProbability path_probability(const MarkovChain& chain, const Trajectory& traj) {
  if (static_cast<int>(traj.size()) != chain.horizon())
    fail(ErrorCode::LengthMismatch, "trajectory length " + std::to_string(traj.size()) + " != horizon " +
                                        std::to_string(chain.horizon()));
  for (int s : traj.states)
    if (s < 0 || s >= chain.num_states()) fail(ErrorCode::LengthMismatch, "trajectory visits an unknown state");
  double lp = safe_log(chain.initial(traj[0]));
  for (std::size_t k = 1; k < traj.size() && lp != neg_inf<double>; ++k)
    lp += safe_log(chain.steps[k - 1](traj[k - 1], traj[k]));
  return {lp == neg_inf<double> ? 0.0 : std::exp(lp), lp};
}

std::vector<Trajectory> sample_paths(const MarkovChain& chain, std::uint64_t seed, std::size_t count) {
  validate_chain(chain);
  if (count == 0) fail(ErrorCode::LengthMismatch, "sample count must be positive");
  std::mt19937_64 gen(seed);
  std::vector<Trajectory> out;
  out.reserve(count);
  const int n = chain.horizon();
  for (std::size_t i = 0; i < count; ++i) {
    Trajectory t;
    t.states.resize(static_cast<std::size_t>(n));
    t.states[0] = draw(gen, chain.initial);
    for (int k = 1; k < n; ++k) t.states[k] = draw(gen, chain.steps[k - 1].row(t.states[k - 1]).transpose());
    out.push_back(std::move(t));
  }
  return out;
}

double expected_path_functional(const TrajectoryEnsemble& ensemble, const PathFunctional& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    if (ensemble.probabilities[i] <= 0) continue;
    const double v = f(ensemble.paths[i]);
    if (!std::isfinite(v))
      fail(ErrorCode::NonFiniteFunctionalOnSupport, "functional is not finite on a support path");
    acc += ensemble.probabilities[i] * v;
  }
  return acc;
}

double expected_exp(const TrajectoryEnsemble& ensemble, const PathFunctional& g) {
  VectorXd terms(static_cast<Index>(ensemble.size()));
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const double v = g(ensemble.paths[i]);
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
      fail(ErrorCode::NonFiniteFunctionalOnSupport, "log-functional is NaN or +inf on a support path");
    terms(static_cast<Index>(i)) = ensemble.log_probabilities[i] + v;
  }
  return std::exp(log_sum_exp(terms));
}

double cumulative_cost(const FiniteMdp& mdp, const DeterministicRule& rule, const Trajectory& traj) {
  if (static_cast<int>(traj.size()) != mdp.horizon) fail(ErrorCode::LengthMismatch, "trajectory length != horizon");
  double c = 0.0;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) c += mdp.cost[rule[k][traj[k]]](traj[k], traj[k + 1]);
  return c;
}

}  // namespace thermo_mdp
