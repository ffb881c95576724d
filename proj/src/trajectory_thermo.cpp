#include "thermo_mdp/trajectory_thermo.hpp"

#include <string>

namespace thermo_mdp {

namespace {

constexpr double kDetailedBalanceTol = 1e-6;

void require_model_matches(const EnergyModel& model, const MarkovChain& chain) {
  validate_energy_model(model);
  if (model.num_states() != chain.num_states())
    fail(ErrorCode::DimensionMismatch, "energy table and chain disagree on the number of states");
  if (static_cast<int>(model.protocol.size()) != chain.horizon() - 1)
    fail(ErrorCode::ProtocolLengthMismatch, "protocol must have N-1 entries");
}

bool strongly_connected(const MatrixXd& kernel) {
  const Index n = kernel.rows();
  for (int direction = 0; direction < 2; ++direction) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Index> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const Index i = stack.back();
      stack.pop_back();
      for (Index j = 0; j < n; ++j) {
        const double w = direction == 0 ? kernel(i, j) : kernel(j, i);
        if (w > 0 && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    for (char s : seen)
      if (!s) return false;
  }
  return true;
}

}  // namespace

void validate_energy_model(const EnergyModel& model) {
  if (model.energy.rows() == 0 || model.energy.cols() == 0) fail(ErrorCode::EmptyStateSet, "empty energy table");
  if (!model.energy.allFinite()) fail(ErrorCode::NonFiniteCost, "energies must be finite");
  if (!(model.beta > 0) || !std::isfinite(model.beta)) fail(ErrorCode::InvalidScenario, "beta must be positive");
  for (int p : model.protocol)
    if (p < 0 || p >= model.num_protocol_values())
      fail(ErrorCode::InvalidScenario, "protocol value " + std::to_string(p) + " has no energy column");
}

ThermoLedger heat_work_ledger(const EnergyModel& model, const Trajectory& traj) {
  validate_energy_model(model);
  if (traj.size() == 0 || model.protocol.size() + 1 != traj.size())
    fail(ErrorCode::ProtocolLengthMismatch, "protocol has " + std::to_string(model.protocol.size()) +
                                                " entries for a trajectory of length " + std::to_string(traj.size()));
  for (int s : traj.states)
    if (s < 0 || s >= model.num_states()) fail(ErrorCode::LengthMismatch, "trajectory visits an unknown state");

  ThermoLedger l;
  const auto& E = model.energy;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    const int pi = model.protocol[k];
    const int prev = k == 0 ? pi : model.protocol[k - 1];
    const double q = E(traj[k + 1], pi) - E(traj[k], pi);
    const double w = E(traj[k], pi) - E(traj[k], prev);
    l.heat.push_back(q);
    l.work.push_back(w);
    l.first_law_residual.push_back((E(traj[k + 1], pi) - E(traj[k], prev)) - (q + w));
    l.total_heat += q;
    l.total_work += w;
  }
  return l;
}

VectorXd stationary_distribution(const MatrixXd& kernel) {
  const Index n = kernel.rows();
  if (n == 0 || kernel.cols() != n) fail(ErrorCode::DimensionMismatch, "kernel must be square and nonempty");
  if (!strongly_connected(kernel)) fail(ErrorCode::NotIrreducible, "kernel is not irreducible");
  // pi (K - I) = 0 with one equation replaced by normalization.
  MatrixXd a = kernel.transpose() - MatrixXd::Identity(n, n);
  a.row(n - 1).setOnes();
  VectorXd b = VectorXd::Zero(n);
  b(n - 1) = 1.0;
  VectorXd pi = a.fullPivLu().solve(b);
  for (Index i = 0; i < n; ++i)
    if (!(pi(i) > 0)) fail(ErrorCode::NotIrreducible, "stationary law is not strictly positive");
  return pi / pi.sum();
}

MatrixXd backward_kernel(const MatrixXd& kernel, BackwardMode mode, const VectorXd* energies, double beta) {
  const Index n = kernel.rows();
  MatrixXd b(n, n);
  if (mode == BackwardMode::reversal) {
    const VectorXd ss = stationary_distribution(kernel);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) b(j, i) = kernel(i, j) * ss(i) / ss(j);
  } else {
    if (energies == nullptr) fail(ErrorCode::MissingEnergyModel, "detailed_balance mode needs an energy model");
    if (energies->size() != n) fail(ErrorCode::DimensionMismatch, "energy column has the wrong length");
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) b(j, i) = kernel(i, j) * std::exp(beta * ((*energies)(j) - (*energies)(i)));
    for (Index j = 0; j < n; ++j) {
      const double s = b.row(j).sum();
      if (std::abs(s - 1.0) > kDetailedBalanceTol)
        fail(ErrorCode::DetailedBalanceViolated, "backward row " + std::to_string(j) + " sums to " +
                                                     std::to_string(s) + "; kernel is not detailed-balanced");
    }
  }
  for (Index j = 0; j < n; ++j) b.row(j) /= b.row(j).sum();
  return b;
}

BackwardChain backward_chain(const MarkovChain& chain, BackwardMode mode, const EnergyModel* model) {
  validate_chain(chain);
  if (mode == BackwardMode::detailed_balance) {
    if (model == nullptr) fail(ErrorCode::MissingEnergyModel, "detailed_balance mode needs an energy model");
    require_model_matches(*model, chain);
  }
  BackwardChain bwd;
  for (std::size_t k = 0; k < chain.steps.size(); ++k) {
    if (mode == BackwardMode::reversal) {
      bwd.steps.push_back(backward_kernel(chain.steps[k], mode));
    } else {
      const VectorXd e = model->column_at_step(static_cast<int>(k) + 1);
      bwd.steps.push_back(backward_kernel(chain.steps[k], mode, &e, model->beta));
    }
  }
  bwd.final = state_marginals(chain).back();
  return bwd;
}

EntropyReport entropy_production(const TrajectoryEnsemble& ensemble, const MarkovChain& chain,
                                 const BackwardChain& bwd) {
  validate_chain(chain);
  if (bwd.steps.size() != chain.steps.size()) fail(ErrorCode::HorizonMismatch, "backward chain has the wrong length");
  if (bwd.final.size() != chain.num_states()) fail(ErrorCode::DimensionMismatch, "backward final law has wrong size");
  require_distribution(bwd.final, kStochasticTol, ErrorCode::Unnormalized, "backward final law");
  for (const auto& s : bwd.steps)
    require_stochastic(s, kStochasticTol, ErrorCode::NonStochasticRow, "backward kernel");

  const auto marginals = state_marginals(chain);
  const VectorXd& p1 = marginals.front();
  const VectorXd& pn = marginals.back();
  const double inf = std::numeric_limits<double>::infinity();

  EntropyReport r;
  VectorXd log_bwd_terms(static_cast<Index>(ensemble.size()));
  double mean = 0.0;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const auto& x = ensemble.paths[i];
    const std::size_t n = x.size();
    double log_fwd = safe_log(chain.initial(x[0]));
    double log_bwd = safe_log(bwd.final(x[n - 1]));
    double bath = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double lf = safe_log(chain.steps[k](x[k], x[k + 1]));
      const double lb = safe_log(bwd.steps[k](x[k + 1], x[k]));
      log_fwd += lf;
      log_bwd += lb;
      bath += lf - lb;
    }
    const double system = safe_log(p1(x[0])) - safe_log(pn(x[n - 1]));
    const double sigma = log_bwd == neg_inf<double> ? inf : log_fwd - log_bwd;
    if (sigma == inf) ++r.infinite_sigma_paths;
    r.sigma.push_back(sigma);
    r.system_term.push_back(system);
    r.bath_term.push_back(bath);
    r.backward_log_probabilities.push_back(log_bwd);
    // p(O) e^{-sigma(O)} = p_B(O) on the forward support
    log_bwd_terms(static_cast<Index>(i)) = log_bwd;
    if (ensemble.probabilities[i] > 0) mean += ensemble.probabilities[i] * sigma;
  }
  r.mean_sigma = mean;
  r.ift = std::exp(log_sum_exp(log_bwd_terms));
  return r;
}

double free_energy(const Eigen::Ref<const VectorXd>& energies, double beta) {
  if (energies.size() == 0) fail(ErrorCode::EmptyStateSet, "no states");
  return -log_sum_exp((-beta * energies).eval()) / beta;
}

double free_energy(const EnergyModel& model, int k) {
  validate_energy_model(model);
  if (k < 1 || k > static_cast<int>(model.protocol.size()))
    fail(ErrorCode::ProtocolLengthMismatch, "protocol index " + std::to_string(k) + " out of range");
  return free_energy(model.column_at_step(k), model.beta);
}

SecondLawGap second_law_gap(const TrajectoryEnsemble& ensemble, const EnergyModel& model, const MarkovChain& chain) {
  require_model_matches(model, chain);
  const double w = expected_path_functional(ensemble, [&](const Trajectory& t) {
    return heat_work_ledger(model, t).total_work;
  });
  const int last = static_cast<int>(model.protocol.size());
  const double df = last == 0 ? 0.0 : free_energy(model, last) - free_energy(model, 1);
  return {w, df, w - df};
}

}  // namespace thermo_mdp
