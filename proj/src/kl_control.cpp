#include "thermo_mdp/kl_control.hpp"

#include <string>

namespace thermo_mdp {

namespace {

VectorXd terminal_values(const PassiveDynamics& passive) {
  return passive.terminal.size() == 0 ? VectorXd::Zero(passive.num_states()) : passive.terminal;
}

void require_law_shape(const PassiveDynamics& passive, const ControlLaw& law) {
  if (static_cast<int>(law.kernels.size()) != passive.horizon - 1)
    fail(ErrorCode::HorizonMismatch, "control law must have one kernel per step t = 1..N-1");
  for (std::size_t t = 0; t < law.kernels.size(); ++t) {
    const auto& k = law.kernels[t];
    if (k.rows() != passive.num_states() || k.cols() != passive.num_states())
      fail(ErrorCode::DimensionMismatch, "control kernel has the wrong shape");
    require_stochastic(k, kStochasticTol, ErrorCode::NonStochasticRow, "control kernel t=" + std::to_string(t + 1));
  }
}

}  // namespace

void validate_passive(const PassiveDynamics& passive) {
  const Index n = passive.num_states();
  if (n == 0) fail(ErrorCode::EmptyStateSet, "passive dynamics have no states");
  if (passive.kernel.cols() != n) fail(ErrorCode::DimensionMismatch, "passive kernel must be square");
  if (passive.horizon < 1) fail(ErrorCode::HorizonMismatch, "horizon must be positive");
  require_stochastic(passive.kernel, kStochasticTol, ErrorCode::NonStochasticRow, "passive kernel");
  if (passive.state_cost.size() != n) fail(ErrorCode::DimensionMismatch, "state cost has the wrong length");
  if (!passive.state_cost.allFinite()) fail(ErrorCode::NonFiniteCost, "state cost must be finite");
  if (passive.terminal.size() != 0 && passive.terminal.size() != n)
    fail(ErrorCode::HorizonMismatch, "terminal slice has the wrong length");
  if (!passive.terminal.allFinite()) fail(ErrorCode::NonFiniteCost, "terminal values must be finite");
}

ControlLaw stationary_law(const MatrixXd& kernel, int horizon) {
  return ControlLaw{std::vector<MatrixXd>(static_cast<std::size_t>(std::max(horizon - 1, 0)), kernel)};
}

double kl_control_objective(const Eigen::Ref<const VectorXd>& p_row, const Eigen::Ref<const VectorXd>& a_row,
                            double state_cost, const Eigen::Ref<const VectorXd>& next_values) {
  double acc = state_cost + kl_divergence(a_row, p_row);
  for (Index j = 0; j < a_row.size(); ++j)
    if (a_row(j) > 0) acc += a_row(j) * next_values(j);
  return acc;
}

KlSolution kl_value_backward(const PassiveDynamics& passive) {
  validate_passive(passive);
  const Index n = passive.num_states();
  const int horizon = passive.horizon;
  KlSolution sol;
  auto& v = sol.values.values;
  v = MatrixXd::Zero(horizon, n);
  v.row(horizon - 1) = terminal_values(passive).transpose();
  sol.desirability.log_g = MatrixXd::Zero(std::max(horizon - 1, 0), n);

  for (int t = horizon - 1; t >= 1; --t) {
    const VectorXd neg_next = -v.row(t).transpose();
    for (Index s = 0; s < n; ++s) {
      const double lg = weighted_log_sum_exp(passive.kernel.row(s), neg_next);
      sol.desirability.log_g(t - 1, s) = lg;
      v(t - 1, s) = passive.state_cost(s) - lg;
    }
  }
  sol.desirability.log_z = -v;
  return sol;
}

ControlLaw optimal_control(const PassiveDynamics& passive, const ValueTable& values) {
  validate_passive(passive);
  if (values.horizon() != passive.horizon) fail(ErrorCode::HorizonMismatch, "value table horizon mismatch");
  const Index n = passive.num_states();
  ControlLaw law;
  for (int t = 1; t < passive.horizon; ++t) {
    const VectorXd next = values.values.row(t).transpose();
    MatrixXd k(n, n);
    for (Index s = 0; s < n; ++s) {
      VectorXd row;
      const double lz = gibbs_tilt(passive.kernel.row(s), next, 1.0, row);
      if (!std::isfinite(lz)) fail(ErrorCode::DegenerateRow, "all successor desirabilities vanish");
      k.row(s) = row.transpose();
    }
    law.kernels.push_back(std::move(k));
  }
  return law;
}

ValueTable evaluate_control(const PassiveDynamics& passive, const ControlLaw& law) {
  validate_passive(passive);
  require_law_shape(passive, law);
  const Index n = passive.num_states();
  ValueTable out;
  out.values = MatrixXd::Zero(passive.horizon, n);
  out.values.row(passive.horizon - 1) = terminal_values(passive).transpose();
  for (int t = passive.horizon - 1; t >= 1; --t) {
    const VectorXd next = out.values.row(t).transpose();
    for (Index s = 0; s < n; ++s)
      out.values(t - 1, s) = kl_control_objective(passive.kernel.row(s).transpose(),
                                                  law.kernels[t - 1].row(s).transpose(), passive.state_cost(s), next);
  }
  return out;
}

TiltDecomposition tilt_decomposition(const Eigen::Ref<const VectorXd>& p_row, const Eigen::Ref<const VectorXd>& a_row,
                                     double state_cost, const Eigen::Ref<const VectorXd>& next_values) {
  VectorXd tilted;
  const double log_g = gibbs_tilt(p_row, next_values, 1.0, tilted);
  return {state_cost, -log_g, kl_divergence(a_row, tilted)};
}

VariationalBound lemma1_gap(const Eigen::Ref<const VectorXd>& P, const Eigen::Ref<const VectorXd>& A,
                            const Eigen::Ref<const VectorXd>& Q, double rho) {
  if (!(rho < 0)) fail(ErrorCode::NonNegativeRho, "rho must be strictly negative");
  if (P.size() != A.size() || P.size() != Q.size()) fail(ErrorCode::DimensionMismatch, "P, A, Q sizes differ");
  const double kl = kl_divergence(A, P);
  const double lhs = weighted_log_sum_exp(P, (rho * Q).eval()) / rho;
  double eaq = 0.0;
  for (Index i = 0; i < A.size(); ++i)
    if (A(i) > 0) eaq += A(i) * Q(i);
  return {lhs, eaq + kl / std::abs(rho)};
}

}  // namespace thermo_mdp
