#pragma once

// Linearly-solvable (KL-control) form of a finite-horizon MDP. The controller picks
// successor distributions a(.|s) directly and pays KL(a || p) against passive dynamics p.

#include <Eigen/Dense>

#include <vector>

#include "thermo_mdp/mdp_core.hpp"

namespace thermo_mdp {

struct PassiveDynamics {
  MatrixXd kernel;      ///< p(s' | s)
  VectorXd state_cost;  ///< l(s)
  int horizon = 1;
  VectorXd terminal;    ///< V_N; empty means zero

  Index num_states() const { return kernel.rows(); }
};

void validate_passive(const PassiveDynamics& passive);

/// Per-step control kernels a_t(s' | s), t = 1..N-1.
struct ControlLaw {
  std::vector<MatrixXd> kernels;
};

/// Same kernel at every step.
ControlLaw stationary_law(const MatrixXd& kernel, int horizon);

/// z_t(s) = exp(-V_t(s)) and G_t(s) = sum_s' p(s'|s) z_{t+1}(s'), stored as logs.
/// log_z has N rows, log_g has N-1 rows (row t-1 is G_t).
struct DesirabilityTable {
  MatrixXd log_z;
  MatrixXd log_g;

  MatrixXd z() const { return log_z.array().exp().matrix(); }
  MatrixXd g() const { return log_g.array().exp().matrix(); }
};

struct KlSolution {
  ValueTable values;
  DesirabilityTable desirability;
};

/// l(s) + KL(a(.|s) || p(.|s)).
template <typename DerivedA, typename DerivedP>
double kl_stage_cost(const Eigen::DenseBase<DerivedA>& a_row, const Eigen::DenseBase<DerivedP>& p_row,
                     double state_cost) {
  return state_cost + kl_divergence(a_row, p_row);
}

/// One-step objective l + sum_s' a(s')[ln(a(s')/p(s')) + V'(s')], the quantity minimized
/// by the Bellman recursion of the KL-control problem.
double kl_control_objective(const Eigen::Ref<const VectorXd>& p_row, const Eigen::Ref<const VectorXd>& a_row,
                            double state_cost, const Eigen::Ref<const VectorXd>& next_values);

/// Backward log-sum-exp recursion V_t(s) = l(s) - ln sum_s' p(s'|s) exp(-V_{t+1}(s')).
KlSolution kl_value_backward(const PassiveDynamics& passive);

/// a*_t(s'|s) = p(s'|s) exp(-V_{t+1}(s')) / G_t(s).
ControlLaw optimal_control(const PassiveDynamics& passive, const ValueTable& values);

/// V^a_t(s) = l(s) + sum_s' a_t(s'|s)[ln(a/p) + V^a_{t+1}(s')].
ValueTable evaluate_control(const PassiveDynamics& passive, const ControlLaw& law);

/// The three pieces of l - ln G + KL(a || p e^{-V'} / G), each computed on its own.
struct TiltDecomposition {
  double state_cost;
  double neg_log_g;
  double kl_to_tilt;

  double total() const { return state_cost + neg_log_g + kl_to_tilt; }
};

TiltDecomposition tilt_decomposition(const Eigen::Ref<const VectorXd>& p_row, const Eigen::Ref<const VectorXd>& a_row,
                                     double state_cost, const Eigen::Ref<const VectorXd>& next_values);

/// Both sides of the variational (Jensen) bound
///   (1/rho) ln E_P[e^{rho Q}]  <=  E_A[Q] + |rho|^{-1} KL(A || P),   rho < 0.
struct VariationalBound {
  double lhs;
  double rhs;

  double gap() const { return rhs - lhs; }
};

VariationalBound lemma1_gap(const Eigen::Ref<const VectorXd>& P, const Eigen::Ref<const VectorXd>& A,
                            const Eigen::Ref<const VectorXd>& Q, double rho);

}  // namespace thermo_mdp
