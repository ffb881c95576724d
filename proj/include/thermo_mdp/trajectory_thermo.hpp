#pragma once

// Stochastic thermodynamics on enumerated trajectories of a Markov chain driven by a
// protocol: heat and work ledgers, backward (time-reversed) chains, entropy production
// and its fluctuation theorem, and free-energy differences.

#include <Eigen/Dense>

#include <vector>

#include "thermo_mdp/mdp_core.hpp"

namespace thermo_mdp {

/// Energies E(x, pi) and the protocol pi_1..pi_{N-1} applied during steps 1..N-1.
struct EnergyModel {
  MatrixXd energy;            ///< energy(x, pi)
  std::vector<int> protocol;  ///< protocol[k-1] = pi_k
  double beta = 1.0;

  Index num_states() const { return energy.rows(); }
  Index num_protocol_values() const { return energy.cols(); }
  /// Energies of all states under pi_k, k = 1..N-1.
  VectorXd column_at_step(int k) const { return energy.col(protocol[k - 1]); }
};

void validate_energy_model(const EnergyModel& model);

struct ThermoLedger {
  std::vector<double> heat;                ///< Q_k = E(x_{k+1}, pi_k) - E(x_k, pi_k)
  std::vector<double> work;                ///< W_k = E(x_k, pi_k) - E(x_k, pi_{k-1}), pi_0 = pi_1
  std::vector<double> first_law_residual;  ///< [E(x_{k+1}, pi_k) - E(x_k, pi_{k-1})] - (Q_k + W_k)
  double total_heat = 0.0;
  double total_work = 0.0;
};

ThermoLedger heat_work_ledger(const EnergyModel& model, const Trajectory& traj);

enum class BackwardMode { reversal, detailed_balance };

/// Time-reversed kernels. steps[k](j, i) = p_B(x_{k+1} = i | x_{k+2} = j) for the
/// forward step steps[k] of the chain; `final` is the backward start law over x_N.
struct BackwardChain {
  std::vector<MatrixXd> steps;
  VectorXd final;
};

/// Unique stationary law of an irreducible kernel. Throws NotIrreducible.
VectorXd stationary_distribution(const MatrixXd& kernel);

/// Backward kernel of one forward kernel. In detailed_balance mode `energies` holds
/// E(., pi) for the step and rows are accepted only within 1e-6 of one.
MatrixXd backward_kernel(const MatrixXd& kernel, BackwardMode mode, const VectorXd* energies = nullptr,
                         double beta = 1.0);

/// Backward chain with `final` set to the forward marginal at time N.
BackwardChain backward_chain(const MarkovChain& chain, BackwardMode mode, const EnergyModel* model = nullptr);

struct EntropyReport {
  std::vector<double> sigma;  ///< per ensemble path; +inf when the backward measure vanishes
  std::vector<double> system_term;  ///< ln p_1(x_1) - ln p_N(x_N)
  std::vector<double> bath_term;    ///< sum_k ln K(x_{k+1}|x_k) / p_B(x_k|x_{k+1})
  std::vector<double> backward_log_probabilities;
  double mean_sigma = 0.0;
  double ift = 0.0;  ///< E[e^{-sigma}]
  std::size_t infinite_sigma_paths = 0;
};

EntropyReport entropy_production(const TrajectoryEnsemble& ensemble, const MarkovChain& chain,
                                 const BackwardChain& bwd);

/// -beta^{-1} ln sum_x exp(-beta E(x)).
double free_energy(const Eigen::Ref<const VectorXd>& energies, double beta);
/// F(pi_k) for k = 1..N-1.
double free_energy(const EnergyModel& model, int k);

struct SecondLawGap {
  double mean_work;
  double delta_f;  ///< F(pi_{N-1}) - F(pi_1)
  double gap;      ///< mean_work - delta_f
};

SecondLawGap second_law_gap(const TrajectoryEnsemble& ensemble, const EnergyModel& model, const MarkovChain& chain);

}  // namespace thermo_mdp
