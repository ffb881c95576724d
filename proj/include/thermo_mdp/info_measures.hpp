#pragma once

// Exact Shannon quantities on finite joint laws, and the coupled system / decision
// maker process M u D with its information exchange and generalized second law.
// Everything is in nats.

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "thermo_mdp/mdp_core.hpp"
#include "thermo_mdp/trajectory_thermo.hpp"

namespace thermo_mdp {

/// -sum p ln p. Throws Unnormalized unless p sums to one within 1e-9.
double shannon_entropy(const Eigen::Ref<const VectorXd>& p);

/// I(X;Y) of joint(x, y).
double mutual_information(const Eigen::Ref<const MatrixXd>& joint);

/// I(X;Y|Z) of the joint given as slices[z](x, y).
double conditional_mutual_information(const std::vector<MatrixXd>& slices);

/// Joint process over x_1..x_N and d_0..d_{N-1}. Step k = 1..N-1 draws
///   d_k     ~ d_kernel[k-1]( . | x_{k-1}, d_{k-1})   (d_0 only when k = 1)
///   x_{k+1} ~ x_kernel[k-1]( . | x_k, d_{k-1})
/// Rows of the context-dependent tables are indexed x * nd + d.
struct CoupledSystem {
  Index nx = 0;
  Index nd = 0;
  int horizon = 1;
  MatrixXd initial;  ///< initial(x_1, d_0)
  std::vector<MatrixXd> d_kernel;
  std::vector<MatrixXd> x_kernel;

  static Index context(Index x, Index d, Index nd) { return x * nd + d; }
};

void validate_coupled(const CoupledSystem& sys);

/// Support of the joint path law. paths[i] lists x_1..x_N then d_0..d_{N-1}.
struct CoupledEnsemble {
  int horizon = 0;
  Index nx = 0;
  Index nd = 0;
  std::vector<std::vector<int>> paths;
  std::vector<double> probabilities;
  std::vector<double> log_probabilities;
  /// Optional coarse-graining of D-states applied to every information quantity
  /// (empty means identity).
  std::vector<int> d_label;

  std::size_t size() const { return paths.size(); }
  int x_coord(int k) const { return k - 1; }    ///< x_k, k = 1..N
  int d_coord(int k) const { return horizon + k; }  ///< d_k, k = 0..N-1
};

CoupledEnsemble build_coupled_ensemble(const CoupledSystem& sys, std::size_t max_paths = kDefaultMaxPaths);

/// Joint entropy of a set of path coordinates.
double coupled_entropy(const CoupledEnsemble& ens, const std::vector<int>& coords);
/// I(A;B|C) over path coordinates.
double coupled_cmi(const CoupledEnsemble& ens, const std::vector<int>& a, const std::vector<int>& b,
                   const std::vector<int>& c);

/// Energies E(x, d) when the D-state in force sets the protocol.
struct CoupledEnergyModel {
  MatrixXd energy;  ///< energy(x, d)
  double beta = 1.0;
};

struct FeedbackWork {
  double mean_work;
  double delta_f;
  double bound_as_written;      ///< W - dF + beta^{-1} Theta, claimed nonnegative
  double bound_sign_corrected;  ///< W - dF - beta^{-1} Theta
};

struct InfoExchangeReport {
  double i_ini = 0.0;
  double i_fin = 0.0;
  /// Entry k-1 is I(d_k; x_{k-1} | d_0..d_{k-1}) for k = 1..N-1 (zero at k = 1).
  std::vector<double> i_tr_per_step;
  /// Same with the history cut to d_{k-1}.
  std::vector<double> i_tr_reduced_per_step;
  /// True when I(d_k; d_{0..k-2} | d_{k-1}) vanishes for every k, so both forms agree.
  bool d_marginal_markov = true;
  double i_tr_total = 0.0;
  double theta = 0.0;

  // filled by generalized_second_law_gap
  double mean_sigma = 0.0;
  double gap = 0.0;        ///< mean_sigma - theta
  double ift_plain = 0.0;  ///< E[e^{-sigma}]
  double ift_info = 0.0;   ///< E[e^{-sigma + theta(O)}] with pathwise information terms
  std::size_t infinite_sigma_paths = 0;
  std::optional<FeedbackWork> work;
};

InfoExchangeReport info_exchange(const CoupledEnsemble& ens);

struct SecondLawOptions {
  BackwardMode mode = BackwardMode::reversal;
  std::optional<CoupledEnergyModel> energy;
  std::size_t max_paths = kDefaultMaxPaths;
};

/// Per-path entropy production with backward kernels built per (step, d_{k-1}) context.
struct CoupledEntropy {
  std::vector<double> sigma;
  std::vector<double> theta_pathwise;
};

InfoExchangeReport generalized_second_law_gap(const CoupledSystem& sys, const SecondLawOptions& options = {},
                                              CoupledEntropy* per_path = nullptr);

}  // namespace thermo_mdp
