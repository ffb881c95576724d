#pragma once

// Constrained max-entropy / min-KL programs with a single performance constraint.
// Every solution is a Gibbs tilt of the base measure, a proportional to p e^{-mu V};
// the work is finding the multiplier mu.

#include <Eigen/Dense>

#include "thermo_mdp/numeric.hpp"

namespace thermo_mdp {

struct TiltedDistribution {
  VectorXd distribution;
  double lambda;  ///< ln sum_i p_i exp(-mu V_i)
};

TiltedDistribution tilted_control(const Eigen::Ref<const VectorXd>& p, const Eigen::Ref<const VectorXd>& values,
                                  double mu);

/// What the performance level K constrains.
enum class PerformanceMeasure {
  /// E_a[V] = K. Nonincreasing in mu over the whole real line.
  expected,
  /// E_a[V] + KL(a || p) = K, the one-step KL-control value. Nonincreasing in mu on
  /// (-inf, 1]; its minimum, at mu = 1, is the KL-control optimum -ln E_p[e^{-V}].
  kl_regularized,
};

struct MaxEntOptions {
  double tol = 1e-10;
  int max_bisection_steps = 200;
  PerformanceMeasure measure = PerformanceMeasure::expected;
};

struct MaxEntSolution {
  VectorXd control;
  double mu = 0.0;
  double lambda = 0.0;    ///< ln of the partition function of the base measure
  double achieved = 0.0;  ///< attained value of the constrained measure
  double entropy = 0.0;   ///< Shannon entropy of `control`, nats
};

/// Minimum-KL tilt of p meeting the performance level K within options.tol.
MaxEntSolution solve_for_performance(const Eigen::Ref<const VectorXd>& p, const Eigen::Ref<const VectorXd>& values,
                                     double K, const MaxEntOptions& options = {});

/// Maximum-entropy distribution over a finite control set with E[V] = K (uniform
/// base measure). lambda is ln sum_u e^{-mu V(u)}, so H = 1 + normalization_multiplier + mu K.
MaxEntSolution saridis_gibbs(const Eigen::Ref<const VectorXd>& costs, double K, const MaxEntOptions& options = {});

/// The normalization multiplier in the p(u) = exp(-1 - lambda - mu V) convention.
inline double normalization_multiplier(const MaxEntSolution& s) { return s.lambda - 1.0; }

struct EntropyDecomposition {
  double h_u;
  double h_u_given_y;
  double h_y;
  double h_y_given_u;
  double residual;  ///< H(u) - [H(u|y) + H(y) - H(y|u)]
};

/// Entropies of a joint table joint(u, y), each computed from its own marginal or
/// conditional, and the residual of H(u) = H(u|y) + H(y) - H(y|u).
EntropyDecomposition entropy_decomposition_check(const Eigen::Ref<const MatrixXd>& joint);

}  // namespace thermo_mdp
