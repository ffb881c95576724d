#include "thermo_mdp/maxent_program.hpp"

#include <functional>
#include <string>

namespace thermo_mdp {

namespace {

constexpr double kMuCap = 1099511627776.0;  // 2^40

struct SupportRange {
  double min_value;
  double max_value;
  double max_mass;  // p-mass of the argmax set
};

SupportRange support_range(const Eigen::Ref<const VectorXd>& p, const Eigen::Ref<const VectorXd>& v) {
  SupportRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.0};
  for (Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0) continue;
    r.min_value = std::min(r.min_value, v(i));
    r.max_value = std::max(r.max_value, v(i));
  }
  for (Index i = 0; i < p.size(); ++i)
    if (p(i) > 0 && v(i) == r.max_value) r.max_mass += p(i);
  return r;
}

double expectation(const VectorXd& a, const Eigen::Ref<const VectorXd>& v) {
  double e = 0.0;
  for (Index i = 0; i < a.size(); ++i)
    if (a(i) > 0) e += a(i) * v(i);
  return e;
}

class PerformanceRoot {
 public:
  PerformanceRoot(const Eigen::Ref<const VectorXd>& p, const Eigen::Ref<const VectorXd>& v, double K,
                  const MaxEntOptions& opt)
      : p_(p), v_(v), K_(K), opt_(opt) {}

  // g(mu) = measure(a_mu) - K, nonincreasing on the searched interval.
  double g(double mu) {
    evaluate(mu);
    return last_.achieved - K_;
  }

  MaxEntSolution solution_at(double mu) {
    evaluate(mu);
    return last_;
  }

  MaxEntSolution bisect(double lo, double hi) {
    // invariant: g(lo) > tol, g(hi) < -tol
    for (int step = 0; step < opt_.max_bisection_steps; ++step) {
      const double mid = 0.5 * (lo + hi);
      const double gm = g(mid);
      if (std::abs(gm) <= opt_.tol) return last_;
      if (mid == lo || mid == hi) break;
      (gm > 0 ? lo : hi) = mid;
    }
    fail(ErrorCode::NoConvergence, "bisection on the multiplier did not reach tolerance " + std::to_string(opt_.tol));
  }

  const MaxEntOptions& options() const { return opt_; }

 private:
  void evaluate(double mu) {
    VectorXd a;
    const double lambda = gibbs_tilt(p_, v_, mu, a);
    double achieved = expectation(a, v_);
    if (opt_.measure == PerformanceMeasure::kl_regularized) achieved += kl_divergence(a, p_);
    last_ = MaxEntSolution{a, mu, lambda, achieved, entropy_nats(a)};
  }

  Eigen::Ref<const VectorXd> p_;
  Eigen::Ref<const VectorXd> v_;
  double K_;
  MaxEntOptions opt_;
  MaxEntSolution last_;
};

void require_inputs(const Eigen::Ref<const VectorXd>& p, const Eigen::Ref<const VectorXd>& v, double tol) {
  if (p.size() == 0) fail(ErrorCode::EmptyStateSet, "empty base measure");
  if (p.size() != v.size()) fail(ErrorCode::DimensionMismatch, "base measure and values differ in size");
  require_distribution(p, kStochasticTol, ErrorCode::Unnormalized, "base measure");
  for (Index i = 0; i < p.size(); ++i)
    if (p(i) > 0 && !std::isfinite(v(i))) fail(ErrorCode::NonFiniteCost, "values must be finite on the support");
  if (!(tol > 0)) fail(ErrorCode::InvalidScenario, "tolerance must be positive");
}

MaxEntSolution solve_expected(PerformanceRoot& root, const SupportRange& range, double K) {
  const double tol = root.options().tol;
  if (K < range.min_value - tol || K > range.max_value + tol)
    fail(ErrorCode::UnattainablePerformance, "K = " + std::to_string(K) + " lies outside [" +
                                                 std::to_string(range.min_value) + ", " +
                                                 std::to_string(range.max_value) + "]");
  if (std::abs(root.g(0.0)) <= tol) return root.solution_at(0.0);
  for (double m = 1.0; m <= kMuCap; m *= 2.0) {
    const double g_hi = root.g(m);
    if (std::abs(g_hi) <= tol) return root.solution_at(m);
    const double g_lo = root.g(-m);
    if (std::abs(g_lo) <= tol) return root.solution_at(-m);
    if (g_lo > 0 && g_hi < 0) return root.bisect(-m, m);
  }
  fail(ErrorCode::NoConvergence, "could not bracket the multiplier within |mu| <= 2^40");
}

MaxEntSolution solve_kl_regularized(PerformanceRoot& root, const SupportRange& range, double K) {
  const double tol = root.options().tol;
  const double g_opt = root.g(1.0);
  if (std::abs(g_opt) <= tol) return root.solution_at(1.0);
  if (g_opt > 0)
    fail(ErrorCode::UnattainablePerformance,
         "K = " + std::to_string(K) + " is below the KL-control optimum " + std::to_string(g_opt + K));
  const double supremum = range.max_value - std::log(range.max_mass);
  if (K >= supremum + tol)
    fail(ErrorCode::UnattainablePerformance,
         "K = " + std::to_string(K) + " is not below the supremum " + std::to_string(supremum));
  for (double m = 1.0; m <= kMuCap; m *= 2.0) {
    const double lo = 1.0 - m;
    const double g_lo = root.g(lo);
    if (std::abs(g_lo) <= tol) return root.solution_at(lo);
    if (g_lo > 0) return root.bisect(lo, 1.0);
  }
  fail(ErrorCode::NoConvergence, "could not bracket the multiplier within mu >= 1 - 2^40");
}

}  // namespace

TiltedDistribution tilted_control(const Eigen::Ref<const VectorXd>& p, const Eigen::Ref<const VectorXd>& values,
                                  double mu) {
  if (p.size() != values.size()) fail(ErrorCode::DimensionMismatch, "base measure and values differ in size");
  require_distribution(p, kStochasticTol, ErrorCode::Unnormalized, "base measure");
  if (mu == 0.0) return {p, 0.0};
  TiltedDistribution out;
  out.lambda = gibbs_tilt(p, values, mu, out.distribution);
  return out;
}

MaxEntSolution solve_for_performance(const Eigen::Ref<const VectorXd>& p, const Eigen::Ref<const VectorXd>& values,
                                     double K, const MaxEntOptions& options) {
  require_inputs(p, values, options.tol);
  if (!std::isfinite(K)) fail(ErrorCode::UnattainablePerformance, "K must be finite");
  const SupportRange range = support_range(p, values);
  PerformanceRoot root(p, values, K, options);
  return options.measure == PerformanceMeasure::expected ? solve_expected(root, range, K)
                                                         : solve_kl_regularized(root, range, K);
}

MaxEntSolution saridis_gibbs(const Eigen::Ref<const VectorXd>& costs, double K, const MaxEntOptions& options) {
  const Index n = costs.size();
  if (n == 0) fail(ErrorCode::EmptyStateSet, "empty control set");
  if (!costs.allFinite()) fail(ErrorCode::NonFiniteCost, "control costs must be finite");
  const double lo = costs.minCoeff();
  const double hi = costs.maxCoeff();
  const bool constant = hi - lo <= options.tol;
  // the extremes are only reached in the zero-temperature limit
  if (!constant && (K < lo + options.tol || K > hi - options.tol))
    fail(ErrorCode::UnattainablePerformance,
         "K = " + std::to_string(K) + " must lie strictly inside (" + std::to_string(lo) + ", " +
             std::to_string(hi) + ") by at least the tolerance");
  if (constant && std::abs(K - lo) > options.tol)
    fail(ErrorCode::UnattainablePerformance, "all controls cost " + std::to_string(lo));

  MaxEntOptions opt = options;
  opt.measure = PerformanceMeasure::expected;
  const VectorXd uniform = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  MaxEntSolution s = solve_for_performance(uniform, costs, K, opt);
  s.lambda += std::log(static_cast<double>(n));  // counting measure instead of the uniform one
  return s;
}

EntropyDecomposition entropy_decomposition_check(const Eigen::Ref<const MatrixXd>& joint) {
  if (joint.size() == 0) fail(ErrorCode::UnnormalizedJoint, "empty joint");
  for (Index i = 0; i < joint.rows(); ++i)
    for (Index j = 0; j < joint.cols(); ++j)
      if (!std::isfinite(joint(i, j)) || joint(i, j) < 0)
        fail(ErrorCode::NegativeProbability, "joint entries must be probabilities");
  if (std::abs(joint.sum() - 1.0) > kStochasticTol)
    fail(ErrorCode::UnnormalizedJoint, "joint sums to " + std::to_string(joint.sum()));

  const VectorXd pu = joint.rowwise().sum();
  const VectorXd py = joint.colwise().sum().transpose();
  EntropyDecomposition d{};
  d.h_u = entropy_nats(pu);
  d.h_y = entropy_nats(py);
  for (Index y = 0; y < joint.cols(); ++y)
    if (py(y) > 0) d.h_u_given_y += py(y) * entropy_nats((joint.col(y) / py(y)).eval());
  for (Index u = 0; u < joint.rows(); ++u)
    if (pu(u) > 0) d.h_y_given_u += pu(u) * entropy_nats((joint.row(u).transpose() / pu(u)).eval());
  d.residual = d.h_u - (d.h_u_given_y + d.h_y - d.h_y_given_u);
  return d;
}

}  // namespace thermo_mdp
