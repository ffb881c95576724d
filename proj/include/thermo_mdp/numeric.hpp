#pragma once

// Log-domain and information-theoretic primitives shared by every module.
// All functions take Eigen expressions and are templated on the scalar type;
// the rest of the library instantiates them with double.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "thermo_mdp/errors.hpp"

namespace thermo_mdp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar = double>
constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();

/// Row-sum tolerance applied to internal invariants.
inline constexpr double kStochasticTol = 1e-9;
/// Row-sum tolerance applied to human-authored input (rows are renormalized).
inline constexpr double kIngestTol = 1e-6;

/// ln(x) with ln(0) = -inf exactly (structural zero, never a large negative float).
template <typename Scalar>
Scalar safe_log(Scalar x) {
  return x > Scalar(0) ? std::log(x) : neg_inf<Scalar>;
}

/// ln sum_i exp(x_i), max-shifted. Returns -inf for an empty or all -inf input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) return neg_inf<Scalar>;
  const Scalar m = x.maxCoeff();
  if (m == neg_inf<Scalar>) return m;
  Scalar acc(0);
  for (Index i = 0; i < x.size(); ++i) acc += std::exp(x.derived().coeff(i) - m);
  return m + std::log(acc);
}

/// ln sum_i w_i exp(x_i) for nonnegative weights; entries with w_i = 0 are skipped.
template <typename DerivedW, typename DerivedX>
typename DerivedX::Scalar weighted_log_sum_exp(const Eigen::DenseBase<DerivedW>& w,
                                               const Eigen::DenseBase<DerivedX>& x) {
  using Scalar = typename DerivedX::Scalar;
  Scalar m = neg_inf<Scalar>;
  for (Index i = 0; i < x.size(); ++i)
    if (w.derived().coeff(i) > 0) m = std::max(m, x.derived().coeff(i) + std::log(w.derived().coeff(i)));
  if (m == neg_inf<Scalar>) return m;
  Scalar acc(0);
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar wi = w.derived().coeff(i);
    if (wi > 0) acc += std::exp(x.derived().coeff(i) + std::log(wi) - m);
  }
  return m + std::log(acc);
}

/// KL(a || p) in nats with 0 ln(0/q) = 0. Mass of a on a p-null point is a
/// SupportViolation.
template <typename DerivedA, typename DerivedP>
typename DerivedA::Scalar kl_divergence(const Eigen::DenseBase<DerivedA>& a,
                                        const Eigen::DenseBase<DerivedP>& p) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != p.size()) fail(ErrorCode::DimensionMismatch, "kl_divergence: size mismatch");
  Scalar kl(0);
  for (Index i = 0; i < a.size(); ++i) {
    const Scalar ai = a.derived().coeff(i);
    if (ai <= 0) continue;
    const Scalar pi = p.derived().coeff(i);
    if (pi <= 0)
      fail(ErrorCode::SupportViolation,
           "distribution puts mass on index " + std::to_string(i) + " outside the reference support");
    kl += ai * (std::log(ai) - std::log(pi));
  }
  return kl;
}

/// Shannon entropy in nats with 0 ln 0 = 0. No normalization check.
template <typename Derived>
typename Derived::Scalar entropy_nats(const Eigen::DenseBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p.derived().coeff(i);
    if (pi > 0) h -= pi * std::log(pi);
  }
  return h;
}

/// Gibbs tilt of a base measure: out_i proportional to base_i exp(-mu v_i), computed in
/// log domain. Returns ln of the normalizer, ln sum_i base_i exp(-mu v_i).
template <typename DerivedB, typename DerivedV, typename Scalar>
Scalar gibbs_tilt(const Eigen::DenseBase<DerivedB>& base, const Eigen::DenseBase<DerivedV>& v,
                  Scalar mu, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& out) {
  const Index n = base.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logw(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar b = base.derived().coeff(i);
    // mu * v with mu = 0 must not turn an infinite v into NaN
    logw(i) = b > 0 ? std::log(b) - (mu == Scalar(0) ? Scalar(0) : mu * v.derived().coeff(i))
                    : neg_inf<Scalar>;
  }
  const Scalar lz = log_sum_exp(logw);
  out.resize(n);
  for (Index i = 0; i < n; ++i) out(i) = logw(i) == neg_inf<Scalar> ? Scalar(0) : std::exp(logw(i) - lz);
  return lz;
}

/// Checks a probability vector: nonnegative, finite, sums to one within tol.
/// Throws NegativeProbability or `code_if_unnormalized`.
template <typename Derived>
void require_distribution(const Eigen::DenseBase<Derived>& p, double tol, ErrorCode code_if_unnormalized,
                          const std::string& what) {
  for (Index i = 0; i < p.size(); ++i) {
    const auto v = p.derived().coeff(i);
    if (!std::isfinite(v) || v < 0)
      fail(ErrorCode::NegativeProbability, what + ": entry " + std::to_string(i) + " is not a probability");
  }
  const double s = p.sum();
  if (std::abs(s - 1.0) > tol)
    fail(code_if_unnormalized, what + ": sums to " + std::to_string(s));
}

/// Row-stochastic check for every row of a kernel.
template <typename Derived>
void require_stochastic(const Eigen::MatrixBase<Derived>& k, double tol, ErrorCode code_if_unnormalized,
                        const std::string& what) {
  for (Index r = 0; r < k.rows(); ++r)
    require_distribution(k.row(r), tol, code_if_unnormalized, what + " row " + std::to_string(r));
}

}  // namespace thermo_mdp
