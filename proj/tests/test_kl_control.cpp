#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "thermo_mdp/kl_control.hpp"

using namespace thermo_mdp;
using testing_support::Rng;

namespace {

constexpr double kLn2 = 0.693147180559945309417;
constexpr double kVstar = 0.287682072451780927439;  // -ln 0.75

PassiveDynamics two_state(const VectorXd& ell, const VectorXd& terminal, int horizon) {
  return {MatrixXd::Constant(2, 2, 0.5), ell, horizon, terminal};
}

}  // namespace

TEST_CASE("kl_stage_cost") {
  const VectorXd p = VectorXd::Constant(2, 0.5);
  CHECK(kl_stage_cost(p, p, 1.25) == 1.25);
  CHECK(std::abs(kl_stage_cost((VectorXd(2) << 1, 0).finished(), p, 0.0) - kLn2) < 1e-15);
  CHECK_THROWS_AS(kl_stage_cost((VectorXd(2) << 0.5, 0.5).finished(), (VectorXd(2) << 1, 0).finished(), 0.0), Error);
}

TEST_CASE("kl_value_backward on hand-evaluated instances") {
  const auto zero = kl_value_backward(two_state(VectorXd::Zero(2), VectorXd::Zero(2), 4));
  CHECK(zero.values.values.cwiseAbs().maxCoeff() == 0.0);

  const auto one = kl_value_backward(two_state((VectorXd(2) << 0, kLn2).finished(), VectorXd::Zero(2), 2));
  CHECK(std::abs(one.values.at(1, 0)) < 1e-15);
  CHECK(std::abs(one.values.at(1, 1) - kLn2) < 1e-15);

  const auto tilt = kl_value_backward(two_state(VectorXd::Zero(2), (VectorXd(2) << 0, kLn2).finished(), 2));
  CHECK(std::abs(tilt.desirability.g()(0, 0) - 0.75) < 1e-15);
  CHECK(std::abs(tilt.values.at(1, 0) - kVstar) < 1e-15);
  CHECK(std::abs(tilt.values.at(1, 1) - kVstar) < 1e-15);
  CHECK((tilt.desirability.z() - (-tilt.values.values).array().exp().matrix()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("optimal_control: constant values, closed-form tilt arithmetic and support") {
  const PassiveDynamics flat = two_state(VectorXd::Zero(2), VectorXd::Constant(2, 3.0), 2);
  const auto law_flat = optimal_control(flat, kl_value_backward(flat).values);
  CHECK((law_flat.kernels[0] - flat.kernel).cwiseAbs().maxCoeff() < 1e-15);

  const PassiveDynamics p = two_state(VectorXd::Zero(2), (VectorXd(2) << 0, kLn2).finished(), 2);
  const auto law = optimal_control(p, kl_value_backward(p).values);
  CHECK(std::abs(law.kernels[0](0, 0) - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(law.kernels[0](0, 1) - 1.0 / 3.0) < 1e-15);

  // grid search over the 1-simplex at resolution 1e-4
  double best = 1e300, arg = -1;
  for (int i = 0; i <= 10000; ++i) {
    const double a0 = i / 1e4;
    const double f = kl_control_objective(p.kernel.row(0).transpose(), (VectorXd(2) << a0, 1 - a0).finished(), 0.0,
                                          p.terminal);
    if (f < best) best = f, arg = a0;
  }
  CHECK(std::abs(arg - 2.0 / 3.0) <= 1e-4);

  PassiveDynamics det{(MatrixXd(2, 2) << 1, 0, 0, 1).finished(), VectorXd::Zero(2), 2,
                      (VectorXd(2) << 5, -5).finished()};
  const auto law_det = optimal_control(det, kl_value_backward(det).values);
  CHECK(law_det.kernels[0](0, 0) == 1.0);
  CHECK(law_det.kernels[0](0, 1) == 0.0);
}

TEST_CASE("evaluate_control: optimal law attains V*, passive law pays no KL, random laws are worse") {
  Rng rng(21);
  for (int trial = 0; trial < 120; ++trial) {
    const Index n = rng.integer(1, 3);
    const int horizon = rng.integer(2, 4);
    PassiveDynamics p{rng.stochastic(n, n), rng.matrix(n, 1, 0.0, 2.0), horizon, rng.matrix(n, 1, -1.0, 1.0)};
    const auto sol = kl_value_backward(p);
    const auto star = evaluate_control(p, optimal_control(p, sol.values));
    CHECK((star.values - sol.values.values).cwiseAbs().maxCoeff() < 1e-10);

    const auto passive = evaluate_control(p, stationary_law(p.kernel, horizon));
    for (int t = horizon - 1; t >= 1; --t)
      for (Index s = 0; s < n; ++s)
        CHECK(std::abs(passive.at(t, s) - (p.state_cost(s) + p.kernel.row(s).dot(passive.slice(t + 1)))) < 1e-12);

    ControlLaw random;
    for (int t = 1; t < horizon; ++t) random.kernels.push_back(rng.stochastic(n, n, 0.0));
    const auto v = evaluate_control(p, random);
    CHECK((v.values - sol.values.values).minCoeff() >= -1e-10);
  }
}

TEST_CASE("tilt decomposition: stage value = l - ln G + KL(a || tilt)") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = rng.integer(2, 4);
    const VectorXd p = rng.distribution(n);
    const VectorXd a = rng.distribution(n, 0.0);
    const VectorXd next = rng.matrix(n, 1, -2.0, 2.0);
    const double ell = rng.uniform(0.0, 1.0);
    const auto d = tilt_decomposition(p, a, ell, next);
    CHECK(std::abs(d.total() - kl_control_objective(p, a, ell, next)) < 1e-10);
    VectorXd star;
    gibbs_tilt(p, next, 1.0, star);
    CHECK(tilt_decomposition(p, star, ell, next).kl_to_tilt <= 1e-12);
  }
}

TEST_CASE("lemma1_gap: constant case, tightness at the tilt, random tuples") {
  const VectorXd p = VectorXd::Constant(2, 0.5);
  const auto c = lemma1_gap(p, p, VectorXd::Constant(2, 1.7), -1.0);
  CHECK(std::abs(c.lhs - 1.7) < 1e-15);
  CHECK(std::abs(c.rhs - 1.7) < 1e-15);

  const VectorXd q = (VectorXd(2) << 0, 1).finished();
  VectorXd tilted;
  gibbs_tilt(p, q, 1.0, tilted);
  CHECK(std::abs(lemma1_gap(p, tilted, q, -1.0).gap()) <= 1e-9);

  Rng rng(23);
  const double rhos[] = {-0.5, -1.0, -2.0};
  for (int trial = 0; trial < 500; ++trial) {
    const Index n = rng.integer(1, 6);
    const VectorXd P = rng.distribution(n);
    const VectorXd A = rng.distribution(n, 0.0);
    const VectorXd Q = rng.matrix(n, 1, -3.0, 3.0);
    CHECK(lemma1_gap(P, A, Q, rhos[trial % 3]).gap() >= -1e-10);
  }
  CHECK_THROWS_AS(lemma1_gap(p, p, q, 0.0), Error);
}

TEST_CASE("variational bound lhs at rho = -1 is the one-step KL-control value") {
  Rng rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = rng.integer(2, 3);
    PassiveDynamics p{rng.stochastic(n, n), rng.matrix(n, 1, 0.0, 1.0), 2, rng.matrix(n, 1, -1.0, 1.0)};
    const auto sol = kl_value_backward(p);
    for (Index s = 0; s < n; ++s) {
      const VectorXd Q = (p.terminal.array() + p.state_cost(s)).matrix();
      const auto b = lemma1_gap(p.kernel.row(s).transpose(), p.kernel.row(s).transpose(), Q, -1.0);
      CHECK(std::abs(b.lhs - sol.values.at(1, s)) < 1e-12);
    }
  }
}
