#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "support.hpp"
#include "thermo_mdp/info_mdp.hpp"

using namespace thermo_mdp;
using testing_support::Rng;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidScenario;
}

using Key = std::vector<int>;

// Joint table over tuples, with entropies of coordinate subsets.
struct Table {
  std::map<Key, double> p;

  double entropy(const std::vector<int>& coords) const {
    std::map<Key, double> m;
    for (const auto& [k, v] : p) {
      Key sub;
      for (int c : coords) sub.push_back(k[static_cast<std::size_t>(c)]);
      m[sub] += v;
    }
    double h = 0.0;
    for (const auto& [k, v] : m)
      if (v > 0) h -= v * std::log(v);
    return h;
  }

  double cmi(std::vector<int> a, std::vector<int> b, const std::vector<int>& c) const {
    auto join = [](std::vector<int> x, const std::vector<int>& y) {
      x.insert(x.end(), y.begin(), y.end());
      return x;
    };
    return entropy(join(a, c)) + entropy(join(b, c)) - entropy(join(join(a, b), c)) - entropy(c);
  }
};

FiniteMdp two_state(Rng& rng, int horizon) { return rng.mdp(2, 2, horizon); }

// Random model with strictly positive rows.
PolicyUncertaintyModel random_model(Rng& rng, const FiniteMdp& mdp, const PolicySet& policies, double beta) {
  PolicyUncertaintyModel m = uniform_policy_model(mdp, policies, rng.distribution(mdp.num_states()), beta);
  m.policy_initial = rng.distribution(static_cast<Index>(policies.size()));
  for (auto& t : m.nu) t = rng.stochastic(t.rows(), t.cols());
  return m;
}

double bellman_value(const FiniteMdp& mdp, const VectorXd& init) {
  return init.dot(bellman_backward(mdp).values.slice(1));
}

}  // namespace

TEST_CASE("all_deterministic_policies") {
  const auto p = all_deterministic_policies(2, 2);
  REQUIRE(p.size() == 4);
  CHECK(p[0] == std::vector<int>{0, 0});
  CHECK(p[1] == std::vector<int>{0, 1});
  CHECK(p[2] == std::vector<int>{1, 0});
  CHECK(p[3] == std::vector<int>{1, 1});
  CHECK(all_deterministic_policies(3, 4).size() == 64);
  CHECK(code_of([] { all_deterministic_policies(4, 3); }) == ErrorCode::EnumerationCapExceeded);
}

TEST_CASE("info_objective: open-loop randomization carries no transfer") {
  Rng rng(71);
  for (int trial = 0; trial < 30; ++trial) {
    const FiniteMdp mdp = two_state(rng, rng.integer(2, 4));
    const auto policies = all_deterministic_policies(2, 2);
    PolicyUncertaintyModel m = random_model(rng, mdp, policies, rng.uniform(0.5, 3.0));
    // rows depend on d only
    for (std::size_t t = 1; t < m.nu.size(); ++t)
      for (Index d = 0; d < 4; ++d) m.nu[t].row(CoupledSystem::context(1, d, 4)) = m.nu[t].row(d);
    const auto r = info_objective(mdp, m, true);
    for (double t : r.transfer_terms) CHECK(std::abs(t) <= 1e-10);
    CHECK(std::abs(r.objective - (r.expected_cost + r.final_term / m.beta)) <= 1e-10);
  }
}

TEST_CASE("info_objective: beta = inf keeps only the cost, and a fixed rule costs what policy evaluation says") {
  Rng rng(72);
  const FiniteMdp mdp = two_state(rng, 4);
  const auto policies = all_deterministic_policies(2, 2);
  PolicyUncertaintyModel m = random_model(rng, mdp, policies, kInf);
  const auto r = info_objective(mdp, m, true);
  CHECK(r.beta_inverse == 0.0);
  CHECK(r.objective == r.expected_cost);

  // always rule 2 = (1, 0)
  PolicyUncertaintyModel fixed = uniform_policy_model(mdp, policies, m.state_initial, 1.0);
  fixed.policy_initial = VectorXd::Unit(4, 2);
  for (auto& t : fixed.nu) {
    t.setZero();
    t.col(2).setOnes();
  }
  const DeterministicRule rule(3, std::vector<int>{1, 0});
  const double expect = m.state_initial.dot(evaluate_rule(mdp, to_stochastic(rule, 2)).slice(1));
  CHECK(std::abs(info_objective(mdp, fixed).expected_cost - expect) < 1e-12);
}

TEST_CASE("info_objective: a rule that tracks the state, against hand enumeration of the 64 joint paths") {
  Rng rng(73);
  for (int trial = 0; trial < 10; ++trial) {
    const FiniteMdp mdp = two_state(rng, 3);
    const PolicySet policies{{0, 1}, {1, 0}};
    PolicyUncertaintyModel m = uniform_policy_model(mdp, policies, rng.distribution(2), rng.uniform(0.5, 2.0));
    m.policy_initial = rng.distribution(2);
    m.nu[0] = rng.stochastic(2, 2);
    // d_2 = s_1
    m.nu[1] = MatrixXd::Zero(4, 2);
    for (Index s = 0; s < 2; ++s)
      for (Index d = 0; d < 2; ++d) m.nu[1](CoupledSystem::context(s, d, 2), s) = 1.0;

    // tuple (s1, s2, s3, d0, d1, d2)
    Table t;
    double cost = 0.0;
    testing_support::for_each_tuple(2, 6, [&](const std::vector<int>& v) {
      const int s1 = v[0], s2 = v[1], s3 = v[2], d0 = v[3], d1 = v[4], d2 = v[5];
      const int a1 = policies[d0][s1], a2 = policies[d1][s2];
      const double p = m.state_initial(s1) * m.policy_initial(d0) * m.nu[0](d0, d1) * mdp.transition[a1](s1, s2) *
                       m.nu[1](CoupledSystem::context(s1, d1, 2), d2) * mdp.transition[a2](s2, s3);
      t.p[v] = p;
      cost += p * (mdp.stage_cost(s1, a1) + mdp.stage_cost(s2, a2));
    });
    const double tr2 = t.cmi({5}, {0}, {3, 4});
    const double fin = t.cmi({2}, {3, 4, 5}, {});
    // the tracked state is independent of d_0, d_1
    CHECK(std::abs(tr2 - t.entropy({0})) < 1e-12);

    const auto r = info_objective(mdp, m, true);
    REQUIRE(r.transfer_terms.size() == 2);
    CHECK(r.transfer_terms[0] == 0.0);
    CHECK(std::abs(r.transfer_terms[1] - tr2) < 1e-12);
    CHECK(std::abs(r.final_term - fin) < 1e-12);
    CHECK(std::abs(r.expected_cost - cost) < 1e-12);
    CHECK(std::abs(r.objective - (cost - tr2 / m.beta + fin / m.beta)) < 1e-12);
  }
}

TEST_CASE("info_objective decomposes through Theta") {
  Rng rng(74);
  for (int trial = 0; trial < 40; ++trial) {
    const FiniteMdp mdp = two_state(rng, rng.integer(2, 4));
    const auto policies = all_deterministic_policies(2, 2);
    const PolicyUncertaintyModel m = random_model(rng, mdp, policies, rng.uniform(0.2, 5.0));
    const auto r = info_objective(mdp, m, true);
    const auto ie = info_exchange(build_coupled_ensemble(lower_policy_model(mdp, m)));
    CHECK(std::abs(r.initial_term) < 1e-12);
    CHECK(std::abs(r.objective - (r.expected_cost + ie.theta / m.beta)) <= 1e-10);
    for (double x : r.transfer_terms) CHECK(x >= -1e-10);
    const auto without = info_objective(mdp, m, false);
    CHECK(std::abs(without.objective - (r.expected_cost - r.transfer_total / m.beta)) <= 1e-12);
  }
}

TEST_CASE("optimize_policy_uncertainty: beta = 1e8 recovers the Bellman value") {
  Rng rng(75);
  for (int trial = 0; trial < 5; ++trial) {
    const FiniteMdp mdp = two_state(rng, rng.integer(2, 3));
    const VectorXd init = rng.distribution(2);
    const auto sol = optimize_policy_uncertainty(mdp, all_deterministic_policies(2, 2), init, 1e8);
    CHECK(std::abs(sol.report.expected_cost - bellman_value(mdp, init)) <= 1e-6);
    for (std::size_t i = 1; i < sol.objective_trace.size(); ++i)
      CHECK(sol.objective_trace[i] <= sol.objective_trace[i - 1]);
  }
}

TEST_CASE("optimize_policy_uncertainty: tied costs make the optimizer maximize transfer") {
  // every action costs the same, so only the information term moves the objective
  Rng rng(76);
  RawMdp raw;
  raw.horizon = 3;
  raw.transition = {rng.stochastic(2, 2), rng.stochastic(2, 2)};
  raw.cost = {MatrixXd::Constant(2, 2, 1.0), MatrixXd::Constant(2, 2, 1.0)};
  const FiniteMdp mdp = validate_mdp(raw);
  const PolicySet policies{{0, 0}, {1, 1}};
  const VectorXd init = (VectorXd(2) << 0.5, 0.5).finished();
  const auto sol = optimize_policy_uncertainty(mdp, policies, init, 1e-3);
  CHECK(std::abs(sol.report.expected_cost - 2.0) < 1e-12);
  // I(d_2; s_1 | d_0, d_1) <= H(s_1) = ln 2, reached by copying s_1 into d_2
  CHECK(std::abs(sol.report.transfer_total - std::log(2.0)) <= 1e-8);
}

TEST_CASE("alternating solver against the brute-force grid") {
  Rng rng(77);
  const PolicySet policies{{0, 1}, {1, 0}};
  InfoSolveOptions grid;
  grid.solver = InfoSolver::brute_force;
  grid.grid_resolution = 0.05;
  for (int trial = 0; trial < 6; ++trial) {
    const FiniteMdp mdp = two_state(rng, 2);
    const VectorXd init = rng.distribution(2);
    for (bool final : {false, true}) {
      grid.include_final_term = final;
      InfoSolveOptions alt;
      alt.include_final_term = final;
      const auto a = optimize_policy_uncertainty(mdp, policies, init, 1.0, alt);
      const auto b = optimize_policy_uncertainty(mdp, policies, init, 1.0, grid);
      CHECK(a.report.objective <= b.report.objective + 1e-3);
    }
  }
  InfoSolveOptions bad;
  bad.solver = InfoSolver::brute_force;
  bad.grid_resolution = 0.3;
  const FiniteMdp mdp = two_state(rng, 2);
  CHECK(code_of([&] { optimize_policy_uncertainty(mdp, policies, VectorXd::Constant(2, 0.5), 1.0, bad); }) ==
        ErrorCode::InvalidScenario);
  bad.grid_resolution = 0.001;
  bad.max_grid_evaluations = 1000;
  CHECK(code_of([&] { optimize_policy_uncertainty(mdp, policies, VectorXd::Constant(2, 0.5), 1.0, bad); }) ==
        ErrorCode::EnumerationCapExceeded);
}

TEST_CASE("maxent_info_program") {
  Rng rng(78);
  const FiniteMdp mdp = two_state(rng, 3);
  const VectorXd init = rng.distribution(2);

  const PolicySet single{{1, 0}};
  const double c = info_objective(mdp, uniform_policy_model(mdp, single, init, 1.0)).expected_cost;
  const auto one = maxent_info_program(mdp, single, init, c);
  CHECK(std::abs(one.information_value) < 1e-15);
  CHECK(std::abs(one.report.expected_cost - c) <= 1e-6);

  const auto policies = all_deterministic_policies(2, 2);
  const double vstar = bellman_value(mdp, init);
  const auto best = maxent_info_program(mdp, policies, init, vstar);
  CHECK(std::abs(best.report.expected_cost - vstar) <= 1e-6);
  CHECK(std::abs(best.cost_min - vstar) <= 1e-6);

  const double K = 0.5 * (best.cost_min + best.cost_max);
  const auto mid = maxent_info_program(mdp, policies, init, K);
  CHECK(std::abs(mid.report.expected_cost - K) <= 1e-6);
  CHECK(mid.information_value >= -1e-10);

  CHECK(code_of([&] { maxent_info_program(mdp, policies, init, best.cost_min - 1.0); }) ==
        ErrorCode::UnattainablePerformance);
}

TEST_CASE("bayes_update") {
  Rng rng(79);
  const FiniteMdp a = two_state(rng, 2);
  const VectorXd one = VectorXd::Ones(1);
  CHECK(bayes_update(one, {a}, {0, 1, 1}) == one);

  RawMdp r1, r2;
  r1.horizon = r2.horizon = 2;
  r1.transition = {(MatrixXd(2, 2) << 0.8, 0.2, 0.5, 0.5).finished()};
  r2.transition = {(MatrixXd(2, 2) << 0.2, 0.8, 0.5, 0.5).finished()};
  r1.cost = r2.cost = {MatrixXd::Zero(2, 2)};
  const std::vector<FiniteMdp> fam{validate_mdp(r1), validate_mdp(r2)};
  const VectorXd post = bayes_update(VectorXd::Constant(2, 0.5), fam, {0, 0, 0});
  CHECK(std::abs(post(0) - 0.8) < 1e-15);
  CHECK(std::abs(post(1) - 0.2) < 1e-15);

  RawMdp r3 = r2;
  r3.transition = {(MatrixXd(2, 2) << 0.0, 1.0, 0.5, 0.5).finished()};
  const std::vector<FiniteMdp> sharp{validate_mdp(r1), validate_mdp(r3)};
  CHECK(bayes_update(VectorXd::Constant(2, 0.5), sharp, {0, 0, 0}) == VectorXd::Unit(2, 0));
  RawMdp r4 = r1;
  r4.transition = {(MatrixXd(2, 2) << 0.0, 1.0, 0.5, 0.5).finished()};
  const std::vector<FiniteMdp> blind{validate_mdp(r4), validate_mdp(r3)};
  CHECK(code_of([&] { bayes_update(VectorXd::Constant(2, 0.5), blind, {0, 0, 0}); }) ==
        ErrorCode::ZeroLikelihoodEverywhere);

  // sequential updates equal one batch update, in any order
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FiniteMdp> family;
    for (int l = 0; l < 3; ++l) family.push_back(rng.mdp(3, 2, 2));
    const VectorXd prior = rng.distribution(3);
    std::vector<Observation> obs;
    for (int i = 0; i < 5; ++i) obs.push_back({rng.integer(0, 2), rng.integer(0, 1), rng.integer(0, 2)});
    VectorXd seq = prior, rev = prior, batch = prior;
    for (const auto& o : obs) seq = bayes_update(seq, family, o);
    for (auto it = obs.rbegin(); it != obs.rend(); ++it) rev = bayes_update(rev, family, *it);
    for (const auto& o : obs)
      for (Index l = 0; l < 3; ++l) batch(l) *= family[static_cast<std::size_t>(l)].transition[o.a](o.s, o.s_next);
    batch /= batch.sum();
    CHECK((seq - batch).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rev - batch).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(seq.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("parametric_info_objective: a single model") {
  Rng rng(80);
  ParametricBelief b;
  b.family = {rng.mdp(2, 2, 4)};
  b.prior = VectorXd::Ones(1);
  b.state_initial = rng.distribution(2);
  for (int k = 1; k < 4; ++k) b.rule.push_back(rng.stochastic(2, 2));
  b.beta = 0.7;
  const auto r = parametric_info_objective(b, true);
  for (double t : r.transfer_terms) CHECK(std::abs(t) < 1e-15);
  CHECK(std::abs(r.final_term) < 1e-15);
  const double expect = b.state_initial.dot(evaluate_rule(b.family[0], b.rule).slice(1));
  CHECK(std::abs(r.expected_cost - expect) < 1e-12);
  CHECK(std::abs(r.objective - expect) < 1e-12);
}

TEST_CASE("parametric_info_objective: identical dynamics leave nothing to learn") {
  Rng rng(81);
  for (int trial = 0; trial < 10; ++trial) {
    ParametricBelief b;
    const FiniteMdp base = rng.mdp(2, 2, 4);
    FiniteMdp other = base;
    for (auto& c : other.cost) c = rng.matrix(2, 2, 0.0, 2.0);
    b.family = {base, other};
    b.prior = rng.distribution(2);
    b.true_parameter = trial % 2;
    b.state_initial = rng.distribution(2);
    for (int k = 1; k < 4; ++k) b.rule.push_back(rng.stochastic(2, 2));
    const auto r = parametric_info_objective(b, true);
    for (double t : r.transfer_terms) CHECK(std::abs(t) <= 1e-10);
    CHECK(std::abs(r.final_term) <= 1e-10);
    CHECK(std::abs(r.initial_term) <= 1e-10);
  }
}

TEST_CASE("parametric_info_objective: the first informative transfer is I(posterior sample; observed state)") {
  Rng rng(82);
  for (int trial = 0; trial < 10; ++trial) {
    ParametricBelief b;
    b.family = {rng.mdp(2, 2, 4), rng.mdp(2, 2, 4)};
    b.prior = rng.distribution(2);
    b.true_parameter = trial % 2;
    b.state_initial = rng.distribution(2);
    // uninformative policy: actions uniform everywhere
    for (int k = 1; k < 4; ++k) b.rule.push_back(MatrixXd::Constant(2, 2, 0.5));
    const FiniteMdp& truth = b.family[static_cast<std::size_t>(b.true_parameter)];
    auto likelihood = [&](int l, int s, int s2) {
      const auto& m = b.family[static_cast<std::size_t>(l)];
      return 0.5 * (m.transition[0](s, s2) + m.transition[1](s, s2));
    };
    // (s_1, s_2, lambda_3) by direct Bayes arithmetic
    Table t;
    for (int s1 = 0; s1 < 2; ++s1)
      for (int s2 = 0; s2 < 2; ++s2) {
        const double p = b.state_initial(s1) * 0.5 * (truth.transition[0](s1, s2) + truth.transition[1](s1, s2));
        const double z = b.prior(0) * likelihood(0, s1, s2) + b.prior(1) * likelihood(1, s1, s2);
        for (int l = 0; l < 2; ++l) t.p[{s1, s2, l}] = p * b.prior(l) * likelihood(l, s1, s2) / z;
      }
    const auto r = parametric_info_objective(b);
    REQUIRE(r.transfer_terms.size() == 3);
    CHECK(std::abs(r.transfer_terms[0]) < 1e-15);
    CHECK(std::abs(r.transfer_terms[1]) <= 1e-12);
    CHECK(std::abs(r.transfer_terms[2] - t.cmi({2}, {1}, {})) <= 1e-12);
    CHECK(r.transfer_terms[2] > 0);
  }
}

TEST_CASE("calibrate_beta") {
  Rng rng(83);
  const FiniteMdp mdp = two_state(rng, 3);
  const PolicySet policies{{0, 1}, {1, 0}};
  const double vstar = [&] {
    // best value over sequences drawn from the two rules, from state 0
    double best = kInf;
    for (int r1 = 0; r1 < 2; ++r1)
      for (int r2 = 0; r2 < 2; ++r2) {
        const DeterministicRule rule{policies[r1], policies[r2]};
        best = std::min(best, evaluate_rule(mdp, to_stochastic(rule, 2)).at(1, 0));
      }
    return best;
  }();
  CalibrationOptions opt;
  const auto hi = calibrate_beta(mdp, policies, 0, vstar, opt);
  CHECK(std::abs(hi.achieved - vstar) <= opt.tol);
  CHECK(hi.beta >= 1e3);

  CHECK(code_of([&] { calibrate_beta(mdp, policies, 0, 100.0, opt); }) == ErrorCode::NotBracketed);

  const double v0 = calibration_value(mdp, policies, 0, 2.0);
  opt.beta_lo = 0.1;
  opt.beta_hi = 100.0;
  const auto rt = calibrate_beta(mdp, policies, 0, v0, opt);
  CHECK(std::abs(rt.achieved - v0) <= opt.tol);
  const bool close = std::abs(rt.beta - 2.0) <= 0.02;
  const bool plateau = std::abs(calibration_value(mdp, policies, 0, rt.beta) - v0) <= opt.tol;
  CHECK((close || plateau));
}
