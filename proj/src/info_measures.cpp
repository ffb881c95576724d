#include "thermo_mdp/info_measures.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>

namespace thermo_mdp {

namespace {

void require_normalized(double total, const std::string& what) {
  if (std::abs(total - 1.0) > kStochasticTol) fail(ErrorCode::Unnormalized, what + " sums to " + std::to_string(total));
}

double joint_entropy(const Eigen::Ref<const MatrixXd>& m) {
  double h = 0.0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (m(i, j) > 0) h -= m(i, j) * std::log(m(i, j));
  return h;
}

void require_entries(const Eigen::Ref<const MatrixXd>& m, const std::string& what) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)) || m(i, j) < 0) fail(ErrorCode::NegativeProbability, what + " has a bad entry");
}

constexpr double kDenseCells = 1 << 20;

// Paths grouped by their values on a coordinate subset.
struct Grouping {
  std::vector<std::size_t> group_of;
  std::vector<double> mass;

  double entropy() const {
    double h = 0.0;
    for (double m : mass)
      if (m > 0) h -= m * std::log(m);
    return h;
  }
  double log_mass(std::size_t path) const { return std::log(mass[group_of[path]]); }
};

Grouping group_paths(const CoupledEnsemble& ens, const std::vector<int>& coords) {
  const std::size_t n = ens.size();
  auto value = [&](std::size_t i, int c) {
    const int v = ens.paths[i][static_cast<std::size_t>(c)];
    return c >= ens.horizon && !ens.d_label.empty() ? ens.d_label[static_cast<std::size_t>(v)] : v;
  };
  // Small coordinate spaces: accumulate into a dense mixed-radix table, in path order.
  const int d_radix = ens.d_label.empty()
                          ? static_cast<int>(ens.nd)
                          : *std::max_element(ens.d_label.begin(), ens.d_label.end()) + 1;
  double cells = 1.0;
  for (int c : coords) cells *= c >= ens.horizon ? d_radix : static_cast<double>(ens.nx);
  if (cells <= kDenseCells) {
    Grouping g;
    g.group_of.assign(n, 0);
    g.mass.assign(static_cast<std::size_t>(cells), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t key = 0;
      for (int c : coords) key = key * static_cast<std::size_t>(c >= ens.horizon ? d_radix : ens.nx) + value(i, c);
      g.group_of[i] = key;
      g.mass[key] += ens.probabilities[i];
    }
    return g;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    for (int c : coords) {
      const int va = value(a, c);
      const int vb = value(b, c);
      if (va != vb) return va < vb;
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);

  Grouping g;
  g.group_of.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    if (r == 0 || less(order[r - 1], i)) g.mass.push_back(0.0);
    g.group_of[i] = g.mass.size() - 1;
    g.mass.back() += ens.probabilities[i];
  }
  return g;
}

std::vector<int> concat(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<int> d_range(const CoupledEnsemble& ens, int from, int to) {
  std::vector<int> out;
  for (int k = from; k <= to; ++k) out.push_back(ens.d_coord(k));
  return out;
}

// I(A;B|C) pointwise from four groupings: ln p(abc) + ln p(c) - ln p(ac) - ln p(bc).
struct PointwiseCmi {
  Grouping abc, ac, bc, c;

  PointwiseCmi(const CoupledEnsemble& ens, const std::vector<int>& a, const std::vector<int>& b,
               const std::vector<int>& cond)
      : abc(group_paths(ens, concat(concat(a, b), cond))),
        ac(group_paths(ens, concat(a, cond))),
        bc(group_paths(ens, concat(b, cond))),
        c(group_paths(ens, cond)) {}

  double at(std::size_t i) const { return abc.log_mass(i) + c.log_mass(i) - ac.log_mass(i) - bc.log_mass(i); }
};

MatrixXd context_kernel(const CoupledSystem& sys, int k, Index d) {
  MatrixXd m(sys.nx, sys.nx);
  for (Index x = 0; x < sys.nx; ++x) m.row(x) = sys.x_kernel[k - 1].row(CoupledSystem::context(x, d, sys.nd));
  return m;
}

}  // namespace

double shannon_entropy(const Eigen::Ref<const VectorXd>& p) {
  require_entries(p, "distribution");
  require_normalized(p.sum(), "distribution");
  return entropy_nats(p);
}

double mutual_information(const Eigen::Ref<const MatrixXd>& joint) {
  require_entries(joint, "joint");
  require_normalized(joint.sum(), "joint");
  const VectorXd px = joint.rowwise().sum();
  const VectorXd py = joint.colwise().sum().transpose();
  return entropy_nats(px) + entropy_nats(py) - joint_entropy(joint);
}

double conditional_mutual_information(const std::vector<MatrixXd>& slices) {
  if (slices.empty()) fail(ErrorCode::Unnormalized, "no conditioning values");
  double total = 0.0;
  for (const auto& s : slices) {
    if (s.rows() != slices.front().rows() || s.cols() != slices.front().cols())
      fail(ErrorCode::DimensionMismatch, "conditional slices differ in shape");
    require_entries(s, "joint slice");
    total += s.sum();
  }
  require_normalized(total, "joint");
  double cmi = 0.0;
  for (const auto& s : slices) {
    const double pz = s.sum();
    if (pz <= 0) continue;
    const MatrixXd cond = s / pz;
    cmi += pz * (entropy_nats(cond.rowwise().sum()) + entropy_nats(cond.colwise().sum()) - joint_entropy(cond));
  }
  return cmi;
}

void validate_coupled(const CoupledSystem& sys) {
  if (sys.nx < 1 || sys.nd < 1) fail(ErrorCode::EmptyStateSet, "coupled system needs states on both sides");
  if (sys.horizon < 1) fail(ErrorCode::HorizonMismatch, "horizon must be positive");
  if (sys.initial.rows() != sys.nx || sys.initial.cols() != sys.nd)
    fail(ErrorCode::DimensionMismatch, "initial table must be |X| x |D|");
  require_entries(sys.initial, "initial table");
  if (std::abs(sys.initial.sum() - 1.0) > kStochasticTol)
    fail(ErrorCode::UnnormalizedJoint, "initial table sums to " + std::to_string(sys.initial.sum()));
  const std::size_t steps = static_cast<std::size_t>(sys.horizon - 1);
  if (sys.d_kernel.size() != steps || sys.x_kernel.size() != steps)
    fail(ErrorCode::HorizonMismatch, "need one D-kernel and one X-kernel per step");
  for (std::size_t k = 0; k < steps; ++k) {
    const Index d_rows = k == 0 ? sys.nd : sys.nx * sys.nd;
    const auto& dk = sys.d_kernel[k];
    const auto& xk = sys.x_kernel[k];
    if (dk.rows() != d_rows || dk.cols() != sys.nd)
      fail(ErrorCode::DimensionMismatch, "D-kernel " + std::to_string(k + 1) + " has the wrong shape");
    if (xk.rows() != sys.nx * sys.nd || xk.cols() != sys.nx)
      fail(ErrorCode::DimensionMismatch, "X-kernel " + std::to_string(k + 1) + " has the wrong shape");
    require_stochastic(dk, kStochasticTol, ErrorCode::NonStochasticRow, "D-kernel " + std::to_string(k + 1));
    require_stochastic(xk, kStochasticTol, ErrorCode::NonStochasticRow, "X-kernel " + std::to_string(k + 1));
  }
}

CoupledEnsemble build_coupled_ensemble(const CoupledSystem& sys, std::size_t max_paths) {
  validate_coupled(sys);
  const int n = sys.horizon;
  CoupledEnsemble ens;
  ens.horizon = n;
  ens.nx = sys.nx;
  ens.nd = sys.nd;

  std::vector<int> path(static_cast<std::size_t>(2 * n));
  auto x_at = [&](int k) -> int& { return path[static_cast<std::size_t>(k - 1)]; };
  auto d_at = [&](int k) -> int& { return path[static_cast<std::size_t>(n + k)]; };

  std::function<void(int, double)> step = [&](int k, double lp) {
    if (k == n) {
      if (ens.paths.size() >= max_paths)
        fail(ErrorCode::EnumerationCapExceeded,
             "joint path support exceeds the cap of " + std::to_string(max_paths) + " entries");
      ens.paths.push_back(path);
      ens.log_probabilities.push_back(lp);
      ens.probabilities.push_back(std::exp(lp));
      return;
    }
    const Index d_row = k == 1 ? d_at(0) : CoupledSystem::context(x_at(k - 1), d_at(k - 1), sys.nd);
    const Index x_row = CoupledSystem::context(x_at(k), d_at(k - 1), sys.nd);
    for (Index d = 0; d < sys.nd; ++d) {
      const double ld = safe_log(sys.d_kernel[k - 1](d_row, d));
      if (ld == neg_inf<double>) continue;
      for (Index x = 0; x < sys.nx; ++x) {
        const double lx = safe_log(sys.x_kernel[k - 1](x_row, x));
        if (lx == neg_inf<double>) continue;
        d_at(k) = static_cast<int>(d);
        x_at(k + 1) = static_cast<int>(x);
        step(k + 1, lp + ld + lx);
      }
    }
  };
  for (Index x = 0; x < sys.nx; ++x)
    for (Index d = 0; d < sys.nd; ++d) {
      const double l0 = safe_log(sys.initial(x, d));
      if (l0 == neg_inf<double>) continue;
      x_at(1) = static_cast<int>(x);
      d_at(0) = static_cast<int>(d);
      step(1, l0);
    }
  return ens;
}

double coupled_entropy(const CoupledEnsemble& ens, const std::vector<int>& coords) {
  return group_paths(ens, coords).entropy();
}

double coupled_cmi(const CoupledEnsemble& ens, const std::vector<int>& a, const std::vector<int>& b,
                   const std::vector<int>& c) {
  return coupled_entropy(ens, concat(a, c)) + coupled_entropy(ens, concat(b, c)) -
         coupled_entropy(ens, concat(concat(a, b), c)) - coupled_entropy(ens, c);
}

InfoExchangeReport info_exchange(const CoupledEnsemble& ens) {
  const int n = ens.horizon;
  InfoExchangeReport r;
  r.i_ini = coupled_cmi(ens, {ens.x_coord(1)}, {ens.d_coord(0)}, {});
  r.i_fin = coupled_cmi(ens, {ens.x_coord(n)}, d_range(ens, 0, n - 1), {});
  for (int k = 1; k <= n - 1; ++k) {
    if (k == 1) {  // d_1 has no system parent
      r.i_tr_per_step.push_back(0.0);
      r.i_tr_reduced_per_step.push_back(0.0);
      continue;
    }
    const std::vector<int> dk{ens.d_coord(k)};
    const std::vector<int> x_prev{ens.x_coord(k - 1)};
    r.i_tr_per_step.push_back(coupled_cmi(ens, dk, x_prev, d_range(ens, 0, k - 1)));
    r.i_tr_reduced_per_step.push_back(coupled_cmi(ens, dk, x_prev, {ens.d_coord(k - 1)}));
    if (k >= 3 && coupled_cmi(ens, dk, d_range(ens, 0, k - 2), {ens.d_coord(k - 1)}) > 1e-12)
      r.d_marginal_markov = false;
  }
  for (double v : r.i_tr_per_step) r.i_tr_total += v;
  r.theta = r.i_fin - r.i_tr_total - r.i_ini;
  return r;
}

InfoExchangeReport generalized_second_law_gap(const CoupledSystem& sys, const SecondLawOptions& options,
                                              CoupledEntropy* per_path) {
  validate_coupled(sys);
  const auto& energy = options.energy;
  if (energy) {
    if (energy->energy.rows() != sys.nx || energy->energy.cols() != sys.nd)
      fail(ErrorCode::DimensionMismatch, "coupled energy table must be |X| x |D|");
    if (!energy->energy.allFinite()) fail(ErrorCode::NonFiniteCost, "energies must be finite");
    if (!(energy->beta > 0)) fail(ErrorCode::InvalidScenario, "beta must be positive");
  } else if (options.mode == BackwardMode::detailed_balance) {
    fail(ErrorCode::MissingEnergyModel, "detailed_balance mode needs a coupled energy model");
  }

  const CoupledEnsemble ens = build_coupled_ensemble(sys, options.max_paths);
  InfoExchangeReport r = info_exchange(ens);
  const int n = sys.horizon;

  // backward[k-1][d]: reversed kernel of step k in context d_{k-1} = d
  std::vector<std::vector<MatrixXd>> backward(static_cast<std::size_t>(n - 1));
  for (int k = 1; k < n; ++k)
    for (Index d = 0; d < sys.nd; ++d) {
      const MatrixXd kd = context_kernel(sys, k, d);
      if (options.mode == BackwardMode::reversal) {
        backward[k - 1].push_back(backward_kernel(kd, BackwardMode::reversal));
      } else {
        const VectorXd e = energy->energy.col(d);
        backward[k - 1].push_back(backward_kernel(kd, BackwardMode::detailed_balance, &e, energy->beta));
      }
    }

  const Grouping x1 = group_paths(ens, {ens.x_coord(1)});
  const Grouping xn = group_paths(ens, {ens.x_coord(n)});
  const PointwiseCmi ini(ens, {ens.x_coord(1)}, {ens.d_coord(0)}, {});
  const PointwiseCmi fin(ens, {ens.x_coord(n)}, d_range(ens, 0, n - 1), {});
  std::vector<PointwiseCmi> tr;
  for (int k = 2; k <= n - 1; ++k) tr.emplace_back(ens, std::vector<int>{ens.d_coord(k)},
                                                  std::vector<int>{ens.x_coord(k - 1)}, d_range(ens, 0, k - 1));

  const double inf = std::numeric_limits<double>::infinity();
  VectorXd plain_terms(static_cast<Index>(ens.size()));
  VectorXd info_terms(static_cast<Index>(ens.size()));
  double mean = 0.0;
  double mean_work = 0.0;
  double mean_df = 0.0;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto& p = ens.paths[i];
    auto x = [&](int k) { return p[static_cast<std::size_t>(k - 1)]; };
    auto d = [&](int k) { return p[static_cast<std::size_t>(n + k)]; };
    double sigma = x1.log_mass(i) - xn.log_mass(i);
    for (int k = 1; k < n && sigma != inf; ++k) {
      const double lf = std::log(sys.x_kernel[k - 1](CoupledSystem::context(x(k), d(k - 1), sys.nd), x(k + 1)));
      const double lb = safe_log(backward[k - 1][d(k - 1)](x(k + 1), x(k)));
      sigma = lb == neg_inf<double> ? inf : sigma + lf - lb;
    }
    double theta = fin.at(i) - ini.at(i);
    for (const auto& t : tr) theta -= t.at(i);
    if (sigma == inf) ++r.infinite_sigma_paths;
    mean += ens.probabilities[i] * sigma;
    plain_terms(static_cast<Index>(i)) = ens.log_probabilities[i] - sigma;
    info_terms(static_cast<Index>(i)) = ens.log_probabilities[i] - sigma + theta;
    if (per_path) {
      per_path->sigma.push_back(sigma);
      per_path->theta_pathwise.push_back(theta);
    }
    if (energy) {
      // protocol pi_k = d_{k-1}; W_1 = 0 by the pi_0 = pi_1 convention
      const auto& e = energy->energy;
      double w = 0.0;
      for (int k = 2; k <= n - 1; ++k) w += e(x(k), d(k - 1)) - e(x(k), d(k - 2));
      mean_work += ens.probabilities[i] * w;
      if (n >= 2)
        mean_df += ens.probabilities[i] *
                   (free_energy(e.col(d(n - 2)), energy->beta) - free_energy(e.col(d(0)), energy->beta));
    }
  }
  r.mean_sigma = mean;
  r.gap = mean - r.theta;
  r.ift_plain = std::exp(log_sum_exp(plain_terms));
  r.ift_info = std::exp(log_sum_exp(info_terms));
  if (energy) {
    const double t = r.theta / energy->beta;
    r.work = FeedbackWork{mean_work, mean_df, mean_work - mean_df + t, mean_work - mean_df - t};
  }
  return r;
}

}  // namespace thermo_mdp
