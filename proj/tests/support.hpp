#pragma once

// Random instance generators and brute-force oracles shared by the test binaries.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "thermo_mdp/info_measures.hpp"
#include "thermo_mdp/mdp_core.hpp"

namespace testing_support {

using thermo_mdp::Index;
using thermo_mdp::MatrixXd;
using thermo_mdp::VectorXd;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

  // Strictly positive entries keep supports full unless a test wants otherwise.
  VectorXd distribution(Index n, double floor = 0.05) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v(i) = uniform() + floor;
    return v / v.sum();
  }

  MatrixXd stochastic(Index rows, Index cols, double floor = 0.05) {
    MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r) m.row(r) = distribution(cols, floor).transpose();
    return m;
  }

  MatrixXd matrix(Index rows, Index cols, double lo, double hi) {
    MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = uniform(lo, hi);
    return m;
  }

  thermo_mdp::FiniteMdp mdp(Index ns, Index na, int horizon) {
    thermo_mdp::RawMdp raw;
    raw.horizon = horizon;
    for (Index a = 0; a < na; ++a) {
      raw.transition.push_back(stochastic(ns, ns));
      raw.cost.push_back(matrix(ns, ns, 0.0, 2.0));
    }
    return thermo_mdp::validate_mdp(raw);
  }

  thermo_mdp::MarkovChain chain(Index ns, int horizon) {
    thermo_mdp::MarkovChain c;
    c.initial = distribution(ns);
    for (int k = 1; k < horizon; ++k) c.steps.push_back(stochastic(ns, ns));
    return c;
  }

  thermo_mdp::CoupledSystem coupled(Index nx, Index nd, int horizon) {
    thermo_mdp::CoupledSystem s;
    s.nx = nx;
    s.nd = nd;
    s.horizon = horizon;
    s.initial = matrix(nx, nd, 0.05, 1.0);
    s.initial /= s.initial.sum();
    for (int k = 1; k < horizon; ++k) {
      s.d_kernel.push_back(stochastic(k == 1 ? nd : nx * nd, nd));
      s.x_kernel.push_back(stochastic(nx * nd, nx));
    }
    return s;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

// Metropolis kernel for energies E at inverse temperature beta, uniform proposals.
inline MatrixXd metropolis(const VectorXd& energy, double beta) {
  const Index n = energy.size();
  MatrixXd k = MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    double stay = 1.0;
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      k(i, j) = std::min(1.0, std::exp(-beta * (energy(j) - energy(i)))) / static_cast<double>(n);
      stay -= k(i, j);
    }
    k(i, i) = stay;
  }
  return k;
}

inline VectorXd gibbs(const VectorXd& energy, double beta) {
  VectorXd w = (-beta * energy).array().exp().matrix();
  return w / w.sum();
}

// Linear-domain probability of a path by direct multiplication.
inline double naive_path_probability(const thermo_mdp::MarkovChain& c, const std::vector<int>& x) {
  double p = c.initial(x[0]);
  for (std::size_t k = 1; k < x.size(); ++k) p *= c.steps[k - 1](x[k - 1], x[k]);
  return p;
}

// Calls f on every tuple in {0..radix-1}^length, last coordinate fastest.
template <typename F>
void for_each_tuple(int radix, int length, F&& f) {
  std::vector<int> t(static_cast<std::size_t>(length), 0);
  for (;;) {
    f(t);
    int i = length - 1;
    while (i >= 0 && ++t[static_cast<std::size_t>(i)] == radix) t[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) return;
  }
}

// Entropy of a dense table, or -sum p ln p over any container of probabilities.
template <typename C>
double entropy_of(const C& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0) h -= p * std::log(p);
  return h;
}

// x and d evolve independently: d follows its own chain, x ignores d.
inline thermo_mdp::CoupledSystem decoupled(Rng& rng, Index nx, Index nd, int horizon, const MatrixXd* x_step = nullptr,
                        const VectorXd* x_init = nullptr) {
  thermo_mdp::CoupledSystem s;
  s.nx = nx;
  s.nd = nd;
  s.horizon = horizon;
  const VectorXd px = x_init ? *x_init : rng.distribution(nx);
  s.initial = px * rng.distribution(nd).transpose();
  for (int k = 1; k < horizon; ++k) {
    const MatrixXd dk = rng.stochastic(nd, nd);
    const MatrixXd xk = x_step ? *x_step : rng.stochastic(nx, nx);
    if (k == 1) {
      s.d_kernel.push_back(dk);
    } else {
      MatrixXd t(nx * nd, nd);
      for (Index x = 0; x < nx; ++x) t.middleRows(x * nd, nd) = dk;
      s.d_kernel.push_back(t);
    }
    MatrixXd t(nx * nd, nx);
    for (Index x = 0; x < nx; ++x)
      for (Index d = 0; d < nd; ++d) t.row(thermo_mdp::CoupledSystem::context(x, d, nd)) = xk.row(x);
    s.x_kernel.push_back(t);
  }
  return s;
}

// Noisy measurement of x_{k-1} into d_k; the x-kernel pushes toward state 0 when d says 1.
inline thermo_mdp::CoupledSystem demon(Rng& rng, int horizon) {
  thermo_mdp::CoupledSystem s;
  s.nx = 2;
  s.nd = 2;
  s.horizon = horizon;
  s.initial = rng.matrix(2, 2, 0.05, 1.0);
  s.initial /= s.initial.sum();
  const double err = rng.uniform(0.0, 0.3);
  const double push = rng.uniform(0.5, 0.95);
  for (int k = 1; k < horizon; ++k) {
    if (k == 1) {
      s.d_kernel.push_back(rng.stochastic(2, 2));
    } else {
      MatrixXd t(4, 2);
      for (Index x = 0; x < 2; ++x)
        for (Index d = 0; d < 2; ++d) {
          t(thermo_mdp::CoupledSystem::context(x, d, 2), x) = 1.0 - err;
          t(thermo_mdp::CoupledSystem::context(x, d, 2), 1 - x) = err;
        }
      s.d_kernel.push_back(t);
    }
    MatrixXd t(4, 2);
    for (Index x = 0; x < 2; ++x) {
      t.row(thermo_mdp::CoupledSystem::context(x, 0, 2)) = rng.distribution(2).transpose();
      t.row(thermo_mdp::CoupledSystem::context(x, 1, 2)) << push, 1.0 - push;
    }
    s.x_kernel.push_back(t);
  }
  return s;
}

// Gibbs-initialised, detailed-balanced feedback: the D-state in force selects the energy column.
struct Feedback {
  thermo_mdp::CoupledSystem sys;
  thermo_mdp::CoupledEnergyModel energy;
};

inline Feedback gibbs_feedback(Rng& rng, Index nx, Index nd, int horizon) {
  Feedback f;
  f.energy.energy = rng.matrix(nx, nd, -1.0, 1.0);
  f.energy.beta = rng.uniform(0.5, 2.0);
  auto& s = f.sys;
  s.nx = nx;
  s.nd = nd;
  s.horizon = horizon;
  const VectorXd q = rng.distribution(nd);
  s.initial = MatrixXd(nx, nd);
  for (Index d = 0; d < nd; ++d)
    s.initial.col(d) = q(d) * gibbs(f.energy.energy.col(d), f.energy.beta);
  for (int k = 1; k < horizon; ++k) {
    s.d_kernel.push_back(rng.stochastic(k == 1 ? nd : nx * nd, nd));
    MatrixXd t(nx * nd, nx);
    for (Index d = 0; d < nd; ++d) {
      const MatrixXd m = metropolis(f.energy.energy.col(d), f.energy.beta);
      for (Index x = 0; x < nx; ++x) t.row(thermo_mdp::CoupledSystem::context(x, d, nd)) = m.row(x);
    }
    s.x_kernel.push_back(t);
  }
  return f;
}

}  // namespace testing_support
