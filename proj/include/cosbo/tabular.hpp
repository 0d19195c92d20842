#pragma once

// Exact ground truth on finite MDPs: closed-form policy evaluation, the
// discounted visitation distribution, and the conservative fixed point of
// the penalized evaluation recursion. Everything here works on explicit
// probability tables, so statistical error never mixes with formula error.

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosbo/common.hpp"
#include "cosbo/env.hpp"

namespace cosbo::tabular {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Explicit finite MDP: T is [s][a][s'] flattened, R is [s][a] flattened.
struct TabularModel {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> kernel;
  std::vector<double> rewards;

  double t(int s, int a, int sp) const {
    return kernel[static_cast<std::size_t>((s * num_actions + a) * num_states + sp)];
  }
  double r(int s, int a) const {
    return rewards[static_cast<std::size_t>(s * num_actions + a)];
  }

  static TabularModel from_env(const envs::ChainworldEnv& env) {
    TabularModel m;
    m.num_states = envs::ChainworldEnv::kStates;
    m.num_actions = envs::ChainworldEnv::kActions;
    m.kernel = env.kernel();
    m.rewards = env.reward_table();
    return m;
  }

  void check_stochastic(double tol = 1e-12) const {
    for (int s = 0; s < num_states; ++s)
      for (int a = 0; a < num_actions; ++a) {
        double sum = 0.0;
        for (int sp = 0; sp < num_states; ++sp) sum += t(s, a, sp);
        if (std::abs(sum - 1.0) > tol)
          throw std::invalid_argument("kernel row (" + std::to_string(s) + "," +
                                      std::to_string(a) + ") sums to " + std::to_string(sum));
      }
  }
};

// Row-stochastic pi[s][a].
struct TabularPolicy {
  Mat pi;

  explicit TabularPolicy(Mat p) : pi(std::move(p)) {
    for (Eigen::Index s = 0; s < pi.rows(); ++s) {
      if (std::abs(pi.row(s).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("policy row " + std::to_string(s) + " is not stochastic");
      if ((pi.row(s).array() < -1e-15).any())
        throw std::invalid_argument("policy row " + std::to_string(s) + " has negative mass");
    }
  }

  static TabularPolicy uniform(int S, int A) {
    return TabularPolicy(Mat::Constant(S, A, 1.0 / A));
  }

  int num_states() const { return static_cast<int>(pi.rows()); }
  int num_actions() const { return static_cast<int>(pi.cols()); }
};

// P^pi over state-action pairs: P[(s,a),(s',a')] = T(s'|s,a) pi(a'|s').
inline Mat policy_transition_matrix(const TabularModel& m, const TabularPolicy& pol) {
  const int S = m.num_states, A = m.num_actions;
  Mat P = Mat::Zero(S * A, S * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      for (int sp = 0; sp < S; ++sp) {
        const double t = m.t(s, a, sp);
        if (t == 0.0) continue;
        for (int ap = 0; ap < A; ++ap) P(s * A + a, sp * A + ap) = t * pol.pi(sp, ap);
      }
  return P;
}

// Solves Q = r + gamma P^pi Q directly. The system is nonsingular for any
// gamma < 1; the residual is checked before returning.
inline Mat exact_policy_q(const TabularModel& m, const TabularPolicy& pol, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
  m.check_stochastic();
  const int S = m.num_states, A = m.num_actions;
  const Mat P = policy_transition_matrix(m, pol);
  Vec r(S * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) r(s * A + a) = m.r(s, a);
  const Mat lhs = Mat::Identity(S * A, S * A) - gamma * P;
  const Vec q = lhs.partialPivLu().solve(r);
  const double residual = (q - (r + gamma * P * q)).lpNorm<Eigen::Infinity>();
  if (!(residual < 1e-10))
    throw std::runtime_error("exact_policy_q: residual " + std::to_string(residual));
  Mat Q(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) Q(s, a) = q(s * A + a);
  return Q;
}

// One application of the exact Bellman backup B^pi to a Q table.
inline Mat bellman_backup(const TabularModel& m, const TabularPolicy& pol, const Mat& Q,
                          double gamma) {
  const int S = m.num_states, A = m.num_actions;
  Mat out(S, A);
  Vec v(S);
  for (int sp = 0; sp < S; ++sp) v(sp) = pol.pi.row(sp).dot(Q.row(sp));
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double exp_v = 0.0;
      for (int sp = 0; sp < S; ++sp) exp_v += m.t(s, a, sp) * v(sp);
      out(s, a) = m.r(s, a) + gamma * exp_v;
    }
  return out;
}

// Discounted state-action occupancy d^pi(s) pi(a|s) with
// d^pi(s) = (1-gamma) sum_t gamma^t P(s_t = s), solved as a linear flow system.
inline Mat visitation_distribution(const TabularModel& m, const TabularPolicy& pol,
                                   const Vec& initial_dist, double gamma) {
  const int S = m.num_states, A = m.num_actions;
  if (initial_dist.size() != S) throw std::invalid_argument("initial_dist size mismatch");
  Mat M = Mat::Zero(S, S);  // state-to-state chain under pi
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double pa = pol.pi(s, a);
      if (pa == 0.0) continue;
      for (int sp = 0; sp < S; ++sp) M(s, sp) += pa * m.t(s, a, sp);
    }
  const Mat lhs = Mat::Identity(S, S) - gamma * M.transpose();
  const Vec d = lhs.partialPivLu().solve(Vec((1.0 - gamma) * initial_dist));
  Mat dsa(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) dsa(s, a) = d(s) * pol.pi(s, a);
  const double total = dsa.sum();
  if (std::abs(total - 1.0) > 1e-10)
    throw std::runtime_error("visitation_distribution: mass " + std::to_string(total));
  return dsa;
}

struct ConservativeResult {
  Mat q;
  int iterations = 0;
  bool converged = false;
};

// Exact fixed point of the penalized evaluation recursion: each sweep applies
// the per-entry minimizer Q <- B^pi Q - beta (rho - d) / d_f. Pairs carrying
// penalty mass must be covered by d_f; violations are reported, not clipped.
inline ConservativeResult exact_conservative_fixed_point(
    const TabularModel& m, const TabularPolicy& pol, double gamma, const Mat& rho, const Mat& d,
    const Mat& d_f, double beta, int max_iters = 100000, double tol = 1e-12) {
  const int S = m.num_states, A = m.num_actions;
  std::ostringstream violations;
  int n_violations = 0;
  Mat penalty = Mat::Zero(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      const double mass = rho(s, a) + d(s, a);
      if (mass > 0.0 && !(d_f(s, a) > 0.0)) {
        if (n_violations < 8) violations << " (" << s << "," << a << ")";
        ++n_violations;
        continue;
      }
      if (mass > 0.0) penalty(s, a) = beta * (rho(s, a) - d(s, a)) / d_f(s, a);
    }
  if (n_violations > 0)
    throw std::invalid_argument("d_f coverage violated at " + std::to_string(n_violations) +
                                " penalized pair(s):" + violations.str());

  ConservativeResult res;
  res.q = Mat::Zero(S, A);
  for (int it = 0; it < max_iters; ++it) {
    Mat next = bellman_backup(m, pol, res.q, gamma) - penalty;
    const double delta = (next - res.q).lpNorm<Eigen::Infinity>();
    res.q = std::move(next);
    res.iterations = it + 1;
    if (delta < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n = 0;
};

// Monte-Carlo estimate of Q^pi(s0, a0) from seeded rollouts; the series is
// truncated once gamma^t drops below 1e-12.
inline McEstimate mc_policy_q(const TabularModel& m, const TabularPolicy& pol, double gamma,
                              int s0, int a0, long n_rollouts, Rng& rng) {
  const int S = m.num_states, A = m.num_actions;
  const int t_max = static_cast<int>(std::ceil(std::log(1e-12) / std::log(gamma)));
  // cumulative rows for fast categorical sampling
  std::vector<double> cum_kernel(m.kernel.size());
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double acc = 0.0;
      for (int sp = 0; sp < S; ++sp) {
        acc += m.t(s, a, sp);
        cum_kernel[static_cast<std::size_t>((s * A + a) * S + sp)] = acc;
      }
    }
  std::vector<double> cum_pi(static_cast<std::size_t>(S * A));
  for (int s = 0; s < S; ++s) {
    double acc = 0.0;
    for (int a = 0; a < A; ++a) {
      acc += pol.pi(s, a);
      cum_pi[static_cast<std::size_t>(s * A + a)] = acc;
    }
  }
  auto sample_row = [&rng](const double* cum, int n) {
    const double u = uniform(rng, 0.0, 1.0);
    for (int i = 0; i < n; ++i)
      if (u <= cum[i]) return i;
    return n - 1;
  };
  // States that only self-loop with zero reward contribute nothing further.
  std::vector<char> sink(static_cast<std::size_t>(S), 1);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      if (m.t(s, a, s) != 1.0 || m.r(s, a) != 0.0) sink[static_cast<std::size_t>(s)] = 0;

  double sum = 0.0, sum_sq = 0.0;
  for (long k = 0; k < n_rollouts; ++k) {
    int s = s0, a = a0;
    double ret = 0.0, disc = 1.0;
    for (int t = 0; t < t_max; ++t) {
      ret += disc * m.r(s, a);
      disc *= gamma;
      s = sample_row(&cum_kernel[static_cast<std::size_t>((s * A + a) * S)], S);
      if (sink[static_cast<std::size_t>(s)]) break;
      a = sample_row(&cum_pi[static_cast<std::size_t>(s * A)], A);
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  McEstimate est;
  est.n = n_rollouts;
  est.mean = sum / n_rollouts;
  const double var = (sum_sq - sum * sum / n_rollouts) / (n_rollouts - 1);
  est.std_error = std::sqrt(var / n_rollouts);
  return est;
}

}  // namespace cosbo::tabular
