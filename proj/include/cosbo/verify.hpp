#pragma once

// Oracle property battery behind the `verify` CLI subcommand. Each check is
// exact (linear algebra against linear algebra) or statistical with a pinned
// seed and a 3-standard-error budget, and prints as a single pass/fail line.

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cosbo/dataset.hpp"
#include "cosbo/nn.hpp"
#include "cosbo/tabular.hpp"

namespace cosbo::harness {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline tabular::TabularModel chain_model(double mix) {
  envs::ChainworldEnv env(envs::DynamicsSpec{1.0, 1.0, mix}, 0);
  return tabular::TabularModel::from_env(env);
}

inline Eigen::VectorXd interior_uniform(int S) {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(S);
  for (int s = 1; s + 1 < S; ++s) mu(s) = 1.0 / (S - 2);
  return mu;
}

inline tabular::TabularPolicy right_policy(int S, double p_right = 0.9) {
  Eigen::MatrixXd pi(S, 2);
  pi.col(0).setConstant(1.0 - p_right);
  pi.col(1).setConstant(p_right);
  return tabular::TabularPolicy(pi);
}

}  // namespace detail

// The standard conservatism test instance: data from a uniform behavior
// policy in the target kernel, rollout occupancy from a mostly-right policy
// in a kernel-mixed simulator, d_f the half/half interpolation.
struct ConservatismInstance {
  tabular::TabularModel target = detail::chain_model(0.0);
  tabular::TabularModel sim = detail::chain_model(0.3);
  tabular::TabularPolicy policy = detail::right_policy(envs::ChainworldEnv::kStates);
  double gamma = 0.9;
  Eigen::MatrixXd d, rho, d_f;

  ConservatismInstance() {
    const Eigen::VectorXd mu0 = detail::interior_uniform(target.num_states);
    d = tabular::visitation_distribution(
        target, tabular::TabularPolicy::uniform(target.num_states, target.num_actions), mu0,
        gamma);
    rho = tabular::visitation_distribution(sim, policy, mu0, gamma);
    d_f = 0.5 * d + 0.5 * rho;
  }
};

inline std::vector<PropertyResult> run_oracle_checks(long mc_rollouts = 1000000) {
  std::vector<PropertyResult> results;
  auto check = [&results](const std::string& name, bool pass, const std::string& detail) {
    results.push_back({name, pass, detail});
  };

  // 1. exact policy evaluation vs Monte-Carlo
  {
    const auto m = detail::chain_model(0.2);
    const auto pol = tabular::TabularPolicy::uniform(m.num_states, m.num_actions);
    const auto q = tabular::exact_policy_q(m, pol, 0.95);
    Rng rng = make_rng(20250809, Stream::misc);
    bool pass = true;
    std::ostringstream detail;
    for (auto [s, a] : {std::pair{5, 1}, std::pair{1, 0}, std::pair{10, 1}}) {
      const auto est = tabular::mc_policy_q(m, pol, 0.95, s, a, mc_rollouts, rng);
      const double err = std::abs(est.mean - q(s, a));
      detail << "(" << s << "," << a << "): |" << est.mean << " - " << q(s, a) << "| vs 3se "
             << 3.0 * est.std_error << "  ";
      if (!(err < 3.0 * est.std_error)) pass = false;
    }
    check("exact_policy_q matches Monte-Carlo within 3 standard errors", pass, detail.str());
  }

  const ConservatismInstance inst;

  // 2. beta = 0 reduces the conservative fixed point to plain evaluation
  {
    const auto plain = tabular::exact_policy_q(inst.target, inst.policy, inst.gamma);
    const auto fp = tabular::exact_conservative_fixed_point(inst.target, inst.policy, inst.gamma,
                                                            inst.rho, inst.d, inst.d_f, 0.0);
    const double err = (fp.q - plain).lpNorm<Eigen::Infinity>();
    check("beta = 0 fixed point equals exact_policy_q (1e-9)", fp.converged && err < 1e-9,
          "sup error " + format_real(err));
  }

  // 3. rho = d cancels the penalty identically
  {
    const auto plain = tabular::exact_policy_q(inst.target, inst.policy, inst.gamma);
    const auto fp = tabular::exact_conservative_fixed_point(inst.target, inst.policy, inst.gamma,
                                                            inst.d, inst.d, inst.d, 4.0);
    const double err = (fp.q - plain).lpNorm<Eigen::Infinity>();
    check("rho = d penalty cancels (1e-9)", fp.converged && err < 1e-9,
          "sup error " + format_real(err));
  }

  // 4. + 5. conservatism structure across the beta grid
  {
    const auto q0 = tabular::exact_conservative_fixed_point(inst.target, inst.policy, inst.gamma,
                                                            inst.rho, inst.d, inst.d_f, 0.0);
    bool monotone = true, pushed_down = true;
    double prev = std::numeric_limits<double>::infinity();
    std::ostringstream detail;
    for (double beta : {0.5, 1.0, 2.0, 5.0}) {
      const auto fp = tabular::exact_conservative_fixed_point(
          inst.target, inst.policy, inst.gamma, inst.rho, inst.d, inst.d_f, beta);
      const double rho_q = inst.rho.cwiseProduct(fp.q).sum();
      detail << "beta " << beta << ": E_rho[Q] " << rho_q << "  ";
      if (!(rho_q < prev)) monotone = false;
      prev = rho_q;
      for (int s = 0; s < inst.target.num_states; ++s)
        for (int a = 0; a < inst.target.num_actions; ++a)
          if (inst.rho(s, a) > inst.d(s, a) && !(fp.q(s, a) < q0.q(s, a))) pushed_down = false;
    }
    check("penalized expectation E_rho[Q] is non-increasing in beta", monotone, detail.str());
    check("every pair with rho > d sits strictly below its beta = 0 value", pushed_down, "");
  }

  // 6. visitation distribution vs truncated series
  {
    const auto m = detail::chain_model(0.15);
    const auto pol = tabular::TabularPolicy::uniform(m.num_states, m.num_actions);
    const Eigen::VectorXd mu0 = detail::interior_uniform(m.num_states);
    const double gamma = 0.95;
    const auto d = tabular::visitation_distribution(m, pol, mu0, gamma);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m.num_states, m.num_states);
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a)
        for (int sp = 0; sp < m.num_states; ++sp) M(s, sp) += pol.pi(s, a) * m.t(s, a, sp);
    Eigen::VectorXd mu = mu0, acc = Eigen::VectorXd::Zero(m.num_states);
    double disc = 1.0;
    for (int t = 0; t < 10000; ++t) {
      acc += disc * mu;
      mu = M.transpose() * mu;
      disc *= gamma;
    }
    acc *= (1.0 - gamma);
    double max_err = 0.0;
    for (int s = 0; s < m.num_states; ++s)
      max_err = std::max(max_err, std::abs(d.row(s).sum() - acc(s)));
    check("visitation distribution matches the truncated series (1e-8)", max_err < 1e-8,
          "max error " + format_real(max_err));
  }

  // 7. fixed point satisfies its stationarity equation
  {
    const double beta = 1.0;
    const auto fp = tabular::exact_conservative_fixed_point(inst.target, inst.policy, inst.gamma,
                                                            inst.rho, inst.d, inst.d_f, beta);
    Eigen::MatrixXd expected =
        tabular::bellman_backup(inst.target, inst.policy, fp.q, inst.gamma);
    for (int s = 0; s < inst.target.num_states; ++s)
      for (int a = 0; a < inst.target.num_actions; ++a)
        if (inst.rho(s, a) + inst.d(s, a) > 0.0)
          expected(s, a) -= beta * (inst.rho(s, a) - inst.d(s, a)) / inst.d_f(s, a);
    const double err = (fp.q - expected).lpNorm<Eigen::Infinity>();
    check("fixed point satisfies Q = backup - beta (rho - d)/d_f (1e-8)", err < 1e-8,
          "sup error " + format_real(err));
  }

  // 8. the Bernoulli(f) mixture sampler realizes d_f = f d + (1 - f) d_synthetic
  {
    // two explicit pools over chainworld pairs; selection frequency per pair
    // must match the f-interpolation of the pool distributions
    const double f = 0.5;
    const int S = inst.target.num_states, A = inst.target.num_actions;
    Rng rng = make_rng(99, Stream::misc);
    const long n = 100000;
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(S, A);
    // categorical samplers over the two distributions
    auto draw = [&rng, S, A](const Eigen::MatrixXd& dist) {
      const double u = uniform(rng, 0.0, 1.0);
      double acc = 0.0;
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          acc += dist(s, a);
          if (u <= acc) return std::pair{s, a};
        }
      return std::pair{S - 1, A - 1};
    };
    for (long k = 0; k < n; ++k) {
      const bool from_real = uniform(rng, 0.0, 1.0) < f;
      const auto [s, a] = draw(from_real ? inst.d : inst.rho);
      counts(s, a) += 1.0;
    }
    const Eigen::MatrixXd expected = (f * inst.d + (1.0 - f) * inst.rho) * double(n);
    bool pass = true;
    double worst = 0.0;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const double p = expected(s, a) / n;
        const double se = std::sqrt(n * p * (1.0 - p));
        const double dev = std::abs(counts(s, a) - expected(s, a));
        if (se > 0.0) worst = std::max(worst, dev / se);
        if (dev > 3.0 * se + 1e-9) pass = false;
      }
    check("Bernoulli(f) selection realizes the d_f mixture (3 standard errors)", pass,
          "worst deviation " + format_real(worst) + " se");
  }

  return results;
}

}  // namespace cosbo::harness
