#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "cosbo/nn.hpp"

using namespace cosbo;
using namespace cosbo::nn;
using Mat = Eigen::MatrixXd;

namespace {
Mat random_obs(Eigen::Index n, int dim, Rng& rng) {
  Mat m(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
  return m;
}
}  // namespace

TEST_CASE("sampled actions lie strictly inside the bounds") {
  Rng init = make_rng(0, Stream::init);
  auto policy = StochasticPolicy::make(3, 1, 32, 2.0, init);
  Rng rng = make_rng(1, Stream::policy);
  Rng obs_rng = make_rng(2, Stream::misc);
  long total = 0;
  while (total < 100000) {
    const Mat obs = random_obs(1000, 3, obs_rng);
    const auto s = policy.sample(obs, rng);
    for (Eigen::Index i = 0; i < s.actions.rows(); ++i) {
      REQUIRE(std::abs(s.actions(i, 0)) < 2.0);
      REQUIRE(std::isfinite(s.log_prob(i)));
    }
    total += s.actions.rows();
  }
}

TEST_CASE("log-density integrates to one over the action interval") {
  Rng init = make_rng(3, Stream::init);
  auto policy = StochasticPolicy::make(2, 1, 16, 2.0, init);
  Mat obs(1, 2);
  obs << 0.3, -0.8;
  const double bound = 2.0;
  const int grid = 40001;
  double integral = 0.0;
  Mat obs_rep = obs.replicate(grid, 1);
  Mat actions(grid, 1);
  for (int k = 0; k < grid; ++k) {
    const double a = -bound + 2.0 * bound * (k + 0.5) / grid;
    actions(k, 0) = a;
  }
  const Eigen::VectorXd logp = policy.log_prob(obs_rep, actions);
  for (int k = 0; k < grid; ++k) integral += std::exp(logp(k)) * (2.0 * bound / grid);
  CHECK(integral == Catch::Approx(1.0).margin(1e-2));
}

TEST_CASE("degenerate noise limit collapses to the squashed mean") {
  Rng init = make_rng(4, Stream::init);
  auto policy = StochasticPolicy::make(2, 1, 16, 2.0, init);
  // force the log-std head to the lower clamp
  auto& last_w = policy.net.weights.back();
  auto& last_b = policy.net.biases.back();
  last_w.row(1).setZero();
  last_b(0, 1) = -20.0;  // clamps to -5
  Mat obs(1, 2);
  obs << 0.5, 0.1;
  const double target = policy.mean_action(obs)(0, 0);
  Rng rng = make_rng(5, Stream::policy);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const auto s = policy.sample(obs, rng);
    sum += s.actions(0, 0);
    sum_sq += s.actions(0, 0) * s.actions(0, 0);
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(std::max(0.0, sum_sq / n - mean * mean));
  CHECK(std::abs(mean - target) < 1e-2);
  // residual spread is at most bound * exp(-5) = 0.0135 (tanh slope <= 1)
  CHECK(stddev < 2.0 * std::exp(-5.0) * 1.1);
}

TEST_CASE("identical rng state gives identical samples") {
  Rng init = make_rng(6, Stream::init);
  auto policy = StochasticPolicy::make(3, 2, 16, 1.5, init);
  Rng obs_rng = make_rng(7, Stream::misc);
  const Mat obs = random_obs(9, 3, obs_rng);
  Rng r1 = make_rng(11, Stream::policy);
  Rng r2 = make_rng(11, Stream::policy);
  const auto s1 = policy.sample(obs, r1);
  const auto s2 = policy.sample(obs, r2);
  CHECK(s1.actions == s2.actions);
  CHECK(s1.log_prob == s2.log_prob);
}

TEST_CASE("tape sampling agrees with the plain-path formulas") {
  Rng init = make_rng(8, Stream::init);
  auto policy = StochasticPolicy::make(3, 2, 24, 2.0, init);
  Rng obs_rng = make_rng(9, Stream::misc);
  const Mat obs = random_obs(6, 3, obs_rng);
  Mat eps(6, 2);
  Rng e = make_rng(10, Stream::policy);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (int d = 0; d < 2; ++d) eps(i, d) = standard_normal(e);

  const auto plain = policy.sample_with_noise(obs, eps);
  ad::Tape t;
  const auto ts = policy.build_sample(t, t.constant(obs), eps);
  CHECK((t.val(ts.actions) - plain.actions).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((t.val(ts.log_prob).col(0) - plain.log_prob).lpNorm<Eigen::Infinity>() < 1e-12);

  // log_prob(obs, actions) recovers the sampling density on the same points
  const Eigen::VectorXd lp = policy.log_prob(obs, plain.actions);
  CHECK((lp - plain.log_prob).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("reparameterized gradients through the sample match finite differences") {
  Rng init = make_rng(12, Stream::init);
  auto policy = StochasticPolicy::make(2, 1, 8, 2.0, init);
  Rng obs_rng = make_rng(13, Stream::misc);
  const Mat obs = random_obs(5, 2, obs_rng);
  Mat eps(5, 1);
  Rng e = make_rng(14, Stream::policy);
  for (Eigen::Index i = 0; i < 5; ++i) eps(i, 0) = standard_normal(e);

  // loss = mean(log_prob) + mean(actions^2): exercises both outputs
  auto loss_of = [&](const StochasticPolicy& p) {
    ad::Tape t;
    const auto ts = p.build_sample(t, t.constant(obs), eps);
    const int loss = t.add(t.mean(ts.log_prob), t.mean(t.square(ts.actions)));
    return t.val(loss)(0, 0);
  };
  ad::Tape t;
  const auto ts = policy.build_sample(t, t.constant(obs), eps);
  const int loss = t.add(t.mean(ts.log_prob), t.mean(t.square(ts.actions)));
  t.backward(loss);

  const double h = 1e-6;
  Rng pick = make_rng(15, Stream::misc);
  for (std::size_t l = 0; l < policy.net.layers(); ++l)
    for (int rep = 0; rep < 4; ++rep) {
      const auto r = static_cast<Eigen::Index>(
          uniform_index(pick, static_cast<std::uint64_t>(policy.net.weights[l].rows())));
      const auto c = static_cast<Eigen::Index>(
          uniform_index(pick, static_cast<std::uint64_t>(policy.net.weights[l].cols())));
      StochasticPolicy plus = policy, minus = policy;
      plus.net.weights[l](r, c) += h;
      minus.net.weights[l](r, c) -= h;
      const double fd = (loss_of(plus) - loss_of(minus)) / (2.0 * h);
      const double g = t.grad(ts.params[2 * l])(r, c);
      INFO("layer " << l << " (" << r << "," << c << ")");
      CHECK(std::abs(g - fd) / std::max({1e-6, std::abs(g), std::abs(fd)}) < 1e-3);
    }
}

TEST_CASE("policy checkpoints round-trip exactly") {
  Rng init = make_rng(16, Stream::init);
  auto policy = StochasticPolicy::make(3, 1, 64, 2.0, init);
  const std::string path =
      (std::filesystem::temp_directory_path() / "cosbo_policy.ckpt").string();
  save_policy(policy, "pendulum", path);
  const auto loaded = load_policy(path);
  CHECK(loaded.env_kind == "pendulum");
  CHECK(loaded.policy.action_bound == policy.action_bound);
  CHECK(loaded.policy.act_dim == policy.act_dim);
  CHECK(loaded.policy.net.widths == policy.net.widths);
  CHECK(loaded.policy.net.flatten() == policy.net.flatten());

  Rng obs_rng = make_rng(17, Stream::misc);
  const Mat obs = random_obs(4, 3, obs_rng);
  CHECK(loaded.policy.mean_action(obs) == policy.mean_action(obs));
}
