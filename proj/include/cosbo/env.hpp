#pragma once

// Two small environments that act as both the target system and the
// perturbed simulator: a torque-limited pendulum swing-up and a stochastic
// 12-state chainworld. Both support teleporting to arbitrary states so
// synthetic rollouts can branch off dataset states.
//
// The pendulum keeps (cos th, sin th, vel) as its primary state, identical to
// the observation vector. Stepping is a pure function of that triple, so a
// rollout that re-enters a recorded observation reproduces the recorded next
// observation bit for bit.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cosbo/common.hpp"
#include "cosbo/dynamics.hpp"

namespace cosbo::envs {

enum class EnvKind { pendulum, chainworld };

inline const char* kind_name(EnvKind k) {
  return k == EnvKind::pendulum ? "pendulum" : "chainworld";
}

inline EnvKind kind_from_name(std::string_view name) {
  if (name == "pendulum") return EnvKind::pendulum;
  if (name == "chainworld") return EnvKind::chainworld;
  throw std::invalid_argument("unknown env kind: " + std::string(name));
}

struct EnvState {
  // continuous case: unit circle coordinates plus angular velocity
  double cos_th = 1.0;
  double sin_th = 0.0;
  double vel = 0.0;
  // tabular case
  int index = -1;

  double angle() const { return std::atan2(sin_th, cos_th); }

  static EnvState pendulum(double theta, double theta_dot) {
    EnvState s;
    s.cos_th = std::cos(theta);
    s.sin_th = std::sin(theta);
    s.vel = theta_dot;
    return s;
  }
  static EnvState chain(int idx) {
    EnvState s;
    s.index = idx;
    return s;
  }
};

struct StepResult {
  EnvState next_state;
  double reward = 0.0;
  bool terminal = false;
};

class PendulumEnv {
 public:
  static constexpr double kBaseMass = 1.0;
  static constexpr double kBaseLength = 1.0;
  static constexpr double kGravity = 9.81;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;

  PendulumEnv(const DynamicsSpec& spec, std::uint64_t seed)
      : mass_(kBaseMass * spec.mass_scale),
        length_(kBaseLength * spec.length_scale),
        rng_(make_rng(seed, Stream::env)) {
    spec.validate();
  }

  int obs_dim() const { return 3; }
  int act_dim() const { return 1; }
  double action_bound() const { return kMaxTorque; }
  double mass() const { return mass_; }
  double length() const { return length_; }

  void reseed(std::uint64_t seed) { rng_ = make_rng(seed, Stream::env); }

  EnvState reset() {
    const double theta = uniform(rng_, -M_PI, M_PI);
    const double vel = uniform(rng_, -1.0, 1.0);
    state_ = EnvState::pendulum(theta, vel);
    return state_;
  }

  void set_state(const EnvState& s) {
    if (!std::isfinite(s.cos_th) || !std::isfinite(s.sin_th) || !std::isfinite(s.vel))
      throw std::invalid_argument("pendulum set_state: non-finite state");
    state_ = s;
  }

  const EnvState& state() const { return state_; }

  std::vector<double> observe() const { return observe(state_); }
  std::vector<double> observe(const EnvState& s) const {
    return {s.cos_th, s.sin_th, s.vel};
  }

  EnvState state_from_obs(std::span<const double> obs) const {
    if (obs.size() != 3) throw std::invalid_argument("pendulum obs must have 3 components");
    EnvState s;
    s.cos_th = obs[0];
    s.sin_th = obs[1];
    s.vel = obs[2];
    return s;
  }

  // Semi-implicit Euler on th'' = -(3g)/(2l) sin(th + pi) + 3/(m l^2) u.
  // Reward is the usual quadratic cost of the pre-step state and the clipped
  // torque; episodes never terminate inside the env.
  StepResult step(std::span<const double> action) {
    if (action.size() != 1)
      throw std::invalid_argument("pendulum step: action must have 1 component");
    const double u = clip(action[0], -kMaxTorque, kMaxTorque);
    const double th = std::atan2(state_.sin_th, state_.cos_th);
    const double reward = -(th * th + 0.1 * state_.vel * state_.vel + 0.001 * u * u);
    const double acc =
        3.0 * kGravity / (2.0 * length_) * state_.sin_th + 3.0 / (mass_ * length_ * length_) * u;
    const double vel_next = clip(state_.vel + acc * kDt, -kMaxSpeed, kMaxSpeed);
    const double th_next = th + vel_next * kDt;
    EnvState next;
    next.cos_th = std::cos(th_next);
    next.sin_th = std::sin(th_next);
    next.vel = vel_next;
    state_ = next;
    return StepResult{next, reward, false};
  }

 private:
  double mass_;
  double length_;
  EnvState state_ = EnvState::pendulum(M_PI, 0.0);
  Rng rng_;
};

// A 1-D chain with an absorbing cliff at index 0 and an absorbing goal at the
// far end. Two actions (toward cliff / toward goal) move with probability
// 0.8, stay with 0.15 and slip backwards with 0.05. Rewards depend on (s, a)
// only: a small step cost plus the base-kernel probability of entering the
// goal minus that of entering the cliff, so terminal-cut TD targets agree
// exactly with the linear-solve oracle (absorbing rows have zero reward).
//
// A perturbed instance mixes a uniform kernel into every row; the reward
// table is part of the task and never changes with the dynamics.
class ChainworldEnv {
 public:
  static constexpr int kStates = 12;
  static constexpr int kActions = 2;
  static constexpr int kCliff = 0;
  static constexpr int kGoal = kStates - 1;

  ChainworldEnv(const DynamicsSpec& spec, std::uint64_t seed)
      : rng_(make_rng(seed, Stream::env)) {
    spec.validate();
    build_tables(spec.kernel_mix);
  }

  int obs_dim() const { return kStates; }  // one-hot state encoding
  int act_dim() const { return 1; }
  double action_bound() const { return 1.0; }

  void reseed(std::uint64_t seed) { rng_ = make_rng(seed, Stream::env); }

  static bool absorbing(int s) { return s == kCliff || s == kGoal; }

  EnvState reset() {
    const int idx = 1 + static_cast<int>(uniform_index(rng_, kStates - 2));
    state_ = EnvState::chain(idx);
    return state_;
  }

  void set_state(const EnvState& s) {
    if (s.index < 0 || s.index >= kStates)
      throw std::invalid_argument("chainworld set_state: index out of range [0," +
                                  std::to_string(kStates) + ")");
    state_ = s;
  }

  const EnvState& state() const { return state_; }

  std::vector<double> observe() const { return observe(state_); }
  std::vector<double> observe(const EnvState& s) const {
    std::vector<double> o(kStates, 0.0);
    o[static_cast<std::size_t>(s.index)] = 1.0;
    return o;
  }

  EnvState state_from_obs(std::span<const double> obs) const {
    if (obs.size() != kStates)
      throw std::invalid_argument("chainworld obs must have " + std::to_string(kStates) +
                                  " components");
    int best = 0;
    for (int i = 1; i < kStates; ++i)
      if (obs[static_cast<std::size_t>(i)] > obs[static_cast<std::size_t>(best)]) best = i;
    return EnvState::chain(best);
  }

  // Continuous actions are quantized: component >= 0 moves toward the goal.
  static int quantize(double a) { return a >= 0.0 ? 1 : 0; }

  StepResult step(std::span<const double> action) {
    if (action.size() != 1)
      throw std::invalid_argument("chainworld step: action must have 1 component");
    const int a = quantize(action[0]);
    const int s = state_.index;
    const double reward = rewards_[static_cast<std::size_t>(s * kActions + a)];
    const double u = uniform(rng_, 0.0, 1.0);
    double acc = 0.0;
    int next = kStates - 1;
    for (int sp = 0; sp < kStates; ++sp) {
      acc += kernel_at(s, a, sp);
      if (u <= acc) {
        next = sp;
        break;
      }
    }
    state_ = EnvState::chain(next);
    return StepResult{state_, reward, absorbing(next)};
  }

  // The exact tables driving step's sampler: T[s][a][s'] flattened and R[s][a].
  const std::vector<double>& kernel() const { return kernel_; }
  const std::vector<double>& reward_table() const { return rewards_; }
  double kernel_at(int s, int a, int sp) const {
    return kernel_[static_cast<std::size_t>((s * kActions + a) * kStates + sp)];
  }

  static std::vector<double> base_kernel() {
    std::vector<double> T(kStates * kActions * kStates, 0.0);
    auto at = [&T](int s, int a, int sp) -> double& {
      return T[static_cast<std::size_t>((s * kActions + a) * kStates + sp)];
    };
    for (int s = 0; s < kStates; ++s) {
      for (int a = 0; a < kActions; ++a) {
        if (absorbing(s)) {
          at(s, a, s) = 1.0;
          continue;
        }
        const int fwd = a == 1 ? s + 1 : s - 1;
        const int bwd = a == 1 ? s - 1 : s + 1;
        at(s, a, fwd) += 0.8;
        at(s, a, s) += 0.15;
        at(s, a, bwd) += 0.05;
      }
    }
    return T;
  }

  static std::vector<double> base_rewards() {
    const auto T = base_kernel();
    std::vector<double> R(kStates * kActions, 0.0);
    for (int s = 0; s < kStates; ++s) {
      if (absorbing(s)) continue;
      for (int a = 0; a < kActions; ++a) {
        const double p_goal = T[static_cast<std::size_t>((s * kActions + a) * kStates + kGoal)];
        const double p_cliff = T[static_cast<std::size_t>((s * kActions + a) * kStates + kCliff)];
        R[static_cast<std::size_t>(s * kActions + a)] = -0.01 + p_goal - p_cliff;
      }
    }
    return R;
  }

 private:
  void build_tables(double mix) {
    kernel_ = base_kernel();
    rewards_ = base_rewards();
    if (mix > 0.0) {
      const double u = 1.0 / kStates;
      for (auto& p : kernel_) p = (1.0 - mix) * p + mix * u;
    }
  }

  std::vector<double> kernel_;
  std::vector<double> rewards_;
  EnvState state_ = EnvState::chain(1);
  Rng rng_;
};

// Value-semantic wrapper dispatching to the concrete environment. One
// instance per worker; instances are movable but hold their own generator
// and must not be shared across concurrent writers.
class Env {
 public:
  Env(PendulumEnv e) : impl_(std::move(e)) {}
  Env(ChainworldEnv e) : impl_(std::move(e)) {}

  EnvKind kind() const {
    return std::holds_alternative<PendulumEnv>(impl_) ? EnvKind::pendulum : EnvKind::chainworld;
  }

  int obs_dim() const {
    return std::visit([](const auto& e) { return e.obs_dim(); }, impl_);
  }
  int act_dim() const {
    return std::visit([](const auto& e) { return e.act_dim(); }, impl_);
  }
  double action_bound() const {
    return std::visit([](const auto& e) { return e.action_bound(); }, impl_);
  }
  void reseed(std::uint64_t seed) {
    std::visit([&](auto& e) { e.reseed(seed); }, impl_);
  }
  EnvState reset() {
    return std::visit([](auto& e) { return e.reset(); }, impl_);
  }
  void set_state(const EnvState& s) {
    std::visit([&](auto& e) { e.set_state(s); }, impl_);
  }
  const EnvState& state() const {
    return std::visit([](const auto& e) -> const EnvState& { return e.state(); }, impl_);
  }
  StepResult step(std::span<const double> action) {
    return std::visit([&](auto& e) { return e.step(action); }, impl_);
  }
  std::vector<double> observe() const {
    return std::visit([](const auto& e) { return e.observe(); }, impl_);
  }
  std::vector<double> observe(const EnvState& s) const {
    return std::visit([&](const auto& e) { return e.observe(s); }, impl_);
  }
  EnvState state_from_obs(std::span<const double> obs) const {
    return std::visit([&](const auto& e) { return e.state_from_obs(obs); }, impl_);
  }

  PendulumEnv& pendulum() { return std::get<PendulumEnv>(impl_); }
  const ChainworldEnv& chainworld() const {
    if (!std::holds_alternative<ChainworldEnv>(impl_))
      throw std::logic_error("exact kernel is only defined for chainworld");
    return std::get<ChainworldEnv>(impl_);
  }

 private:
  std::variant<PendulumEnv, ChainworldEnv> impl_;
};

inline Env make_env(EnvKind kind, const DynamicsSpec& spec, std::uint64_t seed = 0) {
  spec.validate();
  if (kind == EnvKind::pendulum) return Env(PendulumEnv(spec, seed));
  return Env(ChainworldEnv(spec, seed));
}

inline Env make_env(std::string_view kind, const DynamicsSpec& spec, std::uint64_t seed = 0) {
  return make_env(kind_from_name(kind), spec, seed);
}

}  // namespace cosbo::envs
