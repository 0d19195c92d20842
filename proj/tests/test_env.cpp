#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "cosbo/env.hpp"

using namespace cosbo;
using namespace cosbo::envs;

TEST_CASE("dynamics spec validation") {
  CHECK_THROWS(DynamicsSpec{-1.0, 1.0, 0.0}.validate());
  CHECK_THROWS(DynamicsSpec{1.0, 0.0, 0.0}.validate());
  CHECK_THROWS(DynamicsSpec{1.0, 1.0, 1.5}.validate());
  CHECK_NOTHROW(DynamicsSpec{0.1, 3.0, 1.0}.validate());
  CHECK(identity_spec().is_identity());
}

TEST_CASE("preset multipliers match the three tiers exactly") {
  struct Row {
    const char* name;
    double mass, length;
  };
  const Row rows[] = {
      {"light", 0.5, 1.0},         {"heavy", 1.5, 1.0},
      {"short", 1.0, 0.5},         {"long", 1.0, 1.5},
      {"very_light", 0.3, 1.0},    {"very_heavy", 2.0, 1.0},
      {"very_short", 1.0, 0.3},    {"very_long", 1.0, 2.0},
      {"extreme_light", 0.1, 1.0}, {"extreme_heavy", 3.0, 1.0},
      {"extreme_short", 1.0, 0.1}, {"extreme_long", 1.0, 3.0},
  };
  for (const auto& r : rows) {
    const auto s = preset(r.name);
    INFO(r.name);
    CHECK(s.mass_scale == r.mass);
    CHECK(s.length_scale == r.length);
    CHECK(s.kernel_mix == 0.0);
    // only one parameter differs from 1.0 per preset
    CHECK(((s.mass_scale == 1.0) || (s.length_scale == 1.0)));
  }
  CHECK_THROWS(preset("gigantic"));
}

TEST_CASE("make_env basics") {
  auto env = make_env(EnvKind::pendulum, identity_spec(), 0);
  CHECK(env.pendulum().mass() == 1.0);
  CHECK(env.pendulum().length() == 1.0);

  auto heavy = make_env(EnvKind::pendulum, preset("heavy"), 0);
  CHECK(heavy.pendulum().mass() == 1.5);

  CHECK_THROWS(make_env("flatland", identity_spec()));
  CHECK_THROWS(make_env(EnvKind::pendulum, DynamicsSpec{0.0, 1.0, 0.0}));
}

TEST_CASE("pendulum upright equilibrium: zero action keeps theta at 0 with reward 0") {
  auto env = make_env(EnvKind::pendulum, identity_spec(), 0);
  env.set_state(EnvState::pendulum(0.0, 0.0));
  const double a[] = {0.0};
  const auto res = env.step(a);
  CHECK(res.reward == 0.0);
  CHECK(res.next_state.angle() == 0.0);
  CHECK(res.next_state.vel == 0.0);
  CHECK_FALSE(res.terminal);
}

TEST_CASE("pendulum hanging equilibrium of the shifted-sine convention") {
  // th'' = -(3g)/(2l) sin(th + pi) + 3/(m l^2) u vanishes at th = pi, u = 0
  // (up to sin(pi) rounding in the stored coordinates).
  auto env = make_env(EnvKind::pendulum, identity_spec(), 0);
  env.set_state(EnvState::pendulum(M_PI, 0.0));
  const double a[] = {0.0};
  const auto res = env.step(a);
  CHECK(std::abs(res.next_state.vel) < 1e-12);
}

TEST_CASE("lighter pendulum reacts more strongly to torque") {
  auto light = make_env(EnvKind::pendulum, DynamicsSpec{0.5, 1.0, 0.0}, 0);
  auto normal = make_env(EnvKind::pendulum, identity_spec(), 0);
  const double a[] = {1.0};
  light.set_state(EnvState::pendulum(0.3, 0.0));
  normal.set_state(EnvState::pendulum(0.3, 0.0));
  const double dv_light = light.step(a).next_state.vel;
  const double dv_normal = normal.step(a).next_state.vel;
  CHECK(std::abs(dv_light) > std::abs(dv_normal));
}

TEST_CASE("angular acceleration magnitude decreases in mass and length scales") {
  // Grid restricted to sin(th) >= 0 and positive torque, where both the
  // gravity and torque contributions share a sign.
  const double thetas[] = {0.0, M_PI / 6, M_PI / 3, M_PI / 2, 2 * M_PI / 3, 5 * M_PI / 6, M_PI};
  const double torques[] = {0.5, 1.0, 2.0};
  const double scales[] = {0.5, 1.0, 1.5, 2.0};
  auto accel = [](double mass_scale, double length_scale, double th, double u) {
    const double m = mass_scale, l = length_scale;
    return 3.0 * PendulumEnv::kGravity / (2.0 * l) * std::sin(th) + 3.0 / (m * l * l) * u;
  };
  for (double th : thetas)
    for (double u : torques) {
      for (std::size_t i = 0; i + 1 < std::size(scales); ++i) {
        CHECK(std::abs(accel(scales[i], 1.0, th, u)) > std::abs(accel(scales[i + 1], 1.0, th, u)));
        CHECK(std::abs(accel(1.0, scales[i], th, u)) > std::abs(accel(1.0, scales[i + 1], th, u)));
      }
    }
}

TEST_CASE("pendulum reward stays within its bound") {
  auto env = make_env(EnvKind::pendulum, identity_spec(), 3);
  Rng rng = make_rng(3, Stream::misc);
  const double lo = -(M_PI * M_PI + 0.1 * 64.0 + 0.001 * 4.0);
  env.reset();
  for (int t = 0; t < 500; ++t) {
    const double a[] = {uniform(rng, -2.0, 2.0)};
    const auto res = env.step(a);
    CHECK(res.reward <= 0.0);
    CHECK(res.reward >= lo);
    CHECK_FALSE(res.terminal);
    const auto& s = res.next_state;
    CHECK(std::abs(s.cos_th * s.cos_th + s.sin_th * s.sin_th - 1.0) < 1e-9);
    CHECK(std::abs(s.vel) <= 8.0);
  }
}

TEST_CASE("trajectories are bitwise deterministic given seed, spec and actions") {
  for (EnvKind kind : {EnvKind::pendulum, EnvKind::chainworld}) {
    auto run = [&] {
      auto env = make_env(kind, DynamicsSpec{1.0, 1.0, kind == EnvKind::chainworld ? 0.25 : 0.0},
                          42);
      Rng arng = make_rng(7, Stream::misc);
      std::ostringstream out;
      env.reset();
      for (int t = 0; t < 200; ++t) {
        const double a[] = {uniform(arng, -1.0, 1.0)};
        const auto res = env.step(a);
        for (double x : env.observe(res.next_state)) out << format_real(x) << ' ';
        out << format_real(res.reward) << res.terminal << '\n';
        if (res.terminal) env.reset();
      }
      return out.str();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("set_state then equal-seed stepping is reproducible") {
  auto env1 = make_env(EnvKind::chainworld, DynamicsSpec{1.0, 1.0, 0.3}, 9);
  auto env2 = make_env(EnvKind::chainworld, DynamicsSpec{1.0, 1.0, 0.3}, 9);
  const double a[] = {0.7};
  env1.set_state(EnvState::chain(5));
  env2.set_state(EnvState::chain(5));
  for (int i = 0; i < 50; ++i) {
    const auto r1 = env1.step(a);
    const auto r2 = env2.step(a);
    CHECK(r1.next_state.index == r2.next_state.index);
    CHECK(r1.reward == r2.reward);
    if (r1.terminal) {
      env1.set_state(EnvState::chain(5));
      env2.set_state(EnvState::chain(5));
    }
  }
}

TEST_CASE("set_state validation") {
  auto env = make_env(EnvKind::chainworld, identity_spec(), 0);
  CHECK_NOTHROW(env.set_state(EnvState::chain(ChainworldEnv::kStates - 1)));
  CHECK_THROWS(env.set_state(EnvState::chain(ChainworldEnv::kStates)));
  CHECK_THROWS(env.set_state(EnvState::chain(-1)));

  auto pend = make_env(EnvKind::pendulum, identity_spec(), 0);
  EnvState bad = EnvState::pendulum(0.0, 0.0);
  bad.vel = std::nan("");
  CHECK_THROWS(pend.set_state(bad));
}

TEST_CASE("pendulum set_state does not disturb the generator") {
  auto env1 = make_env(EnvKind::pendulum, identity_spec(), 11);
  auto env2 = make_env(EnvKind::pendulum, identity_spec(), 11);
  env2.set_state(EnvState::pendulum(1.0, 2.0));
  const auto s1 = env1.reset();
  const auto s2 = env2.reset();
  CHECK(s1.cos_th == s2.cos_th);
  CHECK(s1.sin_th == s2.sin_th);
  CHECK(s1.vel == s2.vel);
}

TEST_CASE("chainworld mixed kernel stays row-stochastic") {
  for (double mix : {0.0, 0.3, 0.5, 1.0}) {
    auto env = make_env(EnvKind::chainworld, DynamicsSpec{1.0, 1.0, mix}, 0);
    const auto& chain = env.chainworld();
    for (int s = 0; s < ChainworldEnv::kStates; ++s)
      for (int a = 0; a < ChainworldEnv::kActions; ++a) {
        double sum = 0.0;
        for (int sp = 0; sp < ChainworldEnv::kStates; ++sp) sum += chain.kernel_at(s, a, sp);
        CHECK(std::abs(sum - 1.0) < 1e-12);
      }
  }
}

TEST_CASE("exact_kernel identity, full and half mixing") {
  auto base = make_env(EnvKind::chainworld, identity_spec(), 0);
  auto full = make_env(EnvKind::chainworld, DynamicsSpec{1.0, 1.0, 1.0}, 0);
  auto half = make_env(EnvKind::chainworld, DynamicsSpec{1.0, 1.0, 0.5}, 0);

  const auto T0 = base.chainworld().kernel();
  const auto T_base = ChainworldEnv::base_kernel();
  REQUIRE(T0.size() == T_base.size());
  for (std::size_t i = 0; i < T0.size(); ++i) CHECK(T0[i] == T_base[i]);

  const double u = 1.0 / ChainworldEnv::kStates;
  for (double p : full.chainworld().kernel()) CHECK(p == Catch::Approx(u).margin(1e-15));

  const auto& Th = half.chainworld().kernel();
  const auto& Tf = full.chainworld().kernel();
  for (std::size_t i = 0; i < Th.size(); ++i)
    CHECK(Th[i] == Catch::Approx(0.5 * (T0[i] + Tf[i])).margin(1e-15));

  CHECK_THROWS(make_env(EnvKind::pendulum, identity_spec(), 0).chainworld());
}

TEST_CASE("chainworld rewards and terminals follow the tables") {
  auto env = make_env(EnvKind::chainworld, identity_spec(), 5);
  const auto& chain = env.chainworld();
  const auto& R = chain.reward_table();
  const double a_right[] = {1.0};
  for (int trial = 0; trial < 200; ++trial) {
    env.reset();
    for (int t = 0; t < 100; ++t) {
      const int s = env.state().index;
      const auto res = env.step(a_right);
      CHECK(res.reward == R[static_cast<std::size_t>(s * ChainworldEnv::kActions + 1)]);
      CHECK(res.terminal == ChainworldEnv::absorbing(res.next_state.index));
      if (res.terminal) break;
    }
  }
}

TEST_CASE("pendulum observation round-trips through state_from_obs bit-exactly") {
  auto env = make_env(EnvKind::pendulum, identity_spec(), 21);
  Rng rng = make_rng(21, Stream::misc);
  env.reset();
  for (int t = 0; t < 100; ++t) {
    const auto obs = env.observe();
    const auto s = env.state_from_obs(obs);
    CHECK(s.cos_th == obs[0]);
    CHECK(s.sin_th == obs[1]);
    CHECK(s.vel == obs[2]);
    const double a[] = {uniform(rng, -2.0, 2.0)};
    env.step(a);
  }
}
