#include <chrono>
#include <cstdio>

#include "cosbo/train.hpp"

namespace { int offline_main(long seeds, long iters); int probe_main(double, long, long, const char*); }

using namespace cosbo;

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "bench";

  if (mode == "band") {
    // eval-return band of random-initialization policies
    auto env = envs::make_env(envs::EnvKind::pendulum, envs::identity_spec(), 0);
    double lo = 1e9, hi = -1e9;
    for (int k = 0; k < 100; ++k) {
      Rng rng = make_rng(1000 + k, Stream::init);
      auto p = nn::StochasticPolicy::make(3, 1, 64, 2.0, rng);
      auto ev = core::evaluate(p, env, 10, 77 + k);
      lo = std::min(lo, ev.mean);
      hi = std::max(hi, ev.mean);
    }
    std::printf("random-init policy band over 100 policies: [%.1f, %.1f]\n", lo, hi);
    nn::UniformPolicy up{1, 2.0};
    auto uev = core::evaluate_behavior(up, env, 100, 4242);
    std::printf("uniform policy anchor: %.1f +- %.1f\n", uev.mean, uev.stddev);
    return 0;
  }

  if (mode == "bench") {
    auto env = envs::make_env(envs::EnvKind::pendulum, envs::identity_spec(), 0);
    nn::UniformPolicy behavior{1, 2.0};
    auto ds = data::collect_dataset(env, behavior, 2000, 7);
    core::TrainConfig cfg;
    cfg.source = core::SourceKind::simulator;
    cfg.seed = 3;
    const auto t0 = std::chrono::steady_clock::now();
    auto res = core::train(cfg, ds, 2, 1, 5);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    std::printf("2 iterations (100 critic+100 actor steps each, batch 256): %.0f ms -> %.1f ms/step-pair\n",
                ms, ms / 200.0);
    std::printf("final eval %.1f\n", res.final_eval_mean);
    return 0;
  }

  if (mode == "expert") {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = core::train_online_expert(envs::EnvKind::pendulum, 16000, 1);
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("online expert: %.0f s, final return %.1f\n", s, res.final_return);
    for (const auto& [ret, p] : res.snapshots) std::printf("  snapshot return %.1f\n", ret);
    return 0;
  }

  if (mode == "probe") {
    const double beta = argc > 2 ? std::atof(argv[2]) : 1.0;
    const long iters = argc > 3 ? std::atol(argv[3]) : 60;
    const long seed = argc > 4 ? std::atol(argv[4]) : 0;
    const char* src_name = argc > 5 ? argv[5] : "none";
    return probe_main(beta, iters, seed, src_name);
  }
  if (mode == "offline") {
    const long seeds = argc > 2 ? std::atol(argv[2]) : 2;
    const long iters = argc > 3 ? std::atol(argv[3]) : 100;
    return offline_main(seeds, iters);
  }
  return 1;
}
// offline-arm calibration appended
#include <thread>
namespace {
int offline_main(long seeds, long iters) {
  using namespace cosbo;
  auto med = core::make_medium_dataset(envs::EnvKind::pendulum, 10000, 42);
  std::printf("anchors: random %.1f medium %.1f behavior %.1f expert %.1f\n", med.random_return,
              med.medium_return, med.behavior_return, med.expert_return);
  data::save(med.dataset, "/tmp/pendulum_medium.ds");

  auto run_arm = [&](const char* name, core::SourceKind src, envs::Tier tier, double f,
                     long seed) {
    core::TrainConfig cfg;
    cfg.source = src;
    cfg.sim_tier = tier;
    cfg.f_real = f;
    cfg.seed = seed;
    cfg.gamma = std::getenv("GMA") ? std::atof(std::getenv("GMA")) : 0.97;
    cfg.q_lr = 1e-3;
    cfg.tau = std::getenv("TAU") ? std::atof(std::getenv("TAU")) : 0.01;
    cfg.beta = std::getenv("BETA") ? std::atof(std::getenv("BETA")) : 1.0;
    if (src == core::SourceKind::simulator) {
      cfg.horizon = std::getenv("HOR") ? std::atoi(std::getenv("HOR")) : 1;
      cfg.f_real = std::getenv("FREAL") ? std::atof(std::getenv("FREAL")) : f;
    }
    auto res = core::train(cfg, med.dataset, iters, 10, 20);
    std::printf("%-14s seed %ld: final %.1f (last rows:", name, seed, res.final_eval_mean);
    for (std::size_t i = res.series.size() >= 3 ? res.series.size() - 3 : 0;
         i < res.series.size(); ++i)
      std::printf(" %.0f", res.series[i].eval_return_mean);
    std::printf(") gap %.2f\n", res.series.back().conservatism_gap);
    std::fflush(stdout);
    return res.final_eval_mean;
  };

  for (long seed = 0; seed < seeds; ++seed) {
    std::thread a([&] { run_arm("offline-only", core::SourceKind::none, envs::Tier::medium, 1.0, seed); });
    std::thread b([&] { run_arm("sim-medium", core::SourceKind::simulator, envs::Tier::medium, 0.5, seed); });
    a.join();
    b.join();
  }
  return 0;
}
}  // namespace

namespace {
int probe_main(double beta, long iters, long seed, const char* src_name) {
  using namespace cosbo;
  auto ds = data::load("/tmp/pendulum_medium.ds");
  core::TrainConfig cfg;
  cfg.beta = beta;
  cfg.seed = seed;
  cfg.gamma = std::getenv("GMA") ? std::atof(std::getenv("GMA")) : 0.98;
  cfg.q_lr = 1e-3;
  cfg.tau = std::getenv("TAU") ? std::atof(std::getenv("TAU")) : 0.01;
  if (std::string(src_name) == "none") {
    cfg.source = core::SourceKind::none;
    cfg.f_real = 1.0;
  } else {
    cfg.source = core::SourceKind::simulator;
    cfg.sim_tier = envs::Tier::medium;
    cfg.f_real = 0.5;
    cfg.horizon = std::getenv("HOR") ? std::atoi(std::getenv("HOR")) : 1;
    if (std::getenv("FREAL")) cfg.f_real = std::atof(std::getenv("FREAL"));
  }
  if (std::getenv("PILR")) cfg.pi_lr = std::atof(std::getenv("PILR"));
  if (std::getenv("QLR")) cfg.q_lr = std::atof(std::getenv("QLR"));
  if (std::getenv("BUF")) cfg.buffer_capacity = std::atol(std::getenv("BUF"));
  auto res = core::train(cfg, ds, iters, 5, 20);
  std::printf("beta %.1f src %s seed %ld\n", beta, src_name, seed);
  for (const auto& r : res.series)
    std::printf("  it %3ld eval %8.1f  q_real %9.2f q_rho %9.2f gap %7.2f qloss %9.2f piloss %9.2f\n",
                r.iter, r.eval_return_mean, r.q_real_mean, r.q_synth_mean, r.conservatism_gap,
                r.q_loss, r.pi_loss);
  std::printf("final %.1f\n", res.final_eval_mean);
  return 0;
}
}  // namespace
