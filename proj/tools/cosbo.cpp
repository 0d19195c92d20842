// Command-line entry point: dataset generation, training, evaluation,
// scenario sweeps, oracle verification, and sweep reports.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "cosbo/report.hpp"
#include "cosbo/verify.hpp"

using namespace cosbo;

namespace {

int cmd_gen_data(const std::string& env_kind, const std::string& behavior, long n, long seed,
                 const std::string& out, long expert_steps) {
  const auto kind = envs::kind_from_name(env_kind);
  std::filesystem::create_directories(std::filesystem::path(out).parent_path().empty()
                                          ? "."
                                          : std::filesystem::path(out).parent_path());
  if (behavior == "random") {
    auto env = envs::make_env(kind, envs::identity_spec(), static_cast<std::uint64_t>(seed));
    nn::UniformPolicy policy{env.act_dim(), env.action_bound()};
    auto ds = data::collect_dataset(env, policy, n, seed, "uniform-random");
    data::save(ds, out);
    harness::Anchors anchors;
    auto anchor_env = envs::make_env(kind, envs::identity_spec(), 0);
    anchors.random_return = core::evaluate_behavior(policy, anchor_env, 50, 1234).mean;
    anchors.behavior_return = anchors.random_return;
    harness::write_anchors(anchors, out);
    std::printf("wrote %s (%ld transitions, random behavior, return %.1f)\n", out.c_str(), n,
                anchors.random_return);
    return 0;
  }
  if (behavior == "medium") {
    const auto med = core::make_medium_dataset(kind, n, seed, expert_steps);
    data::save(med.dataset, out);
    harness::Anchors anchors;
    anchors.random_return = med.random_return;
    anchors.behavior_return = med.behavior_return;
    anchors.medium_return = med.medium_return;
    anchors.expert_return = med.expert_return;
    harness::write_anchors(anchors, out);
    nn::save_policy(med.medium_policy, env_kind, out + ".behavior.ckpt");
    nn::save_policy(med.expert_policy, env_kind, out + ".expert.ckpt");
    std::printf(
        "wrote %s (%ld transitions)\nanchors: random %.1f  behavior %.1f  medium %.1f  expert "
        "%.1f\n",
        out.c_str(), n, anchors.random_return, anchors.behavior_return, *anchors.medium_return,
        *anchors.expert_return);
    return 0;
  }
  std::fprintf(stderr, "error: unknown behavior '%s' (random | medium)\n", behavior.c_str());
  return 1;
}

harness::ExperimentConfig load_with_overrides(const std::string& config_path,
                                              const std::string& scenario, long seed, long iters,
                                              const std::string& out) {
  auto cfg = harness::load_config(config_path);
  if (!scenario.empty()) harness::apply_scenario(cfg, scenario);
  if (seed >= 0) cfg.train.seed = seed;
  if (iters > 0) cfg.iterations = iters;
  if (!out.empty()) cfg.out_dir = out;
  return cfg;
}

int cmd_train(const std::string& config_path, const std::string& scenario, long seed, long iters,
              const std::string& out) {
  const auto cfg = load_with_overrides(config_path, scenario, seed, iters, out);
  const auto result = harness::run_experiment(cfg);
  std::printf("final return %.2f +- %.2f", result.final_eval_mean, result.final_eval_std);
  if (result.normalized_score) std::printf("  (normalized %.3f)", *result.normalized_score);
  std::printf("\noutputs: %s\n", result.dir.string().c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, long episodes, long seed) {
  const auto loaded = nn::load_policy(ckpt);
  auto env = envs::make_env(loaded.env_kind, envs::identity_spec(), 0);
  const auto ev = core::evaluate(loaded.policy, env, episodes, static_cast<std::uint64_t>(seed));
  std::printf("mean return %.2f +- %.2f over %ld episodes\n", ev.mean, ev.stddev, episodes);
  for (std::size_t i = 0; i < ev.returns.size(); ++i)
    std::printf("  episode %zu: %.2f\n", i, ev.returns[i]);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& scenarios_csv, long seeds,
              int jobs, const std::string& out) {
  auto base = harness::load_config(config_path);
  if (!out.empty()) base.out_dir = out;
  std::vector<std::string> scenarios;
  std::stringstream ss(scenarios_csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) scenarios.push_back(item);
  }
  if (scenarios.empty())
    scenarios.assign(harness::scenario_names().begin(), harness::scenario_names().end());
  const auto result = harness::sweep(base, scenarios, seeds, jobs);
  std::printf("%zu runs -> %s\n", result.runs.size(), result.manifest.string().c_str());
  for (const auto& r : result.runs)
    std::printf("  %-16s seed %ld: %.2f\n", r.scenario.c_str(), r.seed, r.final_eval_mean);
  return 0;
}

int cmd_verify(long mc_rollouts) {
  const auto results = harness::run_oracle_checks(mc_rollouts);
  bool all = true;
  for (const auto& r : results) {
    std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.empty() ? "" : " -- ", r.detail.c_str());
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

int cmd_report(const std::string& sweep_path, const std::string& out_csv) {
  std::filesystem::path manifest(sweep_path);
  if (std::filesystem::is_directory(manifest)) manifest /= "sweep.json";
  const auto summaries = harness::aggregate_sweep(manifest);
  const std::string table = harness::render_report_table(summaries);
  std::fputs(table.c_str(), stdout);
  if (!out_csv.empty()) {
    std::ofstream f(out_csv);
    if (!f) throw std::runtime_error("cannot write " + out_csv);
    f << table;
    std::printf("wrote %s\n", out_csv.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cosbo: conservative offline RL with simulator rollouts"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "collect an offline dataset on the target env");
  std::string gen_env = "pendulum", gen_behavior = "medium", gen_out = "data/dataset.ds";
  long gen_n = 10000, gen_seed = 42, gen_expert_steps = 16000;
  gen->add_option("--env", gen_env, "pendulum | chainworld");
  gen->add_option("--behavior", gen_behavior, "medium | random");
  gen->add_option("--n", gen_n, "number of transitions");
  gen->add_option("--seed", gen_seed, "collection seed");
  gen->add_option("--out", gen_out, "output dataset path");
  gen->add_option("--expert-steps", gen_expert_steps, "online steps for the expert (medium)");

  auto* train = app.add_subcommand("train", "train one configuration");
  std::string train_config, train_scenario, train_out;
  long train_seed = -1, train_iters = 0;
  train->add_option("--config", train_config, "config file")->required();
  train->add_option("--scenario", train_scenario, "scenario preset override");
  train->add_option("--seed", train_seed, "seed override");
  train->add_option("--iters", train_iters, "iteration override");
  train->add_option("--out", train_out, "output directory override");

  auto* eval = app.add_subcommand("eval", "evaluate a policy checkpoint on the target env");
  std::string eval_ckpt;
  long eval_episodes = 20, eval_seed = 0;
  eval->add_option("--ckpt", eval_ckpt, "policy checkpoint")->required();
  eval->add_option("--episodes", eval_episodes, "episodes");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  auto* sweep = app.add_subcommand("sweep", "run a scenario x seed grid");
  std::string sweep_config, sweep_scenarios, sweep_out;
  long sweep_seeds = 5;
  int sweep_jobs = 2;
  sweep->add_option("--config", sweep_config, "config file")->required();
  sweep->add_option("--scenarios", sweep_scenarios, "comma list (default: all five)");
  sweep->add_option("--seeds", sweep_seeds, "seeds per scenario");
  sweep->add_option("--jobs", sweep_jobs, "parallel runs");
  sweep->add_option("--out", sweep_out, "output root override");

  auto* verify = app.add_subcommand("verify", "run the tabular-oracle property battery");
  long verify_mc = 1000000;
  verify->add_option("--mc-rollouts", verify_mc, "Monte-Carlo rollouts per checked pair");

  auto* report = app.add_subcommand("report", "aggregate a sweep into a comparison table");
  std::string report_sweep, report_out;
  report->add_option("--sweep", report_sweep, "sweep directory or manifest")->required();
  report->add_option("--out", report_out, "also write the table as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_env, gen_behavior, gen_n, gen_seed, gen_out, gen_expert_steps);
    if (train->parsed())
      return cmd_train(train_config, train_scenario, train_seed, train_iters, train_out);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_episodes, eval_seed);
    if (sweep->parsed())
      return cmd_sweep(sweep_config, sweep_scenarios, sweep_seeds, sweep_jobs, sweep_out);
    if (verify->parsed()) return cmd_verify(verify_mc);
    if (report->parsed()) return cmd_report(report_sweep, report_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
