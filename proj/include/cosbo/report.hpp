#pragma once

// Run reports, the experiment driver shared by the CLI and the acceptance
// suite, sweep execution, and report aggregation. A RunReport echoes every
// hyperparameter that affects results; rehydrating it and rerunning
// reproduces the metrics bit-identically (timing columns aside).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cosbo/config.hpp"
#include "cosbo/metrics.hpp"
#include "cosbo/train.hpp"

namespace cosbo::harness {

// Locally measured return anchors written next to a dataset at generation
// time; the report's normalized score is anchored on (random, expert) and is
// an artifact-defined scale, not a benchmark one.
struct Anchors {
  double random_return = 0.0;
  double behavior_return = 0.0;
  std::optional<double> medium_return;
  std::optional<double> expert_return;
};

inline std::string anchors_path_for(const std::string& dataset_path) {
  return dataset_path + ".anchors.json";
}

inline void write_anchors(const Anchors& a, const std::string& dataset_path) {
  nlohmann::json j;
  j["random_return"] = a.random_return;
  j["behavior_return"] = a.behavior_return;
  if (a.medium_return) j["medium_return"] = *a.medium_return;
  if (a.expert_return) j["expert_return"] = *a.expert_return;
  std::ofstream out(anchors_path_for(dataset_path));
  if (!out) throw std::runtime_error("cannot write anchors for " + dataset_path);
  out << j.dump(2) << '\n';
}

inline std::optional<Anchors> read_anchors(const std::string& dataset_path) {
  std::ifstream in(anchors_path_for(dataset_path));
  if (!in) return std::nullopt;
  nlohmann::json j;
  in >> j;
  Anchors a;
  a.random_return = j.at("random_return").get<double>();
  a.behavior_return = j.at("behavior_return").get<double>();
  if (j.contains("medium_return")) a.medium_return = j["medium_return"].get<double>();
  if (j.contains("expert_return")) a.expert_return = j["expert_return"].get<double>();
  return a;
}

// Output root override: relative output directories are placed under
// $COSBO_OUT when it is set.
inline std::filesystem::path effective_out_dir(const std::string& out_dir) {
  std::filesystem::path p(out_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("COSBO_OUT")) return std::filesystem::path(root) / p;
  }
  return p;
}

struct RunOutput {
  double final_eval_mean = 0.0;
  double final_eval_std = 0.0;
  std::optional<double> normalized_score;  // anchored on (random, expert) when known
  std::filesystem::path dir;
  std::filesystem::path metrics_csv;
  std::filesystem::path report_json;
  std::filesystem::path checkpoint;
  double wall_ms = 0.0;
};

// Runs one experiment end to end: dataset load, optional concat
// pre-processing, training, and the three output files.
inline RunOutput run_experiment(const ExperimentConfig& cfg_in,
                                const data::OfflineDataset* preloaded = nullptr) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  std::optional<data::OfflineDataset> loaded;
  const data::OfflineDataset* ds = preloaded;
  if (ds == nullptr) {
    loaded = data::load(cfg.dataset_path);
    ds = &*loaded;
  }
  if (ds->meta().kind != cfg.kind)
    throw std::invalid_argument("config key 'env.kind': dataset " + cfg.dataset_path + " holds " +
                                std::string(envs::kind_name(ds->meta().kind)) + " data");

  std::optional<data::OfflineDataset> concatenated;
  if (cfg.concat_sim_data) {
    concatenated = core::concat_simulator_data(*ds, cfg.train.sim_tier, cfg.train.seed);
    ds = &*concatenated;
  }

  const auto result =
      core::train(cfg.train, *ds, cfg.iterations, cfg.eval_every, cfg.eval_episodes);

  RunOutput out;
  out.dir = effective_out_dir(cfg.out_dir);
  std::filesystem::create_directories(out.dir);
  out.metrics_csv = out.dir / "metrics.csv";
  out.report_json = out.dir / "report.json";
  out.checkpoint = out.dir / "policy.ckpt";
  out.final_eval_mean = result.final_eval_mean;
  out.final_eval_std = result.final_eval_std;
  out.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  write_metrics_csv(result.series, out.metrics_csv.string());
  nn::save_policy(result.policy, envs::kind_name(cfg.kind), out.checkpoint.string());

  nlohmann::json rep;
  rep["format_version"] = "cosbo-report v1";
  rep["scenario"] = cfg.scenario.empty() ? "custom" : cfg.scenario;
  rep["seed"] = cfg.train.seed;
  rep["config"] = config_to_json(cfg);
  rep["dataset"]["path"] = cfg.dataset_path;
  rep["dataset"]["kind"] = envs::kind_name(ds->meta().kind);
  rep["dataset"]["behavior"] = ds->meta().behavior;
  rep["dataset"]["size"] = static_cast<long>(ds->size());
  if (const auto anchors = read_anchors(cfg.dataset_path)) {
    rep["anchors"]["random_return"] = anchors->random_return;
    rep["anchors"]["behavior_return"] = anchors->behavior_return;
    if (anchors->medium_return) rep["anchors"]["medium_return"] = *anchors->medium_return;
    if (anchors->expert_return) {
      rep["anchors"]["expert_return"] = *anchors->expert_return;
      const double denom = *anchors->expert_return - anchors->random_return;
      if (denom > 0.0) {
        out.normalized_score = (result.final_eval_mean - anchors->random_return) / denom;
        // locally measured anchors; not a benchmark-defined scale
        rep["final_eval"]["normalized_score"] = *out.normalized_score;
      }
    }
  }
  rep["final_eval"]["mean_return"] = result.final_eval_mean;
  rep["final_eval"]["std_return"] = result.final_eval_std;
  rep["final_eval"]["episodes"] = cfg.eval_episodes;
  rep["wall_ms"] = out.wall_ms;
  rep["metrics"]["columns"] = kMetricsHeader;
  auto& rows = rep["metrics"]["rows"];
  rows = nlohmann::json::array();
  for (const auto& r : result.series)
    rows.push_back({r.iter, r.eval_return_mean, r.eval_return_std, r.q_loss, r.pi_loss,
                    r.q_real_mean, r.q_synth_mean, r.conservatism_gap, r.buffer_size, r.wall_ms});

  std::ofstream jf(out.report_json);
  if (!jf) throw std::runtime_error("cannot write " + out.report_json.string());
  jf << rep.dump(2) << '\n';
  return out;
}

// --- sweeps -------------------------------------------------------------------

struct SweepRun {
  std::string scenario;
  long seed = 0;
  std::filesystem::path dir;
  double final_eval_mean = 0.0;
  std::optional<double> normalized_score;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::filesystem::path manifest;
};

// Scenario x seed grid. Runs are independent (own output directory, own rng
// streams) and may execute concurrently.
inline SweepResult sweep(const ExperimentConfig& base, const std::vector<std::string>& scenarios,
                         long n_seeds, int jobs) {
  const auto root = effective_out_dir(base.out_dir);
  std::filesystem::create_directories(root);
  const auto dataset = data::load(base.dataset_path);

  struct Job {
    ExperimentConfig cfg;
    std::string scenario;
    long seed;
  };
  std::vector<Job> todo;
  for (const auto& scenario : scenarios)
    for (long seed = 0; seed < n_seeds; ++seed) {
      ExperimentConfig cfg = base;
      apply_scenario(cfg, scenario);
      cfg.train.seed = seed;
      cfg.out_dir =
          (std::filesystem::path(base.out_dir) / scenario / ("seed" + std::to_string(seed)))
              .string();
      todo.push_back({std::move(cfg), scenario, seed});
    }

  SweepResult result;
  result.runs.resize(todo.size());
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t mine;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= todo.size()) return;
        mine = next++;
      }
      const auto& job = todo[mine];
      const auto out = run_experiment(job.cfg, &dataset);
      SweepRun run;
      run.scenario = job.scenario;
      run.seed = job.seed;
      run.dir = out.dir;
      run.final_eval_mean = out.final_eval_mean;
      run.normalized_score = out.normalized_score;
      result.runs[mine] = std::move(run);
    }
  };
  std::vector<std::thread> pool;
  const int n_workers = std::max(1, jobs);
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  nlohmann::json manifest;
  manifest["format_version"] = "cosbo-sweep v1";
  manifest["dataset"] = base.dataset_path;
  manifest["seeds"] = n_seeds;
  auto& runs = manifest["runs"];
  runs = nlohmann::json::array();
  for (const auto& r : result.runs) {
    nlohmann::json jr;
    jr["scenario"] = r.scenario;
    jr["seed"] = r.seed;
    jr["dir"] = r.dir.string();
    jr["final_eval_mean"] = r.final_eval_mean;
    if (r.normalized_score) jr["normalized_score"] = *r.normalized_score;
    runs.push_back(jr);
  }
  result.manifest = root / "sweep.json";
  std::ofstream mf(result.manifest);
  mf << manifest.dump(2) << '\n';
  return result;
}

// --- aggregation ----------------------------------------------------------------

struct ScenarioSummary {
  std::string scenario;
  std::vector<std::pair<long, double>> per_seed;  // (seed, final return)
  double mean = 0.0;
  double stddev = 0.0;
};

inline std::vector<ScenarioSummary> aggregate_sweep(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open sweep manifest: " + manifest_path.string());
  nlohmann::json manifest;
  in >> manifest;
  std::map<std::string, ScenarioSummary> by_scenario;
  for (const auto& r : manifest.at("runs")) {
    auto& s = by_scenario[r.at("scenario").get<std::string>()];
    s.scenario = r.at("scenario").get<std::string>();
    s.per_seed.emplace_back(r.at("seed").get<long>(), r.at("final_eval_mean").get<double>());
  }
  std::vector<ScenarioSummary> out;
  for (auto& [name, s] : by_scenario) {
    double sum = 0.0;
    for (const auto& [seed, v] : s.per_seed) sum += v;
    s.mean = sum / static_cast<double>(s.per_seed.size());
    double var = 0.0;
    for (const auto& [seed, v] : s.per_seed) var += (v - s.mean) * (v - s.mean);
    s.stddev = s.per_seed.size() > 1
                   ? std::sqrt(var / static_cast<double>(s.per_seed.size() - 1))
                   : 0.0;
    out.push_back(s);
  }
  return out;
}

inline std::string render_report_table(const std::vector<ScenarioSummary>& summaries) {
  std::ostringstream os;
  os << "scenario,seed,final_return\n";
  for (const auto& s : summaries)
    for (const auto& [seed, v] : s.per_seed)
      os << s.scenario << ',' << seed << ',' << format_real(v) << '\n';
  for (const auto& s : summaries)
    os << s.scenario << ",mean+-std," << format_real(s.mean) << "+-" << format_real(s.stddev)
       << '\n';
  return os.str();
}

}  // namespace cosbo::harness
