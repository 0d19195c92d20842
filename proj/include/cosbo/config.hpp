#pragma once

// Experiment configuration: a flat key = value text format with one section
// per module, scenario presets that map onto fixed config deltas, and a JSON
// echo that rehydrates bit-identically reproducible runs.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "cosbo/env.hpp"
#include "cosbo/train.hpp"

namespace cosbo::harness {

struct ExperimentConfig {
  envs::EnvKind kind = envs::EnvKind::pendulum;
  std::string dataset_path;
  core::TrainConfig train;
  std::string sim_mode = "medium";  // medium | very | extreme | custom
  std::string scenario;             // empty, or one of the named scenarios
  bool concat_sim_data = false;     // concat-baseline pre-processing step
  long iterations = 100;
  long eval_every = 10;
  long eval_episodes = 10;
  std::string out_dir = "runs/exp";

  void validate() const {
    train.validate();
    if (iterations < 1) throw std::invalid_argument("config key 'iterations': must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("config key 'eval_every': must be >= 1");
    if (eval_episodes < 1)
      throw std::invalid_argument("config key 'eval_episodes': must be >= 1");
    if (dataset_path.empty())
      throw std::invalid_argument("config key 'dataset': missing dataset path");
  }
};

// The five experimental arms. Scenario deltas override the base config's
// rollout source; everything else stays as configured.
inline void apply_scenario(ExperimentConfig& c, const std::string& name) {
  c.scenario = name;
  c.concat_sim_data = false;
  if (name == "offline-only") {
    c.train.source = core::SourceKind::none;
    c.train.f_real = 1.0;
  } else if (name == "learned-model") {
    c.train.source = core::SourceKind::learned_model;
  } else if (name == "sim-medium" || name == "sim-very" || name == "sim-extreme") {
    c.train.source = core::SourceKind::simulator;
    c.train.sim_spec.reset();
    c.sim_mode = name.substr(4);
    c.train.sim_tier = envs::tier_from_name(c.sim_mode);
  } else if (name == "concat-baseline") {
    // synthetic data is merged into the dataset up front, then trained
    // without any rollout source
    c.train.source = core::SourceKind::none;
    c.train.f_real = 1.0;
    c.concat_sim_data = true;
  } else {
    throw std::invalid_argument("unknown scenario: " + name);
  }
}

inline const std::array<std::string, 5>& scenario_names() {
  static const std::array<std::string, 5> names = {"offline-only", "learned-model", "sim-medium",
                                                   "sim-very", "sim-extreme"};
  return names;
}

namespace detail {

struct KvFile {
  std::map<std::string, std::string> values;  // "section.key" -> raw string

  static KvFile parse(std::istream& in, const std::string& origin) {
    KvFile f;
    std::string line, section;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(origin + ": line " + std::to_string(line_no) +
                                    ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument(origin + ": line " + std::to_string(line_no) + ": empty key");
      f.values[section.empty() ? key : section + "." + key] = val;
    }
    return f;
  }

  bool take(const std::string& key, std::string* out) {
    const auto it = values.find(key);
    if (it == values.end()) return false;
    *out = it->second;
    values.erase(it);
    return true;
  }

  template <typename T, typename Parse>
  void get(const std::string& key, T* out, Parse parse) {
    std::string raw;
    if (!take(key, &raw)) return;
    try {
      *out = parse(raw);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
};

inline double parse_double(const std::string& s) {
  bool ok = false;
  const double v = parse_real(s, &ok);
  if (!ok) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s) {
  std::size_t pos = 0;
  const long v = std::stol(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

inline int parse_int(const std::string& s) { return static_cast<int>(parse_long(s)); }

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("not a boolean: '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  using namespace detail;
  KvFile f = KvFile::parse(in, origin);
  ExperimentConfig c;

  f.get("env.kind", &c.kind, [](const std::string& s) { return envs::kind_from_name(s); });
  f.get("data.dataset", &c.dataset_path, [](const std::string& s) { return s; });

  auto& t = c.train;
  f.get("train.beta", &t.beta, parse_double);
  f.get("train.f_real", &t.f_real, parse_double);
  f.get("train.rollout_horizon", &t.horizon, parse_int);
  f.get("train.gamma", &t.gamma, parse_double);
  f.get("train.entropy_weight", &t.entropy_weight, parse_double);
  f.get("train.q_lr", &t.q_lr, parse_double);
  f.get("train.pi_lr", &t.pi_lr, parse_double);
  f.get("train.tau", &t.tau, parse_double);
  f.get("train.batch_size", &t.batch_size, parse_int);
  f.get("train.gradient_steps_per_iter", &t.gradient_steps_per_iter, parse_int);
  f.get("train.rollout_batch", &t.rollout_batch, parse_int);
  f.get("train.rollout_source", &t.source,
        [](const std::string& s) { return core::source_from_name(s); });
  f.get("train.rollout_action_schedule", &t.schedule,
        [](const std::string& s) { return rollout::schedule_from_name(s); });
  f.get("train.twin_critics", &t.twin_critics, parse_bool);
  f.get("train.model_ensemble", &t.model_ensemble, parse_int);
  f.get("train.model_epochs", &t.model_epochs, parse_int);
  f.get("train.hidden", &t.hidden, parse_int);
  f.get("train.buffer_capacity", &t.buffer_capacity, parse_long);
  f.get("train.seed", &t.seed, parse_long);

  f.get("simulator.tier", &c.sim_mode, [](const std::string& s) { return s; });
  if (c.sim_mode == "custom") {
    envs::DynamicsSpec spec;
    f.get("simulator.mass_scale", &spec.mass_scale, parse_double);
    f.get("simulator.length_scale", &spec.length_scale, parse_double);
    f.get("simulator.kernel_mix", &spec.kernel_mix, parse_double);
    try {
      spec.validate();
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("config section 'simulator': ") + e.what());
    }
    t.sim_spec = spec;
  } else {
    t.sim_tier = envs::tier_from_name(c.sim_mode);
    // tolerate (and drop) identity spec keys when a tier is selected
    std::string ignored;
    f.take("simulator.mass_scale", &ignored);
    f.take("simulator.length_scale", &ignored);
    f.take("simulator.kernel_mix", &ignored);
  }

  std::string scenario;
  if (f.take("run.scenario", &scenario) && !scenario.empty()) apply_scenario(c, scenario);
  f.get("run.iterations", &c.iterations, parse_long);
  f.get("run.eval_every", &c.eval_every, parse_long);
  f.get("run.eval_episodes", &c.eval_episodes, parse_long);
  f.get("run.out", &c.out_dir, [](const std::string& s) { return s; });

  if (!f.values.empty())
    throw std::invalid_argument(origin + ": unknown config key '" + f.values.begin()->first +
                                "'");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_config(in, path);
}

// --- JSON echo ---------------------------------------------------------------

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["env"]["kind"] = envs::kind_name(c.kind);
  j["data"]["dataset"] = c.dataset_path;
  const auto& t = c.train;
  auto& tj = j["train"];
  tj["beta"] = t.beta;
  tj["f_real"] = t.f_real;
  tj["rollout_horizon"] = t.horizon;
  tj["gamma"] = t.gamma;
  tj["entropy_weight"] = t.entropy_weight;
  tj["q_lr"] = t.q_lr;
  tj["pi_lr"] = t.pi_lr;
  tj["tau"] = t.tau;
  tj["batch_size"] = t.batch_size;
  tj["gradient_steps_per_iter"] = t.gradient_steps_per_iter;
  tj["rollout_batch"] = t.rollout_batch;
  tj["rollout_source"] = core::source_name(t.source);
  tj["rollout_action_schedule"] = rollout::schedule_name(t.schedule);
  tj["twin_critics"] = t.twin_critics;
  tj["model_ensemble"] = t.model_ensemble;
  tj["model_epochs"] = t.model_epochs;
  tj["hidden"] = t.hidden;
  tj["buffer_capacity"] = t.buffer_capacity;
  tj["seed"] = t.seed;
  auto& sj = j["simulator"];
  sj["tier"] = t.sim_spec ? "custom" : c.sim_mode;
  if (t.sim_spec) {
    sj["mass_scale"] = t.sim_spec->mass_scale;
    sj["length_scale"] = t.sim_spec->length_scale;
    sj["kernel_mix"] = t.sim_spec->kernel_mix;
  }
  auto& rj = j["run"];
  rj["scenario"] = c.scenario;
  rj["concat_sim_data"] = c.concat_sim_data;
  rj["iterations"] = c.iterations;
  rj["eval_every"] = c.eval_every;
  rj["eval_episodes"] = c.eval_episodes;
  rj["out"] = c.out_dir;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.kind = envs::kind_from_name(j.at("env").at("kind").get<std::string>());
  c.dataset_path = j.at("data").at("dataset").get<std::string>();
  auto& t = c.train;
  const auto& tj = j.at("train");
  t.beta = tj.at("beta").get<double>();
  t.f_real = tj.at("f_real").get<double>();
  t.horizon = tj.at("rollout_horizon").get<int>();
  t.gamma = tj.at("gamma").get<double>();
  t.entropy_weight = tj.at("entropy_weight").get<double>();
  t.q_lr = tj.at("q_lr").get<double>();
  t.pi_lr = tj.at("pi_lr").get<double>();
  t.tau = tj.at("tau").get<double>();
  t.batch_size = tj.at("batch_size").get<int>();
  t.gradient_steps_per_iter = tj.at("gradient_steps_per_iter").get<int>();
  t.rollout_batch = tj.at("rollout_batch").get<int>();
  t.source = core::source_from_name(tj.at("rollout_source").get<std::string>());
  t.schedule = rollout::schedule_from_name(tj.at("rollout_action_schedule").get<std::string>());
  t.twin_critics = tj.at("twin_critics").get<bool>();
  t.model_ensemble = tj.at("model_ensemble").get<int>();
  t.model_epochs = tj.at("model_epochs").get<int>();
  t.hidden = tj.at("hidden").get<int>();
  t.buffer_capacity = tj.at("buffer_capacity").get<long>();
  t.seed = tj.at("seed").get<long>();
  const auto& sj = j.at("simulator");
  c.sim_mode = sj.at("tier").get<std::string>();
  if (c.sim_mode == "custom") {
    envs::DynamicsSpec spec;
    spec.mass_scale = sj.at("mass_scale").get<double>();
    spec.length_scale = sj.at("length_scale").get<double>();
    spec.kernel_mix = sj.at("kernel_mix").get<double>();
    t.sim_spec = spec;
  } else {
    t.sim_tier = envs::tier_from_name(c.sim_mode);
  }
  const auto& rj = j.at("run");
  c.scenario = rj.at("scenario").get<std::string>();
  c.concat_sim_data = rj.at("concat_sim_data").get<bool>();
  c.iterations = rj.at("iterations").get<long>();
  c.eval_every = rj.at("eval_every").get<long>();
  c.eval_episodes = rj.at("eval_episodes").get<long>();
  c.out_dir = rj.at("out").get<std::string>();
  return c;
}

}  // namespace cosbo::harness
