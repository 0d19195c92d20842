#pragma once

// Offline dataset handling: the columnar transition store, behavior-policy
// collection on the unperturbed target environment, the newline-delimited
// text format (bit-exact real round trip), and seeded minibatch sampling.

#include <Eigen/Dense>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosbo/common.hpp"
#include "cosbo/env.hpp"

namespace cosbo::data {

enum class Source { real, synthetic };

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
  Source source = Source::real;
};

// Column-major batch of transitions; rows index samples. Works both as the
// dataset's storage and as the unit moved between samplers, rollout sources
// and the training losses.
struct Batch {
  Eigen::MatrixXd states;       // n x obs_dim
  Eigen::MatrixXd actions;      // n x act_dim
  Eigen::VectorXd rewards;      // n
  Eigen::MatrixXd next_states;  // n x obs_dim
  Eigen::VectorXd terminals;    // n, 0/1
  std::vector<Source> sources;  // n

  Eigen::Index size() const { return states.rows(); }
  int obs_dim() const { return static_cast<int>(states.cols()); }
  int act_dim() const { return static_cast<int>(actions.cols()); }

  static Batch empty(int obs_dim, int act_dim) {
    Batch b;
    b.states.resize(0, obs_dim);
    b.actions.resize(0, act_dim);
    b.rewards.resize(0);
    b.next_states.resize(0, obs_dim);
    b.terminals.resize(0);
    return b;
  }

  void reserve_rows(Eigen::Index n, int obs_dim, int act_dim) {
    states.resize(n, obs_dim);
    actions.resize(n, act_dim);
    rewards.resize(n);
    next_states.resize(n, obs_dim);
    terminals.resize(n);
    sources.resize(static_cast<std::size_t>(n));
  }

  void set_row(Eigen::Index i, const Transition& t) {
    for (int j = 0; j < obs_dim(); ++j) states(i, j) = t.state[static_cast<std::size_t>(j)];
    for (int j = 0; j < act_dim(); ++j) actions(i, j) = t.action[static_cast<std::size_t>(j)];
    rewards(i) = t.reward;
    for (int j = 0; j < obs_dim(); ++j)
      next_states(i, j) = t.next_state[static_cast<std::size_t>(j)];
    terminals(i) = t.terminal ? 1.0 : 0.0;
    sources[static_cast<std::size_t>(i)] = t.source;
  }

  Transition row(Eigen::Index i) const {
    Transition t;
    t.state.assign(states.row(i).begin(), states.row(i).end());
    t.action.assign(actions.row(i).begin(), actions.row(i).end());
    t.reward = rewards(i);
    t.next_state.assign(next_states.row(i).begin(), next_states.row(i).end());
    t.terminal = terminals(i) != 0.0;
    t.source = sources[static_cast<std::size_t>(i)];
    return t;
  }
};

struct DatasetMeta {
  envs::EnvKind kind = envs::EnvKind::pendulum;
  std::string behavior = "unknown";
  long seed = 0;
  long size = 0;
};

// Immutable once constructed; readers share it freely and bring their own rng.
class OfflineDataset {
 public:
  OfflineDataset(Batch transitions, DatasetMeta meta)
      : batch_(std::move(transitions)), meta_(std::move(meta)) {
    if (batch_.size() == 0) throw std::invalid_argument("OfflineDataset: empty");
    meta_.size = batch_.size();
    for (auto s : batch_.sources)
      if (s != Source::real)
        throw std::invalid_argument("OfflineDataset: all transitions must be real");
    if (!batch_.states.allFinite() || !batch_.actions.allFinite() ||
        !batch_.next_states.allFinite() || !batch_.rewards.allFinite())
      throw std::invalid_argument("OfflineDataset: non-finite entries");
  }

  Eigen::Index size() const { return batch_.size(); }
  int obs_dim() const { return batch_.obs_dim(); }
  int act_dim() const { return batch_.act_dim(); }
  const Batch& all() const { return batch_; }
  const DatasetMeta& meta() const { return meta_; }

  Transition row(Eigen::Index i) const { return batch_.row(i); }

  // Uniform sample with replacement, deterministic given the rng state.
  Batch sample(Eigen::Index n, Rng& rng) const {
    if (n < 1) throw std::invalid_argument("sample_batch: n must be >= 1");
    Batch out;
    out.reserve_rows(n, obs_dim(), act_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j =
          static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(size())));
      out.states.row(i) = batch_.states.row(j);
      out.actions.row(i) = batch_.actions.row(j);
      out.rewards(i) = batch_.rewards(j);
      out.next_states.row(i) = batch_.next_states.row(j);
      out.terminals(i) = batch_.terminals(j);
      out.sources[static_cast<std::size_t>(i)] = batch_.sources[static_cast<std::size_t>(j)];
    }
    return out;
  }

 private:
  Batch batch_;
  DatasetMeta meta_;
};

// Rolls the behavior policy in the (unperturbed) target env and records every
// transition. Pendulum episodes run a fixed 200-step horizon; chainworld
// episodes end at absorption. Fully determined by the seed.
template <typename Behavior>
OfflineDataset collect_dataset(envs::Env& env, Behavior&& behavior, long n_transitions,
                               long seed, const std::string& behavior_name = "unspecified") {
  if (n_transitions <= 0) throw std::invalid_argument("collect_dataset: n_transitions <= 0");
  env.reseed(static_cast<std::uint64_t>(seed));
  Rng action_rng = make_rng(static_cast<std::uint64_t>(seed), Stream::behavior);
  const int horizon = env.kind() == envs::EnvKind::pendulum ? 200 : 1000;

  std::vector<Transition> rows;
  rows.reserve(static_cast<std::size_t>(n_transitions));
  while (static_cast<long>(rows.size()) < n_transitions) {
    env.reset();
    for (int t = 0; t < horizon && static_cast<long>(rows.size()) < n_transitions; ++t) {
      Transition tr;
      tr.state = env.observe();
      tr.action = behavior(std::span<const double>(tr.state), action_rng);
      const auto res = env.step(tr.action);
      tr.reward = res.reward;
      tr.next_state = env.observe(res.next_state);
      tr.terminal = res.terminal;
      tr.source = Source::real;
      rows.push_back(std::move(tr));
      if (res.terminal) break;
    }
  }

  Batch b;
  b.reserve_rows(static_cast<Eigen::Index>(rows.size()), env.obs_dim(), env.act_dim());
  for (Eigen::Index i = 0; i < b.size(); ++i) b.set_row(i, rows[static_cast<std::size_t>(i)]);
  DatasetMeta meta;
  meta.kind = env.kind();
  meta.seed = seed;
  meta.behavior = behavior_name;
  return OfflineDataset(std::move(b), std::move(meta));
}

// --- text format -----------------------------------------------------------
//
//   cosbo-dataset v1 <env_kind> <obs_dim> <act_dim> <n>
//   <state...> <action...> <reward> <next_state...> <terminal 0/1>
//
// Reals are printed with 17 significant digits, so the round trip is exact.

inline void save(const OfflineDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "cosbo-dataset v1 " << envs::kind_name(ds.meta().kind) << ' ' << ds.obs_dim() << ' '
      << ds.act_dim() << ' ' << ds.size() << '\n';
  const Batch& b = ds.all();
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    for (int j = 0; j < b.obs_dim(); ++j) out << format_real(b.states(i, j)) << ' ';
    for (int j = 0; j < b.act_dim(); ++j) out << format_real(b.actions(i, j)) << ' ';
    out << format_real(b.rewards(i)) << ' ';
    for (int j = 0; j < b.obs_dim(); ++j) out << format_real(b.next_states(i, j)) << ' ';
    out << (b.terminals(i) != 0.0 ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline OfflineDataset load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error(path + ": empty file");
  std::istringstream hs(header);
  std::string magic, version, kind;
  int obs_dim = 0, act_dim = 0;
  long n = 0;
  if (!(hs >> magic >> version >> kind >> obs_dim >> act_dim >> n) || magic != "cosbo-dataset" ||
      version != "v1")
    throw std::runtime_error(path + ": malformed header: " + header);
  if (obs_dim <= 0 || act_dim <= 0 || n <= 0)
    throw std::runtime_error(path + ": bad dimensions in header");

  DatasetMeta meta;
  meta.kind = envs::kind_from_name(kind);
  Batch b;
  b.reserve_rows(n, obs_dim, act_dim);

  const int fields = 2 * obs_dim + act_dim + 2;
  std::string line;
  long count = 0;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (count >= n)
      throw std::runtime_error(path + ": header claims " + std::to_string(n) +
                               " transitions but found more at line " + std::to_string(line_no));
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (static_cast<int>(toks.size()) != fields)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": expected " +
                               std::to_string(fields) + " fields, got " +
                               std::to_string(toks.size()));
    auto real_at = [&](int k) {
      bool ok = false;
      const double v = parse_real(toks[static_cast<std::size_t>(k)], &ok);
      if (!ok || !std::isfinite(v))
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": bad real value '" + toks[static_cast<std::size_t>(k)] + "'");
      return v;
    };
    int k = 0;
    for (int j = 0; j < obs_dim; ++j) b.states(count, j) = real_at(k++);
    for (int j = 0; j < act_dim; ++j) b.actions(count, j) = real_at(k++);
    b.rewards(count) = real_at(k++);
    for (int j = 0; j < obs_dim; ++j) b.next_states(count, j) = real_at(k++);
    const std::string& term = toks[static_cast<std::size_t>(k)];
    if (term != "0" && term != "1")
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": terminal flag must be 0 or 1, got '" + term + "'");
    b.terminals(count) = term == "1" ? 1.0 : 0.0;
    b.sources[static_cast<std::size_t>(count)] = Source::real;
    ++count;
  }
  if (count != n)
    throw std::runtime_error(path + ": header claims " + std::to_string(n) +
                             " transitions but file has " + std::to_string(count));
  return OfflineDataset(std::move(b), std::move(meta));
}

inline bool equal(const OfflineDataset& a, const OfflineDataset& b) {
  if (a.size() != b.size() || a.obs_dim() != b.obs_dim() || a.act_dim() != b.act_dim())
    return false;
  const Batch &x = a.all(), &y = b.all();
  return x.states == y.states && x.actions == y.actions && x.rewards == y.rewards &&
         x.next_states == y.next_states && x.terminals == y.terminals;
}

}  // namespace cosbo::data
