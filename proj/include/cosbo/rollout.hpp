#pragma once

// Synthetic-data generation behind one contract: roll out from dataset states
// either in perturbed simulator instances (the headline configuration) or in
// a learned one-step ensemble (the model-based baseline). Generated
// transitions are always tagged synthetic and live in a bounded FIFO buffer
// between iterations; they are never persisted.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cosbo/autodiff.hpp"
#include "cosbo/common.hpp"
#include "cosbo/dataset.hpp"
#include "cosbo/dynamics.hpp"
#include "cosbo/env.hpp"
#include "cosbo/nn.hpp"

namespace cosbo::rollout {

using Mat = Eigen::MatrixXd;

enum class Schedule { dataset_first, policy_only };

inline const char* schedule_name(Schedule s) {
  return s == Schedule::dataset_first ? "dataset_first" : "policy_only";
}
inline Schedule schedule_from_name(std::string_view name) {
  if (name == "dataset_first") return Schedule::dataset_first;
  if (name == "policy_only") return Schedule::policy_only;
  throw std::invalid_argument("unknown rollout_action_schedule: " + std::string(name));
}

struct GenResult {
  data::Batch batch;
  int truncated = 0;  // rollouts cut short by absorbing states
};

namespace detail {

template <typename Policy>
std::vector<double> sample_one(const Policy& policy, const std::vector<double>& obs, Rng& rng) {
  Mat o(1, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t j = 0; j < obs.size(); ++j) o(0, static_cast<Eigen::Index>(j)) = obs[j];
  const auto s = policy.sample(o, rng);
  return std::vector<double>(s.actions.row(0).begin(), s.actions.row(0).end());
}

}  // namespace detail

// Four perturbed environments per mismatch tier; each rollout start draws one
// of them uniformly. A custom list of specs (e.g. a single identity spec, or
// chainworld kernel mixes) is also supported.
class SimulatorSource {
 public:
  static SimulatorSource tier(envs::EnvKind kind, envs::Tier t, std::uint64_t seed) {
    std::vector<envs::DynamicsSpec> specs;
    for (const auto& name : envs::tier_presets(t)) specs.push_back(envs::preset(name));
    return SimulatorSource(kind, std::move(specs), seed);
  }

  static SimulatorSource custom(envs::EnvKind kind, std::vector<envs::DynamicsSpec> specs,
                                std::uint64_t seed) {
    return SimulatorSource(kind, std::move(specs), seed);
  }

  int num_presets() const { return static_cast<int>(envs_.size()); }
  const std::vector<long>& preset_counts() const { return counts_; }
  const std::vector<envs::DynamicsSpec>& specs() const { return specs_; }

  template <typename Policy>
  GenResult generate(const data::Batch& starts, const Policy& policy, int h, Schedule schedule,
                     Rng& rng) {
    if (h < 1) throw std::invalid_argument("rollout horizon must be >= 1");
    GenResult out;
    std::vector<data::Transition> rows;
    rows.reserve(static_cast<std::size_t>(starts.size()) * static_cast<std::size_t>(h));
    for (Eigen::Index i = 0; i < starts.size(); ++i) {
      const auto preset_idx = uniform_index(rng, static_cast<std::uint64_t>(envs_.size()));
      ++counts_[preset_idx];
      envs::Env& env = envs_[preset_idx];
      const std::vector<double> start_obs(starts.states.row(i).begin(),
                                          starts.states.row(i).end());
      env.set_state(env.state_from_obs(start_obs));
      std::vector<double> action;
      if (schedule == Schedule::dataset_first)
        action.assign(starts.actions.row(i).begin(), starts.actions.row(i).end());
      else
        action = detail::sample_one(policy, start_obs, rng);
      for (int t = 0; t < h; ++t) {
        data::Transition tr;
        tr.state = env.observe();
        tr.action = action;
        const auto res = env.step(tr.action);
        tr.reward = res.reward;
        tr.next_state = env.observe(res.next_state);
        tr.terminal = res.terminal;
        tr.source = data::Source::synthetic;
        rows.push_back(std::move(tr));
        if (res.terminal) {
          if (t + 1 < h) ++out.truncated;
          break;
        }
        if (t + 1 < h) action = detail::sample_one(policy, env.observe(), rng);
      }
    }
    out.batch.reserve_rows(static_cast<Eigen::Index>(rows.size()), starts.obs_dim(),
                           starts.act_dim());
    for (Eigen::Index i = 0; i < out.batch.size(); ++i)
      out.batch.set_row(i, rows[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  SimulatorSource(envs::EnvKind kind, std::vector<envs::DynamicsSpec> specs, std::uint64_t seed)
      : specs_(std::move(specs)), counts_(specs_.size(), 0) {
    if (specs_.empty()) throw std::invalid_argument("SimulatorSource: no dynamics specs");
    std::uint64_t k = 0;
    for (const auto& s : specs_) envs_.push_back(envs::make_env(kind, s, seed * 131 + (k++)));
  }

  std::vector<envs::DynamicsSpec> specs_;
  std::vector<envs::Env> envs_;
  std::vector<long> counts_;
};

// Per-feature normalization statistics of the fitting dataset.
struct Normalizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std_dev;

  static Normalizer fit(const Mat& x) {
    Normalizer n;
    n.mean = x.colwise().mean();
    Mat centered = x.rowwise() - n.mean;
    n.std_dev = (centered.array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < n.std_dev.size(); ++j)
      if (n.std_dev(j) < 1e-6) n.std_dev(j) = 1e-6;
    return n;
  }
  Mat apply(const Mat& x) const {
    return ((x.rowwise() - mean).array().rowwise() / std_dev.array()).matrix();
  }
  Mat invert(const Mat& z) const {
    return ((z.array().rowwise() * std_dev.array()).matrix().rowwise() + mean);
  }
};

// Ensemble of one-step models (state ++ action) -> (delta state ++ reward),
// trained on normalized targets. Each generated step queries one uniformly
// drawn member. This is the model-based baseline's data path, not the
// simulator's.
class LearnedModelSource {
 public:
  LearnedModelSource(std::vector<nn::Mlp> members, Normalizer in_norm, Normalizer out_norm,
                     int obs_dim, int act_dim)
      : members_(std::move(members)),
        in_norm_(std::move(in_norm)),
        out_norm_(std::move(out_norm)),
        obs_dim_(obs_dim),
        act_dim_(act_dim) {}

  int ensemble_size() const { return static_cast<int>(members_.size()); }
  int obs_dim() const { return obs_dim_; }

  // One-step prediction with a chosen member; exposed for validation.
  void predict(int member, const Mat& obs, const Mat& act, Mat* next_obs,
               Eigen::VectorXd* reward) const {
    Mat input(obs.rows(), obs_dim_ + act_dim_);
    input << obs, act;
    const Mat z = members_[static_cast<std::size_t>(member)].forward(in_norm_.apply(input));
    const Mat y = out_norm_.invert(z);
    *next_obs = obs + y.leftCols(obs_dim_);
    *reward = y.col(obs_dim_);
  }

  template <typename Policy>
  GenResult generate(const data::Batch& starts, const Policy& policy, int h, Schedule schedule,
                     Rng& rng) {
    if (h < 1) throw std::invalid_argument("rollout horizon must be >= 1");
    GenResult out;
    std::vector<data::Transition> rows;
    rows.reserve(static_cast<std::size_t>(starts.size()) * static_cast<std::size_t>(h));
    for (Eigen::Index i = 0; i < starts.size(); ++i) {
      std::vector<double> obs(starts.states.row(i).begin(), starts.states.row(i).end());
      std::vector<double> action;
      if (schedule == Schedule::dataset_first)
        action.assign(starts.actions.row(i).begin(), starts.actions.row(i).end());
      else
        action = detail::sample_one(policy, obs, rng);
      for (int t = 0; t < h; ++t) {
        const auto member = static_cast<int>(
            uniform_index(rng, static_cast<std::uint64_t>(members_.size())));
        Mat o(1, obs_dim_), a(1, act_dim_);
        for (int j = 0; j < obs_dim_; ++j) o(0, j) = obs[static_cast<std::size_t>(j)];
        for (int j = 0; j < act_dim_; ++j) a(0, j) = action[static_cast<std::size_t>(j)];
        Mat next;
        Eigen::VectorXd reward;
        predict(member, o, a, &next, &reward);
        data::Transition tr;
        tr.state = obs;
        tr.action = action;
        tr.reward = reward(0);
        tr.next_state.assign(next.row(0).begin(), next.row(0).end());
        tr.terminal = false;  // the model carries no termination signal
        tr.source = data::Source::synthetic;
        rows.push_back(tr);
        obs = tr.next_state;
        if (t + 1 < h) action = detail::sample_one(policy, obs, rng);
      }
    }
    out.batch.reserve_rows(static_cast<Eigen::Index>(rows.size()), starts.obs_dim(),
                           starts.act_dim());
    for (Eigen::Index i = 0; i < out.batch.size(); ++i)
      out.batch.set_row(i, rows[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  std::vector<nn::Mlp> members_;
  Normalizer in_norm_;
  Normalizer out_norm_;
  int obs_dim_;
  int act_dim_;
};

// Fits the ensemble by minibatch MSE on normalized (delta state, reward)
// targets; members differ through initialization and shuffling only.
inline LearnedModelSource fit_model(const data::OfflineDataset& ds, int ensemble_size, int epochs,
                                    Rng& rng, int hidden = 64, double lr = 1e-3) {
  if (ensemble_size < 1) throw std::invalid_argument("fit_model: ensemble_size must be >= 1");
  if (ds.size() < 16) throw std::invalid_argument("fit_model: dataset too small for one batch");
  const int obs_dim = ds.obs_dim(), act_dim = ds.act_dim();
  const auto n = ds.size();

  Mat input(n, obs_dim + act_dim);
  input << ds.all().states, ds.all().actions;
  Mat target(n, obs_dim + 1);
  target << (ds.all().next_states - ds.all().states), ds.all().rewards;
  const Normalizer in_norm = Normalizer::fit(input);
  const Normalizer out_norm = Normalizer::fit(target);
  const Mat x = in_norm.apply(input);
  const Mat y = out_norm.apply(target);

  const Eigen::Index batch = std::min<Eigen::Index>(256, n);
  std::vector<nn::Mlp> members;
  for (int k = 0; k < ensemble_size; ++k) {
    nn::Mlp net = nn::Mlp::make({obs_dim + act_dim, hidden, hidden, obs_dim + 1},
                                nn::Activation::relu, rng);
    nn::Adam opt(lr);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      for (Eigen::Index at = 0; at + batch <= n; at += batch) {
        Mat xb(batch, x.cols()), yb(batch, y.cols());
        for (Eigen::Index i = 0; i < batch; ++i) {
          xb.row(i) = x.row(order[static_cast<std::size_t>(at + i)]);
          yb.row(i) = y.row(order[static_cast<std::size_t>(at + i)]);
        }
        ad::Tape t;
        std::vector<int> params;
        const int pred = net.build(t, t.constant(xb), &params);
        const int loss = t.mean(t.square(t.sub(pred, t.constant(yb))));
        t.backward(loss);
        opt.step(net, nn::grads_of(t, params));
      }
    }
    members.push_back(std::move(net));
  }
  return LearnedModelSource(std::move(members), in_norm, out_norm, obs_dim, act_dim);
}

// Held-out MSE of one ensemble member in the normalized target space;
// validation helper for fit_model.
inline double model_validation_mse(const LearnedModelSource& src, const data::OfflineDataset& ds,
                                   int member) {
  Mat next;
  Eigen::VectorXd reward;
  src.predict(member, ds.all().states, ds.all().actions, &next, &reward);
  Mat pred(ds.size(), ds.obs_dim() + 1);
  pred << (next - ds.all().states), reward;
  Mat target(ds.size(), ds.obs_dim() + 1);
  target << (ds.all().next_states - ds.all().states), ds.all().rewards;
  const Normalizer norm = Normalizer::fit(target);
  return (norm.apply(pred) - norm.apply(target)).array().square().mean();
}

// Bounded FIFO of synthetic transitions; eviction is strictly oldest-first.
// Single writer; readers sample with their own rng.
class SyntheticBuffer {
 public:
  SyntheticBuffer(int obs_dim, int act_dim, Eigen::Index capacity)
      : obs_dim_(obs_dim), act_dim_(act_dim), cap_(capacity) {
    if (capacity < 1) throw std::invalid_argument("SyntheticBuffer: capacity must be >= 1");
    states_.resize(cap_, obs_dim);
    actions_.resize(cap_, act_dim);
    rewards_.resize(cap_);
    next_states_.resize(cap_, obs_dim);
    terminals_.resize(cap_);
  }

  Eigen::Index size() const { return size_; }
  Eigen::Index capacity() const { return cap_; }

  void push(const data::Batch& b) {
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      if (b.sources[static_cast<std::size_t>(i)] != data::Source::synthetic)
        throw std::invalid_argument("SyntheticBuffer: only synthetic transitions are stored");
      states_.row(head_) = b.states.row(i);
      actions_.row(head_) = b.actions.row(i);
      rewards_(head_) = b.rewards(i);
      next_states_.row(head_) = b.next_states.row(i);
      terminals_(head_) = b.terminals(i);
      head_ = (head_ + 1) % cap_;
      if (size_ < cap_) ++size_;
    }
  }

  data::Batch sample(Eigen::Index n, Rng& rng) const {
    if (size_ == 0) throw std::runtime_error("SyntheticBuffer: sample from empty buffer");
    if (n < 1) throw std::invalid_argument("SyntheticBuffer: n must be >= 1");
    data::Batch out;
    out.reserve_rows(n, obs_dim_, act_dim_);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j =
          static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(size_)));
      out.states.row(i) = states_.row(j);
      out.actions.row(i) = actions_.row(j);
      out.rewards(i) = rewards_(j);
      out.next_states.row(i) = next_states_.row(j);
      out.terminals(i) = terminals_(j);
      out.sources[static_cast<std::size_t>(i)] = data::Source::synthetic;
    }
    return out;
  }

  // Current contents, oldest first.
  data::Batch snapshot() const {
    data::Batch out;
    out.reserve_rows(size_, obs_dim_, act_dim_);
    const Eigen::Index oldest = size_ < cap_ ? 0 : head_;
    for (Eigen::Index i = 0; i < size_; ++i) {
      const Eigen::Index j = (oldest + i) % cap_;
      out.states.row(i) = states_.row(j);
      out.actions.row(i) = actions_.row(j);
      out.rewards(i) = rewards_(j);
      out.next_states.row(i) = next_states_.row(j);
      out.terminals(i) = terminals_(j);
      out.sources[static_cast<std::size_t>(i)] = data::Source::synthetic;
    }
    return out;
  }

 private:
  int obs_dim_;
  int act_dim_;
  Eigen::Index cap_;
  Eigen::Index size_ = 0;
  Eigen::Index head_ = 0;
  Mat states_, actions_, next_states_;
  Eigen::VectorXd rewards_, terminals_;
};

// Diagnostic source: re-emits each start transition unchanged, tagged
// synthetic. With an identity simulator and h = 1 the two are equivalent on
// deterministic environments; this source is the reference side of that
// sanity check. Draw consumption mirrors a single-preset SimulatorSource.
class DatasetResampleSource {
 public:
  template <typename Policy>
  GenResult generate(const data::Batch& starts, const Policy&, int /*h*/, Schedule, Rng& rng) {
    GenResult out;
    out.batch = starts;
    for (Eigen::Index i = 0; i < starts.size(); ++i) uniform_index(rng, 1);
    for (auto& s : out.batch.sources) s = data::Source::synthetic;
    return out;
  }
};

using Source = std::variant<SimulatorSource, LearnedModelSource, DatasetResampleSource>;

template <typename Policy>
GenResult generate(Source& src, const data::Batch& starts, const Policy& policy, int h,
                   Schedule schedule, Rng& rng) {
  return std::visit([&](auto& s) { return s.generate(starts, policy, h, schedule, rng); }, src);
}

}  // namespace cosbo::rollout
