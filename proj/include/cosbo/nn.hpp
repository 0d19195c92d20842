#pragma once

// Function approximators sized for the desk-scale tasks: plain MLPs with
// relu/tanh hidden layers, Adam, polyak-averaged target copies, twin critics
// evaluated through their minimum, and a tanh-squashed Gaussian policy head
// with the change-of-variables log-density.

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosbo/autodiff.hpp"
#include "cosbo/common.hpp"

namespace cosbo::nn {

using Mat = Eigen::MatrixXd;

enum class Activation { relu, tanh };

inline const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
inline Activation activation_from_name(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + std::string(s));
}

struct Mlp {
  std::vector<int> widths;  // input, hidden..., output
  Activation activation = Activation::relu;
  std::vector<Mat> weights;  // layer i: widths[i+1] x widths[i]
  std::vector<Mat> biases;   // layer i: 1 x widths[i+1]

  static Mlp make(std::vector<int> widths, Activation act, Rng& rng) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least two widths");
    Mlp m;
    m.widths = std::move(widths);
    m.activation = act;
    for (std::size_t i = 0; i + 1 < m.widths.size(); ++i) {
      const int fan_in = m.widths[i], fan_out = m.widths[i + 1];
      const double limit = act == Activation::relu
                               ? std::sqrt(6.0 / fan_in)
                               : std::sqrt(6.0 / (fan_in + fan_out));
      Mat w(fan_out, fan_in);
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = uniform(rng, -limit, limit);
      m.weights.push_back(std::move(w));
      m.biases.push_back(Mat::Zero(1, fan_out));
    }
    return m;
  }

  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  std::size_t layers() const { return weights.size(); }

  long param_count() const {
    long n = 0;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      n += static_cast<long>(widths[i]) * widths[i + 1] + widths[i + 1];
    return n;
  }

  Mat forward(const Mat& x) const {
    if (x.cols() != in_dim())
      throw std::invalid_argument("Mlp::forward: input width " + std::to_string(x.cols()) +
                                  " != " + std::to_string(in_dim()));
    Mat h = x;
    for (std::size_t i = 0; i < layers(); ++i) {
      Mat z = h * weights[i].transpose();
      z.rowwise() += biases[i].row(0);
      if (i + 1 < layers()) {
        if (activation == Activation::relu)
          h = z.cwiseMax(0.0);
        else
          h = z.array().tanh().matrix();
      } else {
        h = std::move(z);
      }
    }
    return h;
  }

  // Mirrors forward() on the tape; parameter leaf ids (W0,b0,W1,b1,...) are
  // appended to *params when it is given, otherwise parameters become
  // constants (useful when differentiating through a frozen critic).
  int build(ad::Tape& t, int x, std::vector<int>* params) const {
    int h = x;
    for (std::size_t i = 0; i < layers(); ++i) {
      const int w = params ? t.param(weights[i]) : t.constant(weights[i]);
      const int b = params ? t.param(biases[i]) : t.constant(biases[i]);
      if (params) {
        params->push_back(w);
        params->push_back(b);
      }
      h = t.linear(h, w, b);
      if (i + 1 < layers()) h = activation == Activation::relu ? t.relu(h) : t.tanh(h);
    }
    return h;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(param_count()));
    for (std::size_t i = 0; i < layers(); ++i) {
      for (Eigen::Index r = 0; r < weights[i].rows(); ++r)
        for (Eigen::Index c = 0; c < weights[i].cols(); ++c) out.push_back(weights[i](r, c));
      for (Eigen::Index c = 0; c < biases[i].cols(); ++c) out.push_back(biases[i](0, c));
    }
    return out;
  }

  void load_flat(std::span<const double> flat) {
    if (static_cast<long>(flat.size()) != param_count())
      throw std::invalid_argument("Mlp::load_flat: expected " + std::to_string(param_count()) +
                                  " parameters, got " + std::to_string(flat.size()));
    std::size_t k = 0;
    for (std::size_t i = 0; i < layers(); ++i) {
      for (Eigen::Index r = 0; r < weights[i].rows(); ++r)
        for (Eigen::Index c = 0; c < weights[i].cols(); ++c) weights[i](r, c) = flat[k++];
      for (Eigen::Index c = 0; c < biases[i].cols(); ++c) biases[i](0, c) = flat[k++];
    }
  }
};

inline void check_same_arch(const Mlp& a, const Mlp& b, const char* what) {
  if (a.widths != b.widths)
    throw std::invalid_argument(std::string(what) + ": layer shape mismatch");
}

// target <- (1 - tau) target + tau online, elementwise.
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must be in (0,1]");
  check_same_arch(target, online, "soft_update");
  for (std::size_t i = 0; i < target.layers(); ++i) {
    target.weights[i] = (1.0 - tau) * target.weights[i] + tau * online.weights[i];
    target.biases[i] = (1.0 - tau) * target.biases[i] + tau * online.biases[i];
  }
}

// Adam over one Mlp's parameters. Gradients arrive in build() order
// (W0, b0, W1, b1, ...). A zero gradient from a fresh state moves nothing.
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Mat> m, v;

  explicit Adam(double learning_rate = 3e-4) : lr(learning_rate) {}

  void step(Mlp& net, const std::vector<Mat>& grads) {
    const std::size_t n = 2 * net.layers();
    if (grads.size() != n) throw std::invalid_argument("Adam::step: gradient count mismatch");
    if (m.empty()) {
      for (const auto& g : grads) {
        m.push_back(Mat::Zero(g.rows(), g.cols()));
        v.push_back(Mat::Zero(g.rows(), g.cols()));
      }
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
      Mat& target = i % 2 == 0 ? net.weights[i / 2] : net.biases[i / 2];
      if (grads[i].rows() != target.rows() || grads[i].cols() != target.cols())
        throw std::invalid_argument("Adam::step: gradient shape mismatch");
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseProduct(grads[i]);
      const Mat m_hat = m[i] / c1;
      const Mat v_hat = v[i] / c2;
      target -= lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps).matrix());
    }
  }
};

// Collects gradients for one Mlp from its tape leaf ids.
inline std::vector<Mat> grads_of(const ad::Tape& t, const std::vector<int>& param_ids) {
  std::vector<Mat> out;
  out.reserve(param_ids.size());
  for (int id : param_ids) out.push_back(t.grad(id));
  return out;
}

// Twin critics over (state ++ action); backup targets use the pointwise
// minimum. The twin can be disabled for oracle comparisons.
struct QFunction {
  Mlp q1, q2;
  bool twin = true;

  static QFunction make(int obs_dim, int act_dim, int hidden, bool twin, Rng& rng) {
    QFunction q;
    q.twin = twin;
    q.q1 = Mlp::make({obs_dim + act_dim, hidden, hidden, 1}, Activation::relu, rng);
    q.q2 = Mlp::make({obs_dim + act_dim, hidden, hidden, 1}, Activation::relu, rng);
    return q;
  }

  Eigen::VectorXd value_min(const Mat& obs, const Mat& act) const {
    Mat input(obs.rows(), obs.cols() + act.cols());
    input << obs, act;
    Eigen::VectorXd v1 = q1.forward(input).col(0);
    if (!twin) return v1;
    Eigen::VectorXd v2 = q2.forward(input).col(0);
    return v1.cwiseMin(v2);
  }
};

// Squashed-Gaussian policy: one trunk emits (mean, log_std) per action
// dimension, log_std is clamped, samples are tanh-squashed and scaled to the
// action bound. Log-densities include the tanh change-of-variables term.
struct StochasticPolicy {
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  Mlp net;  // obs -> hidden -> 2 * act_dim
  int act_dim = 1;
  double action_bound = 1.0;

  static StochasticPolicy make(int obs_dim, int act_dim, int hidden, double bound, Rng& rng) {
    StochasticPolicy p;
    p.act_dim = act_dim;
    p.action_bound = bound;
    p.net = Mlp::make({obs_dim, hidden, hidden, 2 * act_dim}, Activation::relu, rng);
    return p;
  }

  int obs_dim() const { return net.in_dim(); }

  void heads(const Mat& obs, Mat* mean, Mat* log_std) const {
    const Mat out = net.forward(obs);
    *mean = out.leftCols(act_dim);
    *log_std = out.rightCols(act_dim).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  }

  struct Sampled {
    Mat actions;               // n x act_dim, strictly inside the bounds
    Eigen::VectorXd log_prob;  // n
  };

  Sampled sample(const Mat& obs, Rng& rng) const {
    Mat eps(obs.rows(), act_dim);
    for (Eigen::Index i = 0; i < eps.rows(); ++i)
      for (int d = 0; d < act_dim; ++d) eps(i, d) = standard_normal(rng);
    return sample_with_noise(obs, eps);
  }

  Sampled sample_with_noise(const Mat& obs, const Mat& eps) const {
    Mat mean, log_std;
    heads(obs, &mean, &log_std);
    const Mat std_dev = log_std.array().exp().matrix();
    const Mat u = mean + std_dev.cwiseProduct(eps);
    const Mat squashed = u.array().tanh().matrix();
    Sampled s;
    s.actions = action_bound * squashed;
    // log N(u; mean, std) - sum_d log(bound (1 - tanh(u_d)^2))
    const Mat log_jac = squash_correction(u);
    Mat per_dim = -log_std - 0.5 * eps.cwiseProduct(eps) -
                  Mat::Constant(eps.rows(), act_dim,
                                0.5 * std::log(2.0 * M_PI) + std::log(action_bound)) -
                  log_jac;
    s.log_prob = per_dim.rowwise().sum();
    return s;
  }

  // Density of a given (already squashed and scaled) action.
  Eigen::VectorXd log_prob(const Mat& obs, const Mat& actions) const {
    Mat mean, log_std;
    heads(obs, &mean, &log_std);
    const Mat std_dev = log_std.array().exp().matrix();
    const auto unit = (actions / action_bound).array().min(1.0 - 1e-12).max(-1.0 + 1e-12);
    const Mat u = unit.atanh().matrix();
    const Mat eps = (u - mean).cwiseQuotient(std_dev);
    const Mat log_jac = squash_correction(u);
    Mat per_dim = -log_std - 0.5 * eps.cwiseProduct(eps) -
                  Mat::Constant(u.rows(), act_dim,
                                0.5 * std::log(2.0 * M_PI) + std::log(action_bound)) -
                  log_jac;
    return per_dim.rowwise().sum();
  }

  Mat mean_action(const Mat& obs) const {
    Mat mean, log_std;
    heads(obs, &mean, &log_std);
    return action_bound * mean.array().tanh().matrix();
  }

  struct TapeSample {
    int actions = -1;
    int log_prob = -1;
    std::vector<int> params;
  };

  // Reparameterized sample on the tape: gradients flow into the trunk through
  // both the action and its log-density.
  TapeSample build_sample(ad::Tape& t, int obs, const Mat& eps) const {
    TapeSample out;
    const int trunk = net.build(t, obs, &out.params);
    const int mean = t.slice_cols(trunk, 0, act_dim);
    const int log_std = t.clamp(t.slice_cols(trunk, act_dim, act_dim), kLogStdMin, kLogStdMax);
    const int std_dev = t.exp(log_std);
    const int eps_id = t.constant(eps);
    const int u = t.add(mean, t.mul(std_dev, eps_id));
    out.actions = t.scale(t.tanh(u), action_bound);
    // 2 (log 2 - u - softplus(-2u)) == log(1 - tanh(u)^2)
    const int corr =
        t.scale(t.sub(t.add_scalar(t.scale(u, -1.0), std::log(2.0)), t.softplus(t.scale(u, -2.0))),
                2.0);
    Mat eps_term = (-0.5 * eps.array().square() - 0.5 * std::log(2.0 * M_PI) -
                    std::log(action_bound))
                       .matrix();
    const int per_dim = t.sub(t.add(t.scale(log_std, -1.0), t.constant(eps_term)), corr);
    out.log_prob = t.row_sum(per_dim);
    return out;
  }

 private:
  static Mat squash_correction(const Mat& u) {
    // 2 (log 2 - u - softplus(-2u)), with softplus(z) = max(z,0) + log1p(exp(-|z|))
    const auto a = u.array();
    const auto z = -2.0 * a;
    const auto sp = z.max(0.0) + (-z.abs()).exp().log1p();
    return (2.0 * (std::log(2.0) - a - sp)).matrix();
  }
};

// --- checkpoint format -------------------------------------------------------
//
//   cosbo-ckpt v1 policy <env_kind> <activation> <action_bound>
//   widths <w0> <w1> ...
//   <flat parameters, one per line, 17 significant digits>

inline void save_policy(const StochasticPolicy& p, const std::string& env_kind,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "cosbo-ckpt v1 policy " << env_kind << ' ' << activation_name(p.net.activation) << ' '
      << format_real(p.action_bound) << '\n';
  out << "widths";
  for (int w : p.net.widths) out << ' ' << w;
  out << '\n';
  for (double x : p.net.flatten()) out << format_real(x) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

struct LoadedPolicy {
  StochasticPolicy policy;
  std::string env_kind;
};

inline LoadedPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version, kind, env_kind, act_name, bound_tok;
  if (!(hs >> magic >> version >> kind >> env_kind >> act_name >> bound_tok) ||
      magic != "cosbo-ckpt" || version != "v1" || kind != "policy")
    throw std::runtime_error(path + ": malformed checkpoint header: " + header);
  bool ok = false;
  const double bound = parse_real(bound_tok, &ok);
  if (!ok || !(bound > 0.0)) throw std::runtime_error(path + ": bad action bound");

  std::string widths_line;
  std::getline(in, widths_line);
  std::istringstream ws(widths_line);
  std::string tag;
  ws >> tag;
  if (tag != "widths") throw std::runtime_error(path + ": missing widths line");
  std::vector<int> widths;
  int w;
  while (ws >> w) widths.push_back(w);
  if (widths.size() < 2 || widths.back() % 2 != 0)
    throw std::runtime_error(path + ": bad widths line");

  LoadedPolicy lp;
  lp.env_kind = env_kind;
  lp.policy.act_dim = widths.back() / 2;
  lp.policy.action_bound = bound;
  Rng dummy(0);
  lp.policy.net = Mlp::make(widths, activation_from_name(act_name), dummy);
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(lp.policy.net.param_count()));
  std::string line;
  long line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    bool pok = false;
    const double v = parse_real(line, &pok);
    if (!pok || !std::isfinite(v))
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": bad parameter");
    flat.push_back(v);
  }
  lp.policy.net.load_flat(flat);
  return lp;
}

// --- simple behaviors ---------------------------------------------------------

// Uniform over the action box; the usual random baseline and chainworld
// behavior policy.
struct UniformPolicy {
  int act_dim = 1;
  double bound = 1.0;
  std::vector<double> operator()(std::span<const double>, Rng& rng) const {
    std::vector<double> a(static_cast<std::size_t>(act_dim));
    for (auto& x : a) x = uniform(rng, -bound, bound);
    return a;
  }
};

// Mean action plus clipped Gaussian exploration noise; used to produce
// medium-quality datasets from a checkpointed policy.
struct NoisyMeanBehavior {
  const StochasticPolicy* policy = nullptr;
  double sigma = 0.0;
  std::vector<double> operator()(std::span<const double> obs, Rng& rng) const {
    Mat o(1, static_cast<Eigen::Index>(obs.size()));
    for (std::size_t j = 0; j < obs.size(); ++j) o(0, static_cast<Eigen::Index>(j)) = obs[j];
    const Mat a = policy->mean_action(o);
    std::vector<double> out(static_cast<std::size_t>(policy->act_dim));
    for (int d = 0; d < policy->act_dim; ++d)
      out[static_cast<std::size_t>(d)] =
          clip(a(0, d) + sigma * standard_normal(rng), -policy->action_bound,
               policy->action_bound);
    return out;
  }
};

// Samples from the stochastic policy itself.
struct PolicyBehavior {
  const StochasticPolicy* policy = nullptr;
  std::vector<double> operator()(std::span<const double> obs, Rng& rng) const {
    Mat o(1, static_cast<Eigen::Index>(obs.size()));
    for (std::size_t j = 0; j < obs.size(); ++j) o(0, static_cast<Eigen::Index>(j)) = obs[j];
    const auto s = policy->sample(o, rng);
    return std::vector<double>(s.actions.row(0).begin(), s.actions.row(0).end());
  }
};

}  // namespace cosbo::nn
