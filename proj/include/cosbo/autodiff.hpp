#pragma once

// Reverse-mode differentiation over a fixed set of batched primitives:
// affine layers, relu/tanh/exp/log/square/softplus, clamp, elementwise
// add/sub/mul, min of two values, sum/mean/row-sum reductions and column
// concat/slice. The set is closed on purpose: it is exactly what the
// conservative critic and the squashed-Gaussian actor losses consume, and
// every primitive is finite-difference checked in the test suite.
//
// Usage: build the scalar loss on a Tape, call backward(loss), read gradients
// off the parameter leaves. The tape is rebuilt per loss evaluation.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cosbo::ad {

using Mat = Eigen::MatrixXd;

enum class Op {
  leaf,
  linear,  // parents: x (n x in), W (out x in), b (1 x out)
  relu,
  tanh_fn,
  exp_fn,
  log_fn,
  square,
  softplus,
  clamp,       // c0 = lo, c1 = hi
  scale,       // c0 = factor
  add_scalar,  // c0 = shift
  add,
  sub,
  mul,
  min2,
  sum,
  mean,
  row_sum,
  concat_cols,
  slice_cols,  // c0 = start, c1 = count
};

class Tape {
 public:
  struct Node {
    Mat val;
    Mat grad;
    Op op = Op::leaf;
    std::array<int, 3> parents{-1, -1, -1};
    double c0 = 0.0, c1 = 0.0;
    bool needs_grad = false;
  };

  void reset() { nodes_.clear(); }
  int size() const { return static_cast<int>(nodes_.size()); }

  int constant(Mat v) { return push(std::move(v), Op::leaf, {-1, -1, -1}, 0, 0, false); }
  int param(Mat v) { return push(std::move(v), Op::leaf, {-1, -1, -1}, 0, 0, true); }

  int linear(int x, int w, int b) {
    const Mat& X = val(x);
    const Mat& W = val(w);
    const Mat& B = val(b);
    if (X.cols() != W.cols())
      throw std::invalid_argument("linear: input width " + std::to_string(X.cols()) +
                                  " != layer width " + std::to_string(W.cols()));
    if (B.rows() != 1 || B.cols() != W.rows()) throw std::invalid_argument("linear: bad bias shape");
    Mat y = X * W.transpose();
    y.rowwise() += B.row(0);
    return push(std::move(y), Op::linear, {x, w, b});
  }

  int relu(int x) {
    return push(val(x).cwiseMax(0.0), Op::relu, {x, -1, -1});
  }
  int tanh(int x) {
    return push(val(x).array().tanh().matrix(), Op::tanh_fn, {x, -1, -1});
  }
  int exp(int x) {
    return push(val(x).array().exp().matrix(), Op::exp_fn, {x, -1, -1});
  }
  int log(int x) {
    return push(val(x).array().log().matrix(), Op::log_fn, {x, -1, -1});
  }
  int square(int x) {
    return push(val(x).cwiseProduct(val(x)), Op::square, {x, -1, -1});
  }
  int softplus(int x) {
    const auto& a = val(x).array();
    Mat y = (a.max(0.0) + (-a.abs()).exp().log1p()).matrix();
    return push(std::move(y), Op::softplus, {x, -1, -1});
  }
  int clamp(int x, double lo, double hi) {
    return push(val(x).cwiseMax(lo).cwiseMin(hi), Op::clamp, {x, -1, -1}, lo, hi);
  }
  int scale(int x, double c) {
    return push(c * val(x), Op::scale, {x, -1, -1}, c);
  }
  int add_scalar(int x, double c) {
    return push((val(x).array() + c).matrix(), Op::add_scalar, {x, -1, -1}, c);
  }
  int add(int a, int b) {
    check_same_shape(a, b, "add");
    return push(val(a) + val(b), Op::add, {a, b, -1});
  }
  int sub(int a, int b) {
    check_same_shape(a, b, "sub");
    return push(val(a) - val(b), Op::sub, {a, b, -1});
  }
  int mul(int a, int b) {
    check_same_shape(a, b, "mul");
    return push(val(a).cwiseProduct(val(b)), Op::mul, {a, b, -1});
  }
  int min2(int a, int b) {
    check_same_shape(a, b, "min2");
    return push(val(a).cwiseMin(val(b)), Op::min2, {a, b, -1});
  }
  int sum(int x) {
    Mat y(1, 1);
    y(0, 0) = val(x).sum();
    return push(std::move(y), Op::sum, {x, -1, -1});
  }
  int mean(int x) {
    Mat y(1, 1);
    y(0, 0) = val(x).mean();
    return push(std::move(y), Op::mean, {x, -1, -1});
  }
  int row_sum(int x) {
    Mat y = val(x).rowwise().sum();
    return push(std::move(y), Op::row_sum, {x, -1, -1});
  }
  int concat_cols(int a, int b) {
    const Mat &A = val(a), &B = val(b);
    if (A.rows() != B.rows()) throw std::invalid_argument("concat_cols: row mismatch");
    Mat y(A.rows(), A.cols() + B.cols());
    y << A, B;
    return push(std::move(y), Op::concat_cols, {a, b, -1});
  }
  int slice_cols(int x, int start, int count) {
    const Mat& X = val(x);
    if (start < 0 || count < 1 || start + count > X.cols())
      throw std::invalid_argument("slice_cols: bad range");
    return push(X.middleCols(start, count), Op::slice_cols, {x, -1, -1},
                static_cast<double>(start), static_cast<double>(count));
  }

  const Mat& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
  const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  // Exact reverse sweep from a scalar node.
  void backward(int loss) {
    Node& top = nodes_[static_cast<std::size_t>(loss)];
    if (top.val.rows() != 1 || top.val.cols() != 1)
      throw std::invalid_argument("backward: loss must be scalar (1x1)");
    for (auto& n : nodes_)
      if (n.needs_grad) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    if (!top.needs_grad) return;  // loss does not depend on any parameter
    top.grad(0, 0) = 1.0;
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || n.op == Op::leaf) continue;
      propagate(n);
    }
  }

 private:
  std::vector<Node> nodes_;

  int push(Mat v, Op op, std::array<int, 3> parents, double c0 = 0, double c1 = 0,
           bool needs_grad_leaf = false) {
    Node n;
    n.val = std::move(v);
    n.op = op;
    n.parents = parents;
    n.c0 = c0;
    n.c1 = c1;
    n.needs_grad = needs_grad_leaf;
    for (int p : parents)
      if (p >= 0 && nodes_[static_cast<std::size_t>(p)].needs_grad) n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void check_same_shape(int a, int b, const char* what) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  void propagate(Node& n) {
    const Mat& g = n.grad;
    auto acc = [&](int pid) -> Mat* {
      if (pid < 0) return nullptr;
      Node& p = node(pid);
      return p.needs_grad ? &p.grad : nullptr;
    };
    Mat* g0 = acc(n.parents[0]);
    Mat* g1 = acc(n.parents[1]);
    Mat* g2 = acc(n.parents[2]);
    const Mat* v0 = n.parents[0] >= 0 ? &val(n.parents[0]) : nullptr;
    const Mat* v1 = n.parents[1] >= 0 ? &val(n.parents[1]) : nullptr;

    switch (n.op) {
      case Op::leaf:
        break;
      case Op::linear: {
        const Mat& X = *v0;
        const Mat& W = *v1;
        if (g0) *g0 += g * W;
        if (g1) *g1 += g.transpose() * X;
        if (g2) g2->row(0) += g.colwise().sum();
        break;
      }
      case Op::relu:
        if (g0) *g0 += (v0->array() > 0.0).cast<double>().matrix().cwiseProduct(g);
        break;
      case Op::tanh_fn:
        if (g0) *g0 += (1.0 - n.val.array().square()).matrix().cwiseProduct(g);
        break;
      case Op::exp_fn:
        if (g0) *g0 += n.val.cwiseProduct(g);
        break;
      case Op::log_fn:
        if (g0) *g0 += g.cwiseQuotient(*v0);
        break;
      case Op::square:
        if (g0) *g0 += 2.0 * v0->cwiseProduct(g);
        break;
      case Op::softplus:
        if (g0) {
          const auto& x = v0->array();
          Mat sig = (x >= 0.0)
                        .select(1.0 / (1.0 + (-x).exp()), x.exp() / (1.0 + x.exp()))
                        .matrix();
          *g0 += sig.cwiseProduct(g);
        }
        break;
      case Op::clamp:
        if (g0) {
          const auto& x = v0->array();
          Mat inside = ((x > n.c0) && (x < n.c1)).cast<double>().matrix();
          *g0 += inside.cwiseProduct(g);
        }
        break;
      case Op::scale:
        if (g0) *g0 += n.c0 * g;
        break;
      case Op::add_scalar:
        if (g0) *g0 += g;
        break;
      case Op::add:
        if (g0) *g0 += g;
        if (g1) *g1 += g;
        break;
      case Op::sub:
        if (g0) *g0 += g;
        if (g1) *g1 -= g;
        break;
      case Op::mul:
        if (g0) *g0 += v1->cwiseProduct(g);
        if (g1) *g1 += v0->cwiseProduct(g);
        break;
      case Op::min2:
        if (g0) *g0 += (v0->array() <= v1->array()).cast<double>().matrix().cwiseProduct(g);
        if (g1) *g1 += (v0->array() > v1->array()).cast<double>().matrix().cwiseProduct(g);
        break;
      case Op::sum:
        if (g0) g0->array() += g(0, 0);
        break;
      case Op::mean:
        if (g0) g0->array() += g(0, 0) / static_cast<double>(v0->size());
        break;
      case Op::row_sum:
        if (g0) *g0 += g.replicate(1, v0->cols());
        break;
      case Op::concat_cols:
        if (g0) *g0 += g.leftCols(v0->cols());
        if (g1) *g1 += g.rightCols(v1->cols());
        break;
      case Op::slice_cols:
        if (g0)
          g0->middleCols(static_cast<Eigen::Index>(n.c0), static_cast<Eigen::Index>(n.c1)) += g;
        break;
    }
  }
};

}  // namespace cosbo::ad
