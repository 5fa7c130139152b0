#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Var is a handle to a node in a dynamically built graph. Operations create
// new nodes that remember their parents and a closure that pushes the node's
// gradient back into them. `backward(root)` seeds d(root)/d(root) = 1 and
// walks the graph in reverse topological order. Nodes that do not require
// gradients (constants, frozen parameters) are skipped entirely, which is how
// a frozen model lets gradients flow to its inputs without touching itself.

#include <functional>
#include <memory>
#include <vector>

#include "dto/tensor.hpp"

namespace dto::ad {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Adds g into this node's gradient, allocating it on first use.
  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;

  void zero_grad() { node_->grad = Matrix(); }
  const std::shared_ptr<Node>& node() const { return node_; }

  static Var from_node(std::shared_ptr<Node> n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix m);
Var parameter(Matrix m);

// Backpropagates from a 1x1 root.
void backward(const Var& root);

// Elementwise and broadcasting arithmetic.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& a, const Var& row);
Var neg(const Var& a);

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);
Var linear(const Var& x, const Var& weight, const Var& bias);

// Nonlinearities.
Var gelu(const Var& a);  // tanh approximation
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var log_sigmoid(const Var& a);
Var clamp_min(const Var& a, double lo);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Structural.
Var embedding(const Var& table, const std::vector<int>& ids);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var row(const Var& a, std::size_t r);
Var pick(const Var& a, const std::vector<int>& cols);  // out[t] = a(t, cols[t]), T x 1

// Reductions to 1x1.
Var sum(const Var& a);
Var mean(const Var& a);
Var mean_of(const std::vector<Var>& scalars);

// Multi-head scaled dot-product attention. q: Tq x D, k/v: Tk x D. With
// `causal`, query i sees keys j <= i + (Tk - Tq).
Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads, bool causal);
// Single query row against a list of key/value rows (incremental decoding).
Var attention_over_rows(const Var& q, const std::vector<Var>& keys,
                        const std::vector<Var>& values, int heads);

// Gradient plumbing.
Var detach(const Var& a);
// Value of `hard`, gradient routed to `soft` (straight-through estimator).
Var straight_through(const Var& soft, const Matrix& hard);

}  // namespace dto::ad
