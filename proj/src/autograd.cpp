#include "dto/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "dto/kernels.hpp"

namespace dto::ad {

using kernels::Trans;

void Node::accumulate(const Matrix& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  if (!grad.same_shape(g)) {
    throw std::logic_error("gradient shape mismatch: " + grad.shape_string() + " vs " +
                           g.shape_string());
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  if (node_->value.size() != 1) {
    throw std::logic_error("item() on non-scalar of shape " + node_->value.shape_string());
  }
  return node_->value[0];
}

Var constant(Matrix m) { return Var(std::move(m), false); }
Var parameter(Matrix m) { return Var(std::move(m), true); }

namespace {

Var make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(bw);
  }
  return Var::from_node(std::move(n));
}

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.value().shape_string() + " vs " + b.value().shape_string());
  }
}

Matrix map(const Matrix& x, auto f) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Matrix scaled(const Matrix& a, double s) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Matrix cols_slice(const Matrix& m, std::size_t c0, std::size_t n) {
  Matrix out(m.rows(), n);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = m(r, c0 + c);
  return out;
}

void cols_assign(Matrix& m, std::size_t c0, const Matrix& part) {
  for (std::size_t r = 0; r < part.rows(); ++r)
    for (std::size_t c = 0; c < part.cols(); ++c) m(r, c0 + c) = part(r, c);
}

// Softmax backward on rows: dx = y * (dy - rowsum(dy * y)).
Matrix softmax_backward(const Matrix& y, const Matrix& dy) {
  Matrix dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) dot += dy(r, c) * y(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (dy(r, c) - dot);
  }
  return dx;
}

struct AttentionCache {
  std::vector<Matrix> probs;  // one Tq x Tk matrix per head
};

Matrix mha_forward(const Matrix& q, const Matrix& k, const Matrix& v, int heads, bool causal,
                   AttentionCache& cache) {
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw std::invalid_argument("attention: incompatible q/k/v shapes");
  }
  if (heads <= 0 || d % static_cast<std::size_t>(heads) != 0) {
    throw std::invalid_argument("attention: width not divisible by heads");
  }
  const std::size_t dh = d / heads;
  const std::size_t tq = q.rows(), tk = k.rows();
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const long offset = static_cast<long>(tk) - static_cast<long>(tq);
  Matrix out(tq, d);
  cache.probs.assign(heads, Matrix());
  for (int h = 0; h < heads; ++h) {
    const Matrix qh = cols_slice(q, h * dh, dh);
    const Matrix kh = cols_slice(k, h * dh, dh);
    const Matrix vh = cols_slice(v, h * dh, dh);
    Matrix s = kernels::matmul_nt(qh, kh);
    for (std::size_t i = 0; i < tq; ++i) {
      for (std::size_t j = 0; j < tk; ++j) {
        s(i, j) *= sc;
        if (causal && static_cast<long>(j) > static_cast<long>(i) + offset) {
          s(i, j) = -std::numeric_limits<double>::infinity();
        }
      }
    }
    Matrix a;
    kernels::softmax_rows(s, a);
    cols_assign(out, h * dh, kernels::matmul(a, vh));
    cache.probs[h] = std::move(a);
  }
  return out;
}

void mha_backward(const Matrix& q, const Matrix& k, const Matrix& v, int heads,
                  const AttentionCache& cache, const Matrix& dout, Matrix& dq, Matrix& dk,
                  Matrix& dv) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  dq = Matrix(q.rows(), d);
  dk = Matrix(k.rows(), d);
  dv = Matrix(v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Matrix& a = cache.probs[h];
    const Matrix qh = cols_slice(q, h * dh, dh);
    const Matrix kh = cols_slice(k, h * dh, dh);
    const Matrix vh = cols_slice(v, h * dh, dh);
    const Matrix doh = cols_slice(dout, h * dh, dh);
    cols_assign(dv, h * dh, kernels::matmul_tn(a, doh));
    const Matrix da = kernels::matmul_nt(doh, vh);
    Matrix ds = softmax_backward(a, da);
    for (std::size_t i = 0; i < ds.size(); ++i) ds[i] *= sc;
    cols_assign(dq, h * dh, kernels::matmul(ds, kh));
    cols_assign(dk, h * dh, kernels::matmul_tn(ds, qh));
  }
}

}  // namespace

void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw std::logic_error("backward: root must be a scalar");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::scalar(1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) {
      n->backward(*n);
      // Interior gradients are not needed once propagated.
      n->grad = Matrix();
    }
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i)
      if (wants(self, i)) self.parents[i]->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate(scaled(self.grad, -1.0));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make(hadamard(a.value(), b.value()), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(hadamard(self.grad, self.parents[1]->value));
    if (wants(self, 1)) self.parents[1]->accumulate(hadamard(self.grad, self.parents[0]->value));
  });
}

Var scale(const Var& a, double s) {
  return make(scaled(a.value(), s), {a},
              [s](Node& self) { self.parents[0]->accumulate(scaled(self.grad, s)); });
}

Var add_scalar(const Var& a, double s) {
  return make(map(a.value(), [s](double x) { return x + s; }), {a},
              [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: bias must be 1 x " + std::to_string(a.cols()));
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()(0, c);
  return make(std::move(out), {a, row}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) {
      Matrix g(1, self.grad.cols());
      for (std::size_t r = 0; r < self.grad.rows(); ++r)
        for (std::size_t c = 0; c < self.grad.cols(); ++c) g(0, c) += self.grad(r, c);
      self.parents[1]->accumulate(g);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  return make(kernels::matmul(a.value(), b.value()), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (wants(self, 0)) self.parents[0]->accumulate(kernels::matmul_nt(self.grad, bv));
    if (wants(self, 1)) self.parents[1]->accumulate(kernels::matmul_tn(av, self.grad));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  return make(kernels::matmul_nt(a.value(), b.value()), {a, b}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    if (wants(self, 0)) self.parents[0]->accumulate(kernels::matmul(self.grad, bv));
    if (wants(self, 1)) self.parents[1]->accumulate(kernels::matmul_tn(self.grad, av));
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return make(map(a.value(),
                  [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); }),
              {a}, [](Node& self) {
                const Matrix& x = self.parents[0]->value;
                Matrix g(x.rows(), x.cols());
                for (std::size_t i = 0; i < x.size(); ++i) {
                  const double u = c * (x[i] + k * x[i] * x[i] * x[i]);
                  const double t = std::tanh(u);
                  const double du = c * (1.0 + 3.0 * k * x[i] * x[i]);
                  g[i] = self.grad[i] * (0.5 * (1.0 + t) + 0.5 * x[i] * (1.0 - t * t) * du);
                }
                self.parents[0]->accumulate(g);
              });
}

Var exp(const Var& a) {
  return make(map(a.value(), [](double x) { return std::exp(x); }), {a}, [](Node& self) {
    self.parents[0]->accumulate(hadamard(self.grad, self.value));
  });
}

Var log(const Var& a) {
  return make(map(a.value(), [](double x) { return std::log(x); }), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = self.grad[i] / x[i];
    self.parents[0]->accumulate(g);
  });
}

namespace {
double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
double log_sigmoid_value(double x) {
  return x < 0 ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}
}  // namespace

Var sigmoid(const Var& a) {
  return make(map(a.value(), sigmoid_value), {a}, [](Node& self) {
    Matrix g(self.value.rows(), self.value.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = self.grad[i] * self.value[i] * (1.0 - self.value[i]);
    self.parents[0]->accumulate(g);
  });
}

Var log_sigmoid(const Var& a) {
  return make(map(a.value(), log_sigmoid_value), {a}, [](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = self.grad[i] * sigmoid_value(-x[i]);
    self.parents[0]->accumulate(g);
  });
}

Var clamp_min(const Var& a, double lo) {
  return make(map(a.value(), [lo](double x) { return x > lo ? x : lo; }), {a},
              [lo](Node& self) {
                const Matrix& x = self.parents[0]->value;
                Matrix g(x.rows(), x.cols());
                for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > lo ? self.grad[i] : 0.0;
                self.parents[0]->accumulate(g);
              });
}

Var softmax_rows(const Var& a) {
  Matrix out;
  kernels::softmax_rows(a.value(), out);
  return make(std::move(out), {a}, [](Node& self) {
    self.parents[0]->accumulate(softmax_backward(self.value, self.grad));
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix out;
  kernels::log_softmax_rows(a.value(), out);
  return make(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) s += self.grad(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c)
        g(r, c) = self.grad(r, c) - std::exp(y(r, c)) * s;
    }
    self.parents[0]->accumulate(g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw std::invalid_argument("layer_norm: gamma/beta must be 1 x width");
  }
  auto xhat = std::make_shared<Matrix>(xv.rows(), n);
  auto inv_std = std::make_shared<std::vector<double>>(xv.rows());
  Matrix out(xv.rows(), n);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += xv(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      (*xhat)(r, c) = (xv(r, c) - mu) * is;
      out(r, c) = (*xhat)(r, c) * gamma.value()(0, c) + beta.value()(0, c);
    }
  }
  return make(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& self) {
    const Matrix& dy = self.grad;
    const Matrix& gv = self.parents[1]->value;
    const std::size_t rows = dy.rows(), n = dy.cols();
    if (wants(self, 0)) {
      Matrix dx(rows, n);
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          const double dxh = dy(r, c) * gv(0, c);
          m1 += dxh;
          m2 += dxh * (*xhat)(r, c);
        }
        m1 /= static_cast<double>(n);
        m2 /= static_cast<double>(n);
        for (std::size_t c = 0; c < n; ++c) {
          const double dxh = dy(r, c) * gv(0, c);
          dx(r, c) = (*inv_std)[r] * (dxh - m1 - (*xhat)(r, c) * m2);
        }
      }
      self.parents[0]->accumulate(dx);
    }
    if (wants(self, 1) || wants(self, 2)) {
      Matrix dg(1, n), db(1, n);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) {
          dg(0, c) += dy(r, c) * (*xhat)(r, c);
          db(0, c) += dy(r, c);
        }
      if (wants(self, 1)) self.parents[1]->accumulate(dg);
      if (wants(self, 2)) self.parents[2]->accumulate(db);
    }
  });
}

Var embedding(const Var& table, const std::vector<int>& ids) {
  const Matrix& t = table.value();
  Matrix out(ids.size(), t.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= t.rows()) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[r]) + " out of range");
    }
    for (std::size_t c = 0; c < t.cols(); ++c) out(r, c) = t(ids[r], c);
  }
  return make(std::move(out), {table}, [ids](Node& self) {
    const Matrix& t = self.parents[0]->value;
    Matrix g(t.rows(), t.cols());
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < t.cols(); ++c) g(ids[r], c) += self.grad(r, c);
    self.parents[0]->accumulate(g);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t r0 = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + r0 * cols);
    r0 += p.rows();
  }
  return make(std::move(out), parts, [](Node& self) {
    std::size_t r0 = 0;
    const std::size_t cols = self.grad.cols();
    for (auto& p : self.parents) {
      const std::size_t pr = p->value.rows();
      if (p->requires_grad) {
        Matrix g(pr, cols);
        std::copy(self.grad.data() + r0 * cols, self.grad.data() + (r0 + pr) * cols, g.data());
        p->accumulate(g);
      }
      r0 += pr;
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) throw std::out_of_range("slice_rows: out of range");
  const std::size_t cols = a.cols();
  Matrix out(count, cols);
  std::copy(a.value().data() + begin * cols, a.value().data() + (begin + count) * cols,
            out.data());
  return make(std::move(out), {a}, [begin, count](Node& self) {
    const Matrix& av = self.parents[0]->value;
    Matrix g(av.rows(), av.cols());
    std::copy(self.grad.data(), self.grad.data() + count * av.cols(),
              g.data() + begin * av.cols());
    self.parents[0]->accumulate(g);
  });
}

Var row(const Var& a, std::size_t r) { return slice_rows(a, r, 1); }

Var pick(const Var& a, const std::vector<int>& cols) {
  if (cols.size() != a.rows()) throw std::invalid_argument("pick: one column per row required");
  Matrix out(cols.size(), 1);
  for (std::size_t r = 0; r < cols.size(); ++r) {
    if (cols[r] < 0 || static_cast<std::size_t>(cols[r]) >= a.cols()) {
      throw std::out_of_range("pick: column out of range");
    }
    out(r, 0) = a.value()(r, cols[r]);
  }
  return make(std::move(out), {a}, [cols](Node& self) {
    const Matrix& av = self.parents[0]->value;
    Matrix g(av.rows(), av.cols());
    for (std::size_t r = 0; r < cols.size(); ++r) g(r, cols[r]) = self.grad(r, 0);
    self.parents[0]->accumulate(g);
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make(Matrix::scalar(s), {a}, [](Node& self) {
    const Matrix& av = self.parents[0]->value;
    self.parents[0]->accumulate(Matrix(av.rows(), av.cols(), self.grad[0]));
  });
}

Var mean(const Var& a) {
  if (a.value().empty()) throw std::invalid_argument("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_of(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("mean_of: empty input");
  return mean(concat_rows(scalars));
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads, bool causal) {
  auto cache = std::make_shared<AttentionCache>();
  Matrix out = mha_forward(q.value(), k.value(), v.value(), heads, causal, *cache);
  return make(std::move(out), {q, k, v}, [cache, heads](Node& self) {
    Matrix dq, dk, dv;
    mha_backward(self.parents[0]->value, self.parents[1]->value, self.parents[2]->value, heads,
                 *cache, self.grad, dq, dk, dv);
    if (wants(self, 0)) self.parents[0]->accumulate(dq);
    if (wants(self, 1)) self.parents[1]->accumulate(dk);
    if (wants(self, 2)) self.parents[2]->accumulate(dv);
  });
}

Var attention_over_rows(const Var& q, const std::vector<Var>& keys,
                        const std::vector<Var>& values, int heads) {
  if (keys.empty() || keys.size() != values.size()) {
    throw std::invalid_argument("attention_over_rows: need matching non-empty key/value lists");
  }
  const std::size_t tk = keys.size(), d = q.cols();
  auto gather = [&](const std::vector<Var>& rows) {
    Matrix m(tk, d);
    for (std::size_t i = 0; i < tk; ++i) {
      if (rows[i].rows() != 1 || rows[i].cols() != d) {
        throw std::invalid_argument("attention_over_rows: rows must be 1 x width");
      }
      std::copy(rows[i].value().data(), rows[i].value().data() + d, m.data() + i * d);
    }
    return m;
  };
  auto km = std::make_shared<Matrix>(gather(keys));
  auto vm = std::make_shared<Matrix>(gather(values));
  auto cache = std::make_shared<AttentionCache>();
  Matrix out = mha_forward(q.value(), *km, *vm, heads, false, *cache);

  std::vector<Var> parents;
  parents.reserve(1 + 2 * tk);
  parents.push_back(q);
  parents.insert(parents.end(), keys.begin(), keys.end());
  parents.insert(parents.end(), values.begin(), values.end());
  return make(std::move(out), parents, [cache, km, vm, heads, tk, d](Node& self) {
    Matrix dq, dk, dv;
    mha_backward(self.parents[0]->value, *km, *vm, heads, *cache, self.grad, dq, dk, dv);
    if (wants(self, 0)) self.parents[0]->accumulate(dq);
    for (std::size_t i = 0; i < tk; ++i) {
      if (wants(self, 1 + i)) {
        self.parents[1 + i]->accumulate(Matrix(1, d, std::vector<double>(dk.data() + i * d, dk.data() + (i + 1) * d)));
      }
      if (wants(self, 1 + tk + i)) {
        self.parents[1 + tk + i]->accumulate(
            Matrix(1, d, std::vector<double>(dv.data() + i * d, dv.data() + (i + 1) * d)));
      }
    }
  });
}

Var detach(const Var& a) { return constant(a.value()); }

Var straight_through(const Var& soft, const Matrix& hard) {
  if (!soft.value().same_shape(hard)) {
    throw std::invalid_argument("straight_through: shape mismatch");
  }
  return make(hard, {soft}, [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

}  // namespace dto::ad
