#include "osad/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace osad {
namespace ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

namespace {

thread_local bool g_grad_enabled = true;

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void acc(Node& parent, const Tensor& delta) {
  Tensor& g = parent.g();
  assert(g.numel() == delta.numel());
  for (std::int64_t i = 0; i < delta.numel(); ++i) g[i] += delta[i];
}

bool wants(const Node& self, size_t i) {
  return self.parents[i] && self.parents[i]->requires_grad;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

namespace detail {
NodePtr make_node(Tensor value, std::vector<NodePtr> parents, const char* op,
                  std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool req = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p && p->requires_grad) req = true;
    }
  }
  n->requires_grad = req;
  if (req) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return n;
}
}  // namespace detail

namespace {
using detail::make_node;
}  // namespace

Var::Var(Tensor t, bool requires_grad) {
  n_ = std::make_shared<Node>();
  n_->value = std::move(t);
  n_->requires_grad = requires_grad;
}

void backward(const Var& root) {
  check(root.val().numel() == 1, "backward: implicit seed requires a scalar output");
  backward(root, Tensor({1}, 1.0));
}

void backward(const Var& root, const Tensor& seed) {
  check(root.defined(), "backward: undefined variable");
  check(seed.numel() == root.val().numel(), "backward: seed shape mismatch");
  // Iterative post-order over the tape.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Tensor& g = root.node()->g();
  for (std::int64_t i = 0; i < seed.numel(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad_alloc) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

Var add(const Var& a, const Var& b) {
  check(a.val().same_shape(b.val()), "add: shape mismatch");
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
  return Var::wrap(make_node(std::move(out), {a.node(), b.node()}, "add", [](Node& self) {
    if (wants(self, 0)) acc(*self.parents[0], self.grad);
    if (wants(self, 1)) acc(*self.parents[1], self.grad);
  }));
}

Var sub(const Var& a, const Var& b) {
  check(a.val().same_shape(b.val()), "sub: shape mismatch");
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b.val()[i];
  return Var::wrap(make_node(std::move(out), {a.node(), b.node()}, "sub", [](Node& self) {
    if (wants(self, 0)) acc(*self.parents[0], self.grad);
    if (wants(self, 1)) {
      Tensor& g = self.parents[1]->g();
      for (std::int64_t i = 0; i < self.grad.numel(); ++i) g[i] -= self.grad[i];
    }
  }));
}

Var mul(const Var& a, const Var& b) {
  check(a.val().same_shape(b.val()), "mul: shape mismatch");
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
  return Var::wrap(make_node(std::move(out), {a.node(), b.node()}, "mul", [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (wants(self, 0)) {
      Tensor& g = self.parents[0]->g();
      for (std::int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      Tensor& g = self.parents[1]->g();
      for (std::int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * av[i];
    }
  }));
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  return Var::wrap(make_node(std::move(out), {a.node()}, "add_scalar", [](Node& self) {
    if (wants(self, 0)) acc(*self.parents[0], self.grad);
  }));
}

Var mul_scalar(const Var& a, double s) {
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return Var::wrap(make_node(std::move(out), {a.node()}, "mul_scalar", [s](Node& self) {
    if (wants(self, 0)) {
      Tensor& g = self.parents[0]->g();
      for (std::int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * s;
    }
  }));
}

Var relu(const Var& a) {
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, out[i]);
  return Var::wrap(make_node(std::move(out), {a.node()}, "relu", [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    const Tensor& x = self.parents[0]->value;
    for (std::int64_t i = 0; i < self.grad.numel(); ++i)
      if (x[i] > 0.0) g[i] += self.grad[i];
  }));
}

namespace {
double sigmoid_s(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
double softplus_s(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
}  // namespace

Var sigmoid(const Var& a) {
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = sigmoid_s(out[i]);
  return Var::wrap(make_node(std::move(out), {a.node()}, "sigmoid", [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
      double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  }));
}

Var softplus(const Var& a) {
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = softplus_s(out[i]);
  return Var::wrap(make_node(std::move(out), {a.node()}, "softplus", [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    const Tensor& x = self.parents[0]->value;
    for (std::int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * sigmoid_s(x[i]);
  }));
}

Var exp(const Var& a) {
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return Var::wrap(make_node(std::move(out), {a.node()}, "exp", [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (std::int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i] * self.value[i];
  }));
}

Var reciprocal(const Var& a) {
  Tensor out = a.val();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / out[i];
  return Var::wrap(make_node(std::move(out), {a.node()}, "reciprocal", [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
      double y = self.value[i];
      g[i] -= self.grad[i] * y * y;
    }
  }));
}

Var add_bscalar(const Var& a, const Var& s, double alpha) {
  check(s.val().numel() == 1, "add_bscalar: s must be scalar");
  Tensor out = a.val();
  double sv = alpha * s.val()[0];
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += sv;
  return Var::wrap(make_node(std::move(out), {a.node(), s.node()}, "add_bscalar", [alpha](Node& self) {
    if (wants(self, 0)) acc(*self.parents[0], self.grad);
    if (wants(self, 1)) {
      double total = 0.0;
      for (std::int64_t i = 0; i < self.grad.numel(); ++i) total += self.grad[i];
      self.parents[1]->g()[0] += alpha * total;
    }
  }));
}

// ---------------------------------------------------------------------------
// 2-D linear algebra

Var matmul(const Var& a, const Var& b) {
  check(a.val().dim() == 2 && b.val().dim() == 2, "matmul: rank-2 inputs required");
  check(a.val().size(1) == b.val().size(0), "matmul: inner dimension mismatch");
  int m = a.val().size(0), k = a.val().size(1), n = b.val().size(1);
  Tensor out({m, n});
  MatMap(out.data(), m, n).noalias() =
      CMatMap(a.val().data(), m, k) * CMatMap(b.val().data(), k, n);
  return Var::wrap(make_node(std::move(out), {a.node(), b.node()}, "matmul", [m, k, n](Node& self) {
    CMatMap go(self.grad.data(), m, n);
    if (wants(self, 0)) {
      MatMap(self.parents[0]->g().data(), m, k).noalias() +=
          go * CMatMap(self.parents[1]->value.data(), k, n).transpose();
    }
    if (wants(self, 1)) {
      MatMap(self.parents[1]->g().data(), k, n).noalias() +=
          CMatMap(self.parents[0]->value.data(), m, k).transpose() * go;
    }
  }));
}

Var transpose(const Var& a) {
  check(a.val().dim() == 2, "transpose: rank-2 input required");
  int m = a.val().size(0), n = a.val().size(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.val().at(i, j);
  return Var::wrap(make_node(std::move(out), {a.node()}, "transpose", [m, n](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g.at(i, j) += self.grad.at(j, i);
  }));
}

Var row_softmax(const Var& a) {
  check(a.val().dim() == 2, "row_softmax: rank-2 input required");
  int m = a.val().size(0), n = a.val().size(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    for (int j = 0; j < n; ++j) mx = std::max(mx, a.val().at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(a.val().at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  return Var::wrap(make_node(std::move(out), {a.node()}, "row_softmax", [m, n](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
      for (int j = 0; j < n; ++j)
        g.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
    }
  }));
}

Var l2_normalize_rows(const Var& a, double eps) {
  check(a.val().dim() == 2, "l2_normalize_rows: rank-2 input required");
  int m = a.val().size(0), n = a.val().size(1);
  Tensor out({m, n});
  std::vector<double> norms(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += a.val().at(i, j) * a.val().at(i, j);
    double r = std::sqrt(s);
    norms[static_cast<size_t>(i)] = r;
    double d = r + eps;
    for (int j = 0; j < n; ++j) out.at(i, j) = a.val().at(i, j) / d;
  }
  return Var::wrap(make_node(std::move(out), {a.node()}, "l2_normalize_rows",
                             [m, n, eps, norms](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    const Tensor& x = self.parents[0]->value;
    for (int i = 0; i < m; ++i) {
      double r = norms[static_cast<size_t>(i)];
      double d = r + eps;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += self.grad.at(i, j) * x.at(i, j);
      for (int j = 0; j < n; ++j) {
        double term = self.grad.at(i, j) / d;
        if (r > 0.0) term -= x.at(i, j) * dot / (r * d * d);
        g.at(i, j) += term;
      }
    }
  }));
}

Var scale_rows(const Var& a, const Var& s) {
  check(a.val().dim() == 2 && s.val().dim() == 1, "scale_rows: want [m,n] and [m]");
  check(a.val().size(0) == s.val().size(0), "scale_rows: row count mismatch");
  int m = a.val().size(0), n = a.val().size(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = a.val().at(i, j) * s.val()[i];
  return Var::wrap(make_node(std::move(out), {a.node(), s.node()}, "scale_rows", [m, n](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& sv = self.parents[1]->value;
    if (wants(self, 0)) {
      Tensor& g = self.parents[0]->g();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g.at(i, j) += self.grad.at(i, j) * sv[i];
    }
    if (wants(self, 1)) {
      Tensor& g = self.parents[1]->g();
      for (int i = 0; i < m; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += self.grad.at(i, j) * av.at(i, j);
        g[i] += dot;
      }
    }
  }));
}

Var add_rowvec(const Var& a, const Var& v) {
  check(a.val().dim() == 2 && v.val().dim() == 1, "add_rowvec: want [m,n] and [n]");
  check(a.val().size(1) == v.val().size(0), "add_rowvec: width mismatch");
  int m = a.val().size(0), n = a.val().size(1);
  Tensor out = a.val();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) += v.val()[j];
  return Var::wrap(make_node(std::move(out), {a.node(), v.node()}, "add_rowvec", [m, n](Node& self) {
    if (wants(self, 0)) acc(*self.parents[0], self.grad);
    if (wants(self, 1)) {
      Tensor& g = self.parents[1]->g();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[j] += self.grad.at(i, j);
    }
  }));
}

Var sum_rows(const Var& a) {
  check(a.val().dim() == 2, "sum_rows: rank-2 input required");
  int m = a.val().size(0), n = a.val().size(1);
  Tensor out({n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j] += a.val().at(i, j);
  return Var::wrap(make_node(std::move(out), {a.node()}, "sum_rows", [m, n](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g.at(i, j) += self.grad[j];
  }));
}

Var mean_rows(const Var& a) {
  return mul_scalar(sum_rows(a), 1.0 / a.val().size(0));
}

Var row_max(const Var& a) {
  check(a.val().dim() == 2, "row_max: rank-2 input required");
  int m = a.val().size(0), n = a.val().size(1);
  Tensor out({m});
  std::vector<int> arg(static_cast<size_t>(m), 0);
  for (int i = 0; i < m; ++i) {
    double best = a.val().at(i, 0);
    int bj = 0;
    for (int j = 1; j < n; ++j) {
      if (a.val().at(i, j) > best) {
        best = a.val().at(i, j);
        bj = j;
      }
    }
    out[i] = best;
    arg[static_cast<size_t>(i)] = bj;
  }
  return Var::wrap(make_node(std::move(out), {a.node()}, "row_max", [m, arg](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (int i = 0; i < m; ++i) g.at(i, arg[static_cast<size_t>(i)]) += self.grad[i];
  }));
}

// ---------------------------------------------------------------------------
// reductions

Var sum_all(const Var& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.val().numel(); ++i) s += a.val()[i];
  return Var::wrap(make_node(Tensor::scalar(s), {a.node()}, "sum_all", [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
  }));
}

Var mean_all(const Var& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.val().numel()));
}

namespace {
Var extremum_all(const Var& a, bool want_max, const char* name) {
  std::int64_t arg = 0;
  double best = a.val()[0];
  for (std::int64_t i = 1; i < a.val().numel(); ++i) {
    double v = a.val()[i];
    if (want_max ? v > best : v < best) {
      best = v;
      arg = i;
    }
  }
  return Var::wrap(make_node(Tensor::scalar(best), {a.node()}, name, [arg](Node& self) {
    if (wants(self, 0)) self.parents[0]->g()[arg] += self.grad[0];
  }));
}
}  // namespace

Var min_all(const Var& a) { return extremum_all(a, false, "min_all"); }
Var max_all(const Var& a) { return extremum_all(a, true, "max_all"); }

// ---------------------------------------------------------------------------
// shape

Var reshape(const Var& a, std::vector<int> shape) {
  check(Tensor::count(shape) == a.val().numel(), "reshape: element count mismatch");
  Tensor out(shape);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.val()[i];
  return Var::wrap(make_node(std::move(out), {a.node()}, "reshape", [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  }));
}

Var concat_channels(const Var& a, const Var& b) {
  check(a.val().dim() == 4 && b.val().dim() == 4, "concat_channels: rank-4 inputs required");
  check(a.val().size(0) == b.val().size(0) && a.val().size(2) == b.val().size(2) &&
            a.val().size(3) == b.val().size(3),
        "concat_channels: non-channel dims mismatch");
  int n = a.val().size(0), ca = a.val().size(1), cb = b.val().size(1);
  int h = a.val().size(2), w = a.val().size(3);
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int bi = 0; bi < n; ++bi) {
    const double* pa = a.val().data() + static_cast<std::int64_t>(bi) * ca * hw;
    const double* pb = b.val().data() + static_cast<std::int64_t>(bi) * cb * hw;
    double* po = out.data() + static_cast<std::int64_t>(bi) * (ca + cb) * hw;
    std::copy(pa, pa + ca * hw, po);
    std::copy(pb, pb + cb * hw, po + ca * hw);
  }
  return Var::wrap(make_node(std::move(out), {a.node(), b.node()}, "concat_channels",
                             [n, ca, cb, hw](Node& self) {
    for (int bi = 0; bi < n; ++bi) {
      const double* pg = self.grad.data() + static_cast<std::int64_t>(bi) * (ca + cb) * hw;
      if (wants(self, 0)) {
        double* g = self.parents[0]->g().data() + static_cast<std::int64_t>(bi) * ca * hw;
        for (std::int64_t i = 0; i < ca * hw; ++i) g[i] += pg[i];
      }
      if (wants(self, 1)) {
        double* g = self.parents[1]->g().data() + static_cast<std::int64_t>(bi) * cb * hw;
        for (std::int64_t i = 0; i < cb * hw; ++i) g[i] += pg[ca * hw + i];
      }
    }
  }));
}

Var slice_batch(const Var& a, int idx) {
  check(a.val().dim() == 4, "slice_batch: rank-4 input required");
  check(idx >= 0 && idx < a.val().size(0), "slice_batch: index out of range");
  int c = a.val().size(1), h = a.val().size(2), w = a.val().size(3);
  std::int64_t chw = static_cast<std::int64_t>(c) * h * w;
  Tensor out({1, c, h, w});
  const double* src = a.val().data() + idx * chw;
  std::copy(src, src + chw, out.data());
  return Var::wrap(make_node(std::move(out), {a.node()}, "slice_batch", [idx, chw](Node& self) {
    if (!wants(self, 0)) return;
    double* g = self.parents[0]->g().data() + idx * chw;
    for (std::int64_t i = 0; i < chw; ++i) g[i] += self.grad[i];
  }));
}

Var chw_to_lc(const Var& a) {
  check(a.val().dim() == 4 && a.val().size(0) == 1, "chw_to_lc: want [1,C,H,W]");
  int c = a.val().size(1), h = a.val().size(2), w = a.val().size(3);
  std::int64_t l = static_cast<std::int64_t>(h) * w;
  Tensor out({static_cast<int>(l), c});
  for (int ci = 0; ci < c; ++ci)
    for (std::int64_t li = 0; li < l; ++li) out[li * c + ci] = a.val()[ci * l + li];
  return Var::wrap(make_node(std::move(out), {a.node()}, "chw_to_lc", [c, l](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (int ci = 0; ci < c; ++ci)
      for (std::int64_t li = 0; li < l; ++li) g[ci * l + li] += self.grad[li * c + ci];
  }));
}

Var lc_to_chw(const Var& a, int h, int w) {
  check(a.val().dim() == 2, "lc_to_chw: rank-2 input required");
  check(a.val().size(0) == h * w, "lc_to_chw: row count mismatch");
  int c = a.val().size(1);
  std::int64_t l = static_cast<std::int64_t>(h) * w;
  Tensor out({1, c, h, w});
  for (int ci = 0; ci < c; ++ci)
    for (std::int64_t li = 0; li < l; ++li) out[ci * l + li] = a.val()[li * c + ci];
  return Var::wrap(make_node(std::move(out), {a.node()}, "lc_to_chw", [c, l](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (int ci = 0; ci < c; ++ci)
      for (std::int64_t li = 0; li < l; ++li) g[li * c + ci] += self.grad[ci * l + li];
  }));
}

Var broadcast_vec_spatial(const Var& v, int h, int w) {
  check(v.val().dim() == 1, "broadcast_vec_spatial: rank-1 input required");
  int c = v.val().size(0);
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({1, c, h, w});
  for (int ci = 0; ci < c; ++ci)
    for (std::int64_t i = 0; i < hw; ++i) out[ci * hw + i] = v.val()[ci];
  return Var::wrap(make_node(std::move(out), {v.node()}, "broadcast_vec_spatial",
                             [c, hw](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (int ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) s += self.grad[ci * hw + i];
      g[ci] += s;
    }
  }));
}

Var broadcast_map_channels(const Var& m, int channels) {
  check(m.val().dim() == 4 && m.val().size(0) == 1 && m.val().size(1) == 1,
        "broadcast_map_channels: want [1,1,H,W]");
  int h = m.val().size(2), w = m.val().size(3);
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({1, channels, h, w});
  for (int ci = 0; ci < channels; ++ci)
    for (std::int64_t i = 0; i < hw; ++i) out[ci * hw + i] = m.val()[i];
  return Var::wrap(make_node(std::move(out), {m.node()}, "broadcast_map_channels",
                             [channels, hw](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = self.parents[0]->g();
    for (int ci = 0; ci < channels; ++ci)
      for (std::int64_t i = 0; i < hw; ++i) g[i] += self.grad[ci * hw + i];
  }));
}

Var detach(const Var& a) { return Var(a.val(), false); }

}  // namespace ag
}  // namespace osad
