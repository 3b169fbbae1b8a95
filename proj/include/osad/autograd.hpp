#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "osad/tensor.hpp"

namespace osad {
namespace ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  Tensor& g() {
    if (!grad_alloc) {
      grad = Tensor(value.shape());
      grad_alloc = true;
    }
    return grad;
  }
};

bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
 private:
  bool prev_;
};

// Handle to a node in the tape. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor t, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor& val() const { return n_->value; }
  Tensor& mutable_val() { return n_->value; }
  Tensor& grad() const { return n_->g(); }
  bool has_grad() const { return n_ && n_->grad_alloc; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  void zero_grad() {
    if (n_ && n_->grad_alloc) n_->grad.fill(0.0);
  }
  NodePtr node() const { return n_; }

  static Var wrap(NodePtr n) {
    Var v;
    v.n_ = std::move(n);
    return v;
  }

 private:
  NodePtr n_;
};

// Runs reverse-mode accumulation from `root`, seeding with `seed`
// (or with ones when omitted and root is scalar).
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

namespace detail {
// Node factory shared by the op implementations. Drops the tape edges when
// grad mode is off or no parent needs gradients.
NodePtr make_node(Tensor value, std::vector<NodePtr> parents, const char* op,
                  std::function<void(Node&)> backward);
}  // namespace detail

// ---- elementwise / scalar ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var reciprocal(const Var& a);
// a + alpha * s where s is a [1] tensor broadcast over a.
Var add_bscalar(const Var& a, const Var& s, double alpha);

// ---- 2-D linear algebra ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var row_softmax(const Var& a);
Var l2_normalize_rows(const Var& a, double eps);
Var scale_rows(const Var& a, const Var& s);   // a[m,n] * s[m] per row
Var add_rowvec(const Var& a, const Var& v);   // a[m,n] + v[n] per row
Var sum_rows(const Var& a);                   // [m,n] -> [n]
Var mean_rows(const Var& a);                  // [m,n] -> [n]
Var row_max(const Var& a);                    // [m,n] -> [m]

// ---- reductions ----
Var sum_all(const Var& a);   // -> [1]
Var mean_all(const Var& a);  // -> [1]
Var min_all(const Var& a);   // -> [1]
Var max_all(const Var& a);   // -> [1]

// ---- shape ----
Var reshape(const Var& a, std::vector<int> shape);
Var concat_channels(const Var& a, const Var& b);          // [N,Ca,H,W]+[N,Cb,H,W]
Var slice_batch(const Var& a, int i);                     // [N,C,H,W] -> [1,C,H,W]
Var chw_to_lc(const Var& a);                              // [1,C,H,W] -> [H*W,C]
Var lc_to_chw(const Var& a, int h, int w);                // [L,C] -> [1,C,H,W]
Var broadcast_vec_spatial(const Var& v, int h, int w);    // [C] -> [1,C,H,W]
Var broadcast_map_channels(const Var& m, int channels);   // [1,1,H,W] -> [1,C,H,W]
Var detach(const Var& a);

// ---- spatial ----
// SAME padding; output is ceil(input / stride). Extra padding goes to the
// bottom/right. `bias` may be undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride);
Var maxpool2d(const Var& x, int k, int stride);
Var upsample_bilinear(const Var& x, int out_h, int out_w);

// SAME-conv output extent.
inline int conv_out(int in, int stride) { return (in + stride - 1) / stride; }

}  // namespace ag
}  // namespace osad
