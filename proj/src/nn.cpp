#include "osad/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace osad {
namespace nn {

ag::Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (by_name_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.var = ag::Var(std::move(init), /*requires_grad=*/true);
  p.trainable = trainable;
  by_name_[name] = params_.size();
  params_.push_back(p);
  return params_.back().var;
}

Param* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
  for (auto& p : params_)
    if (p.name.rfind(prefix, 0) == 0) p.trainable = trainable;
}

std::int64_t ParamStore::count_prefix(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& p : params_)
    if (p.name.rfind(prefix, 0) == 0) n += p.var.val().numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

Tensor kaiming_conv(Rng& rng, int co, int ci, int kh, int kw) {
  Tensor t({co, ci, kh, kw});
  double std = std::sqrt(2.0 / (static_cast<double>(ci) * kh * kw));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * std;
  return t;
}

Tensor kaiming_linear(Rng& rng, int in, int out) {
  Tensor t({in, out});
  double std = std::sqrt(2.0 / static_cast<double>(in));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * std;
  return t;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, Rng& rng, int ci, int co, int k,
               int stride, bool bias)
    : stride_(stride) {
  w_ = store.add(name + ".w", kaiming_conv(rng, co, ci, k, k));
  if (bias) b_ = store.add(name + ".b", Tensor({co}));
}

ag::Var Conv2d::forward(const ag::Var& x) const { return ag::conv2d(x, w_, b_, stride_); }

Linear::Linear(ParamStore& store, const std::string& name, Rng& rng, int in, int out, bool bias) {
  w_ = store.add(name + ".w", kaiming_linear(rng, in, out));
  if (bias) b_ = store.add(name + ".b", Tensor({out}));
}

ag::Var Linear::forward(const ag::Var& x) const {
  ag::Var y = ag::matmul(x, w_);
  return b_.defined() ? ag::add_rowvec(y, b_) : y;
}

void Adam::step(std::vector<Param>& params, double lr) {
  if (slots_.size() != params.size()) {
    slots_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      if (slots_[i].m.numel() == 0) {
        slots_[i].m = Tensor(params[i].var.val().shape());
        slots_[i].v = Tensor(params[i].var.val().shape());
      }
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    if (!p.trainable || !p.var.has_grad()) continue;
    Tensor& g = p.var.grad();
    Tensor& m = slots_[i].m;
    Tensor& v = slots_[i].v;
    Tensor& w = p.var.mutable_val();
    for (std::int64_t j = 0; j < w.numel(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace nn
}  // namespace osad
