#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "osad/autograd.hpp"
#include "osad/rng.hpp"

namespace osad {
namespace nn {

struct Param {
  std::string name;
  ag::Var var;
  bool trainable = true;
};

// Ordered, named parameter registry. Registration order is the canonical
// order for checkpoints and the optimizer.
class ParamStore {
 public:
  ag::Var add(const std::string& name, Tensor init, bool trainable = true);
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param* find(const std::string& name);
  void set_trainable_prefix(const std::string& prefix, bool trainable);
  std::int64_t count_prefix(const std::string& prefix) const;  // parameter scalars
  void zero_grad();

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, size_t> by_name_;
};

// He-style fan-in init for rectifier stacks.
Tensor kaiming_conv(Rng& rng, int co, int ci, int kh, int kw);
Tensor kaiming_linear(Rng& rng, int in, int out);  // [in, out]

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, Rng& rng, int ci, int co, int k,
         int stride = 1, bool bias = true);
  ag::Var forward(const ag::Var& x) const;
  int stride() const { return stride_; }

 private:
  ag::Var w_, b_;
  int stride_ = 1;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Rng& rng, int in, int out, bool bias = true);
  ag::Var forward(const ag::Var& x) const;  // x: [m, in] -> [m, out]

 private:
  ag::Var w_, b_;
};

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update to every trainable parameter with an allocated
  // gradient, then advances the shared timestep.
  void step(std::vector<Param>& params, double lr);

  struct Slot {
    Tensor m, v;
  };
  std::vector<Slot>& slots() { return slots_; }
  long timestep() const { return t_; }
  void set_timestep(long t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace nn
}  // namespace osad
