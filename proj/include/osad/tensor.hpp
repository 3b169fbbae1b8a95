#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace osad {

// Dense row-major tensor of doubles, rank <= 4 in practice.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), fill);
  }

  Tensor(std::vector<int> shape, std::vector<double> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    assert(static_cast<std::int64_t>(data_.size()) == count(shape_));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int dim() const { return static_cast<int>(shape_.size()); }
  int size(int d) const { return shape_[static_cast<size_t>(d)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Rank-4 accessor (n, c, y, x).
  double& at(int n, int c, int y, int x) {
    return data_[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  double at(int n, int c, int y, int x) const {
    return data_[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  // Rank-2 accessor (r, c).
  double& at(int r, int c) { return data_[static_cast<size_t>(static_cast<std::int64_t>(r) * shape_[1] + c)]; }
  double at(int r, int c) const { return data_[static_cast<size_t>(static_cast<std::int64_t>(r) * shape_[1] + c)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace osad
