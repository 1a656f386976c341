#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "posesdf/errors.hpp"

namespace posesdf {

// Dense row-major double tensor. Rank 0 (shape {}) is a scalar with one
// element; ops that say "same shape" mean exact shape-vector equality.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> s) {
    Tensor t;
    int64_t n = 1;
    for (int64_t e : s) {
      require(e > 0, "tensor: extents must be positive");
      n *= e;
    }
    t.shape = std::move(s);
    t.data.assign(static_cast<size_t>(n), 0.0);
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
  }

  static Tensor vec(std::vector<double> v) {
    Tensor t;
    require(!v.empty(), "tensor: extents must be positive");
    t.shape = {static_cast<int64_t>(v.size())};
    t.data = std::move(v);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int64_t rows() const {
    require(rank() == 2, "tensor: rows() needs rank 2");
    return shape[0];
  }
  int64_t cols() const {
    require(rank() == 2, "tensor: cols() needs rank 2");
    return shape[1];
  }

  double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace posesdf
