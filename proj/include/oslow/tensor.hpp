#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "oslow/common.hpp"

namespace oslow {

/// Dense row-major tensor of doubles. Rank 1 or 2 in practice; the shape
/// vector is kept general so scalars ({1}) and flat views need no casing.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (numel() != values.size())
      throw shape_error("tensor: shape/value size mismatch");
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor full(std::vector<std::size_t> s, double v) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return Tensor(std::move(s), std::vector<double>(n, v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor matrix(std::size_t r, std::size_t c) {
    return zeros({r, c});
  }
  static Tensor identity(std::size_t d) {
    Tensor t = zeros({d, d});
    for (std::size_t i = 0; i < d; ++i) t.values[i * d + i] = 1.0;
    return t;
  }

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return numel() == 1; }

  double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const {
    return values[i * cols() + j];
  }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.values == b.values;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw shape_error("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

}  // namespace oslow
