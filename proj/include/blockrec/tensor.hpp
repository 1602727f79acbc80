#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "blockrec/errors.hpp"

namespace blockrec {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor of 64-bit floats. Rank 0 is represented as
// shape {1}; everything in this project is rank 1 or 2.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (size_from_shape(shape) != values.size())
      throw dimension_error("tensor value count " + std::to_string(values.size()) +
                            " does not match shape " + shape_str(shape));
  }

  static std::size_t size_from_shape(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::vector<double> v(size_from_shape(s), 0.0);
    return Tensor(std::move(s), std::move(v));
  }

  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  static Tensor row_vector(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t rows() const {
    if (shape.size() != 2) throw dimension_error("rows() on tensor of shape " + shape_str(shape));
    return shape[0];
  }
  std::size_t cols() const {
    if (shape.size() != 2) throw dimension_error("cols() on tensor of shape " + shape_str(shape));
    return shape[1];
  }

  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t i) const { return values[i]; }
  double& at(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * shape[1] + j]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace blockrec
