#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ildet {

/// Dense row-major tensor of 64-bit reals. Mostly used as matrices
/// [rows x cols] or flat vectors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_in)
      : shape(std::move(shape_in)), data(count(shape), 0.0) {}
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
      : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (count(shape) != data.size())
      throw std::invalid_argument("Tensor: shape/data size mismatch");
  }

  static Tensor matrix(std::size_t r, std::size_t c) { return Tensor({r, c}); }
  static Tensor vector(std::size_t n) { return Tensor({n}); }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const {
    if (shape.size() == 1) return shape[0];
    return shape.size() >= 2 ? shape[1] : 0;
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols_2d() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols_2d() + j]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  std::vector<std::size_t> shape;
  std::vector<double> data;

 private:
  std::size_t cols_2d() const { return shape.size() >= 2 ? shape[1] : 1; }
  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return s.empty() ? 0 : n;
  }
};

inline void check_shape(bool ok, const std::string& what, const Tensor& a,
                        const Tensor& b) {
  if (!ok)
    throw std::invalid_argument(what + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}

}  // namespace ildet
