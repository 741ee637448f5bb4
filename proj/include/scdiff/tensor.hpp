#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace scdiff {

// Dense row-major tensor of doubles. Shape {} is a scalar with one element.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw std::invalid_argument("tensor: data size does not match shape");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
      if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension");
      n *= d;
    }
    return n;
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
  }
  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    t.data.assign(t.data.size(), v);
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return data.size() == 1; }

  std::size_t rows() const {
    if (rank() != 2) throw std::logic_error("tensor: rows() on non-matrix");
    return shape[0];
  }
  std::size_t cols() const {
    if (rank() != 2) throw std::logic_error("tensor: cols() on non-matrix");
    return shape[1];
  }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  double value() const {
    if (!is_scalar()) throw std::logic_error("tensor: value() on non-scalar");
    return data[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor reshaped(std::vector<std::size_t> s) const {
    if (numel_of(s) != numel())
      throw std::invalid_argument("tensor: reshape changes element count");
    return Tensor(std::move(s), data);
  }

  // Row i of a rank-2 tensor as a flat tensor of the given shape.
  Tensor row_as(std::size_t i, std::vector<std::size_t> s) const {
    std::size_t w = numel() / shape[0];
    if (numel_of(s) != w)
      throw std::invalid_argument("tensor: row shape mismatch");
    Tensor out(std::move(s));
    std::copy(data.begin() + i * w, data.begin() + (i + 1) * w, out.data.begin());
    return out;
  }
  void set_row(std::size_t i, const Tensor& r) {
    std::size_t w = numel() / shape[0];
    if (r.numel() != w) throw std::invalid_argument("tensor: row size mismatch");
    std::copy(r.data.begin(), r.data.end(), data.begin() + i * w);
  }
};

std::string shape_str(const std::vector<std::size_t>& s);

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
Tensor axpy(double alpha, const Tensor& x, const Tensor& y);  // alpha*x + y

}  // namespace scdiff
