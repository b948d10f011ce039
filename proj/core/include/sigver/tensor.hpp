#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "sigver/errors.hpp"
#include "sigver/rng.hpp"

namespace sigver::nn {

// Dense row-major tensor. Compute mode instantiates T=float, verification
// mode T=double. Rank is 1-3; higher-rank shapes collapse to
// (numel/last, last) when viewed as a matrix.
template <typename T>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<std::int64_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(numel_of(t.shape)), T(0));
    return t;
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    Tensor t;
    const auto r = static_cast<std::int64_t>(rows.size());
    const auto c = static_cast<std::int64_t>(rows.begin()->size());
    t.shape = {r, c};
    t.data.reserve(static_cast<std::size_t>(r * c));
    for (const auto& row : rows) {
      for (const T v : row) t.data.push_back(v);
    }
    return t;
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                           std::multiplies<>());
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }

  // Matrix view dimensions: trailing dimension is the column count.
  std::int64_t view_cols() const { return shape.empty() ? 1 : shape.back(); }
  std::int64_t view_rows() const {
    return view_cols() == 0 ? 0 : numel() / view_cols();
  }

  T& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  T at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  T& at(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * view_cols() + c)];
  }
  T at(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * view_cols() + c)];
  }

  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Matrix>;
  using ConstMap = Eigen::Map<const Matrix>;

  Map mat() { return Map(data.data(), view_rows(), view_cols()); }
  ConstMap mat() const { return ConstMap(data.data(), view_rows(), view_cols()); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  void set_zero() { fill(T(0)); }

  bool all_finite() const {
    for (const T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (const T v : data) out.data.push_back(static_cast<U>(v));
    return out;
  }
};

template <typename T>
std::string shape_string(const Tensor<T>& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

// Glorot/Xavier uniform initialization with explicit fan counts.
template <typename T>
void init_xavier_uniform(Tensor<T>& t, Rng& rng, std::int64_t fan_in,
                         std::int64_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-a, a));
}

template <typename T>
void init_normal(Tensor<T>& t, Rng& rng, double stddev) {
  for (auto& v : t.data) v = static_cast<T>(rng.normal(0.0, stddev));
}

}  // namespace sigver::nn
