#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gcsa/errors.hpp"

namespace gcsa {

// Dense row-major matrix. Vectors are 1xN or Nx1 tensors.
template <typename T>
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, T(0)) {
    if (r < 0 || c < 0) throw ShapeError("negative tensor dimension");
  }
  Tensor(int r, int c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<size_t>(r) * c)
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match " + std::to_string(r) + "x" + std::to_string(c));
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor ones(int r, int c) {
    Tensor t(r, c);
    for (auto& x : t.data) x = T(1);
    return t;
  }
  static Tensor full(int r, int c, T v) {
    Tensor t(r, c);
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = T(1);
    return t;
  }
  static Tensor row(std::vector<T> d) {
    int n = static_cast<int>(d.size());
    return Tensor(1, n, std::move(d));
  }
  static Tensor col(std::vector<T> d) {
    int n = static_cast<int>(d.size());
    return Tensor(n, 1, std::move(d));
  }

  T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  T at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  bool all_finite() const {
    for (T x : data)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(rows, cols);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

// out = a * b, naive triple loop. Desk-scale sizes only.
template <typename T>
Tensor<T> matmul_plain(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " x " +
                     b.shape_str());
  Tensor<T> out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      T aik = a.at(i, k);
      if (aik == T(0)) continue;
      const T* brow = &b.data[static_cast<size_t>(k) * b.cols];
      T* orow = &out.data[static_cast<size_t>(i) * out.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose_plain(const Tensor<T>& a) {
  Tensor<T> out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline constexpr double kNormEps = 1e-12;   // zero-norm guard
inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
double norm2(const Tensor<T>& v) {
  double s = 0;
  for (T x : v.data) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

// Euclidean normalization. A near-zero input yields the zero vector and sets
// *degenerate if provided.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& v, bool* degenerate = nullptr) {
  double n = norm2(v);
  if (degenerate) *degenerate = false;
  if (n <= kNormEps) {
    if (degenerate) *degenerate = true;
    return Tensor<T>(v.rows, v.cols);
  }
  Tensor<T> out = v;
  for (auto& x : out.data) x = static_cast<T>(x / n);
  return out;
}

template <typename T>
double cosine_sim(const Tensor<T>& u, const Tensor<T>& v) {
  if (u.size() != v.size())
    throw ShapeError("cosine_sim: length mismatch " + u.shape_str() + " vs " +
                     v.shape_str());
  double nu = norm2(u), nv = norm2(v);
  if (nu <= kNormEps || nv <= kNormEps)
    throw NumericError("cosine_sim: degenerate norm");
  double dot = 0;
  for (size_t i = 0; i < u.size(); ++i)
    dot += static_cast<double>(u.data[i]) * static_cast<double>(v.data[i]);
  double c = dot / (nu * nv);
  return std::fmin(1.0, std::fmax(-1.0, c));
}

}  // namespace gcsa
