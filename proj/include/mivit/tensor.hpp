#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mivit/error.hpp"
#include "mivit/rng.hpp"

namespace mivit {

using Shape = std::vector<int>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major n-d array. Data and grad buffers are shared_ptrs so
// tensors copy cheaply and tape leaves alias parameter storage directly.
template <typename T>
struct TensorT {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::shared_ptr<std::vector<T>> grad;  // allocated iff requires_grad
  bool requires_grad = false;

  TensorT() = default;

  explicit TensorT(Shape s) : shape(std::move(s)) {
    data = std::make_shared<std::vector<T>>(numel_of(shape), T(0));
  }

  TensorT(Shape s, std::vector<T> values) : shape(std::move(s)) {
    if (static_cast<int64_t>(values.size()) != numel_of(shape))
      throw DimensionError("tensor data size " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    data = std::make_shared<std::vector<T>>(std::move(values));
  }

  int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }
  T& operator[](int64_t i) { return (*data)[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return (*data)[static_cast<size_t>(i)]; }

  TensorT& set_requires_grad(bool on = true) {
    requires_grad = on;
    if (on && !grad) grad = std::make_shared<std::vector<T>>(numel(), T(0));
    return *this;
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), T(0));
  }

  // deep copy (fresh buffers)
  TensorT clone() const {
    TensorT out;
    out.shape = shape;
    out.data = std::make_shared<std::vector<T>>(*data);
    if (grad) out.grad = std::make_shared<std::vector<T>>(*grad);
    out.requires_grad = requires_grad;
    return out;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data = std::make_shared<std::vector<U>>(numel());
    for (int64_t i = 0; i < numel(); ++i) (*out.data)[static_cast<size_t>(i)] = static_cast<U>((*data)[static_cast<size_t>(i)]);
    out.requires_grad = requires_grad;
    if (out.requires_grad) out.grad = std::make_shared<std::vector<U>>(numel(), U(0));
    return out;
  }

  static TensorT zeros(Shape s) { return TensorT(std::move(s)); }

  static TensorT full(Shape s, T v) {
    TensorT t(std::move(s));
    std::fill(t.data->begin(), t.data->end(), v);
    return t;
  }

  static TensorT scalar(T v) { return full({1}, v); }

  static TensorT uniform(Shape s, Rng& rng, double lo, double hi) {
    TensorT t(std::move(s));
    for (auto& x : *t.data) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static TensorT normal(Shape s, Rng& rng, double stddev = 1.0) {
    TensorT t(std::move(s));
    for (auto& x : *t.data) x = static_cast<T>(rng.normal() * stddev);
    return t;
  }
};

// Branch-free finite check over a float buffer (exponent-bits trick for
// f32, fallback to std::isfinite otherwise).
inline bool all_finite(const float* p, int64_t n) {
  uint32_t acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    uint32_t bits;
    std::memcpy(&bits, p + i, 4);
    // accumulate "exponent all ones" hits
    acc |= static_cast<uint32_t>((bits & 0x7f800000u) == 0x7f800000u);
  }
  return acc == 0;
}

inline bool all_finite(const double* p, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

template <typename T>
void check_finite(const TensorT<T>& t, const char* op_name) {
  if (!all_finite(t.ptr(), t.numel()))
    throw NumericError(std::string("non-finite value produced by op '") + op_name + "'");
}

using Tensor = TensorT<float>;

}  // namespace mivit
