#pragma once

#include <cmath>

#include "mivit/tape.hpp"

namespace mivit {
namespace ops {

// All explicit reductions here run sequential f64 accumulators.

template <typename T>
Var<T> sum_all(Var<T> x) {
  const T* px = x.value().ptr();
  double acc = 0.0;
  const int64_t n = x.value().numel();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc));
  check_finite(out, "sum_all");
  return x.tape->emplace(std::move(out), {x.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    const T g = n_.grad[0];
    auto& gx = t.grad_of(n_.parents[0]);
    for (auto& v : gx) v += g;
  });
}

template <typename T>
Var<T> mean_all(Var<T> x) {
  const T* px = x.value().ptr();
  double acc = 0.0;
  const int64_t n = x.value().numel();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  check_finite(out, "mean_all");
  return x.tape->emplace(std::move(out), {x.id}, [n](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    const T g = static_cast<T>(static_cast<double>(n_.grad[0]) / static_cast<double>(n));
    auto& gx = t.grad_of(n_.parents[0]);
    for (auto& v : gx) v += g;
  });
}

// Remove one axis by summation.
template <typename T>
Var<T> sum_axis(Var<T> x, int axis) {
  const Shape& xs = x.value().shape;
  const int rank = static_cast<int>(xs.size());
  if (axis < 0 || axis >= rank) throw DimensionError("sum_axis: bad axis");
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= xs[static_cast<size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= xs[static_cast<size_t>(d)];
  const int64_t len = xs[static_cast<size_t>(axis)];
  Shape os;
  for (int d = 0; d < rank; ++d)
    if (d != axis) os.push_back(xs[static_cast<size_t>(d)]);
  if (os.empty()) os.push_back(1);

  TensorT<T> out(os);
  const T* px = x.value().ptr();
  T* po = out.ptr();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (int64_t a = 0; a < len; ++a)
        acc += static_cast<double>(px[(o * len + a) * inner + i]);
      po[o * inner + i] = static_cast<T>(acc);
    }
  check_finite(out, "sum_axis");
  return x.tape->emplace(std::move(out), {x.id}, [outer, inner, len](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    auto& gx = t.grad_of(n_.parents[0]);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t a = 0; a < len; ++a)
        for (int64_t i = 0; i < inner; ++i)
          gx[static_cast<size_t>((o * len + a) * inner + i)] += g[static_cast<size_t>(o * inner + i)];
  });
}

template <typename T>
Var<T> mean_axis(Var<T> x, int axis) {
  const int64_t len = x.value().shape[static_cast<size_t>(axis)];
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(len));
}

// Numerically-stabilized softmax over the trailing axis.
template <typename T>
Var<T> softmax(Var<T> x) {
  const Shape& xs = x.value().shape;
  if (xs.empty()) throw DimensionError("softmax: scalar input");
  const int64_t d = xs.back();
  if (d < 1) throw DimensionError("softmax: empty trailing axis");
  const int64_t rows = x.value().numel() / d;
  if (!all_finite(x.value().ptr(), x.value().numel()))
    throw NumericError("softmax: non-finite input");

  TensorT<T> out(xs);
  const T* px = x.value().ptr();
  T* po = out.ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T m = row[0];
    for (int64_t i = 1; i < d; ++i) m = std::max(m, row[i]);
    double denom = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      const double e = std::exp(static_cast<double>(row[i] - m));
      po[r * d + i] = static_cast<T>(e);
      denom += e;
    }
    for (int64_t i = 0; i < d; ++i)
      po[r * d + i] = static_cast<T>(static_cast<double>(po[r * d + i]) / denom);
  }
  check_finite(out, "softmax");
  return x.tape->emplace(std::move(out), {x.id}, [rows, d](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    const T* y = n_.value.ptr();
    auto& gx = t.grad_of(n_.parents[0]);
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t i = 0; i < d; ++i)
        dot += static_cast<double>(g[static_cast<size_t>(r * d + i)]) *
               static_cast<double>(y[r * d + i]);
      for (int64_t i = 0; i < d; ++i)
        gx[static_cast<size_t>(r * d + i)] +=
            y[r * d + i] * (g[static_cast<size_t>(r * d + i)] - static_cast<T>(dot));
    }
  });
}

// Layer norm over the trailing axis with learnable gamma/beta.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
  const Shape& xs = x.value().shape;
  const int64_t d = xs.back();
  if (gamma.value().numel() != d || beta.value().numel() != d)
    throw DimensionError("layer_norm: gamma/beta must have trailing-axis length");
  const int64_t rows = x.value().numel() / d;

  TensorT<T> out(xs);
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.value().numel()));
  auto inv_sigma = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  const T* px = x.value().ptr();
  const T* pg = gamma.value().ptr();
  const T* pb = beta.value().ptr();
  T* po = out.ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    double mu = 0.0;
    for (int64_t i = 0; i < d; ++i) mu += static_cast<double>(row[i]);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      const double c = static_cast<double>(row[i]) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[static_cast<size_t>(r)] = static_cast<T>(is);
    for (int64_t i = 0; i < d; ++i) {
      const double xh = (static_cast<double>(row[i]) - mu) * is;
      (*xhat)[static_cast<size_t>(r * d + i)] = static_cast<T>(xh);
      po[r * d + i] = static_cast<T>(xh * static_cast<double>(pg[i]) + static_cast<double>(pb[i]));
    }
  }
  check_finite(out, "layer_norm");
  return x.tape->emplace(
      std::move(out), {x.id, gamma.id, beta.id}, [rows, d, xhat, inv_sigma](Tape<T>& t, int self) {
        auto& n_ = t.node(self);
        auto& g = n_.grad;
        const T* pg = t.node(n_.parents[1]).value.ptr();
        auto& gx = t.grad_of(n_.parents[0]);
        auto& gg = t.grad_of(n_.parents[1]);
        auto& gb = t.grad_of(n_.parents[2]);
        for (int64_t r = 0; r < rows; ++r) {
          double mean_dy = 0.0, mean_dyxh = 0.0;
          for (int64_t i = 0; i < d; ++i) {
            const double dy = static_cast<double>(g[static_cast<size_t>(r * d + i)]) *
                              static_cast<double>(pg[i]);
            mean_dy += dy;
            mean_dyxh += dy * static_cast<double>((*xhat)[static_cast<size_t>(r * d + i)]);
          }
          mean_dy /= static_cast<double>(d);
          mean_dyxh /= static_cast<double>(d);
          const double is = static_cast<double>((*inv_sigma)[static_cast<size_t>(r)]);
          for (int64_t i = 0; i < d; ++i) {
            const double dy = static_cast<double>(g[static_cast<size_t>(r * d + i)]) *
                              static_cast<double>(pg[i]);
            const double xh = static_cast<double>((*xhat)[static_cast<size_t>(r * d + i)]);
            gx[static_cast<size_t>(r * d + i)] += static_cast<T>(is * (dy - mean_dy - xh * mean_dyxh));
          }
        }
        for (int64_t i = 0; i < d; ++i) {
          double ag = 0.0, ab = 0.0;
          for (int64_t r = 0; r < rows; ++r) {
            const double gv = static_cast<double>(g[static_cast<size_t>(r * d + i)]);
            ag += gv * static_cast<double>((*xhat)[static_cast<size_t>(r * d + i)]);
            ab += gv;
          }
          gg[static_cast<size_t>(i)] += static_cast<T>(ag);
          gb[static_cast<size_t>(i)] += static_cast<T>(ab);
        }
      });
}

}  // namespace ops
}  // namespace mivit
