#pragma once

#include <algorithm>
#include <cmath>

#include "mivit/kinkguard.hpp"
#include "mivit/tape.hpp"

namespace mivit {
namespace ops {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.value().shape != b.value().shape)
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value().shape) +
                         " vs " + shape_str(b.value().shape));
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  TensorT<T> out(a.value().shape);
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite(out, "add");
  return a.tape->emplace(std::move(out), {a.id, b.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    auto& ga = t.grad_of(n_.parents[0]);
    auto& gb = t.grad_of(n_.parents[1]);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  TensorT<T> out(a.value().shape);
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  check_finite(out, "sub");
  return a.tape->emplace(std::move(out), {a.id, b.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    auto& ga = t.grad_of(n_.parents[0]);
    auto& gb = t.grad_of(n_.parents[1]);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  TensorT<T> out(a.value().shape);
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  check_finite(out, "mul");
  return a.tape->emplace(std::move(out), {a.id, b.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    const T* va = t.node(n_.parents[0]).value.ptr();
    const T* vb = t.node(n_.parents[1]).value.ptr();
    auto& ga = t.grad_of(n_.parents[0]);
    auto& gb = t.grad_of(n_.parents[1]);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, double c) {
  TensorT<T> out(a.value().shape);
  const T* pa = a.value().ptr();
  T* po = out.ptr();
  const T cv = static_cast<T>(c);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * cv;
  check_finite(out, "scale");
  return a.tape->emplace(std::move(out), {a.id}, [cv](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& ga = t.grad_of(n_.parents[0]);
    for (size_t i = 0; i < n_.grad.size(); ++i) ga[i] += n_.grad[i] * cv;
  });
}

// x * s where s is a one-element tensor (e.g. a learnable scale weight).
template <typename T>
Var<T> mul_scalar_tensor(Var<T> x, Var<T> s) {
  if (s.value().numel() != 1) throw DimensionError("mul_scalar_tensor: scale must be a scalar");
  TensorT<T> out(x.value().shape);
  const T sv = s.value()[0];
  const T* px = x.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] * sv;
  check_finite(out, "mul_scalar_tensor");
  return x.tape->emplace(std::move(out), {x.id, s.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    const T* vx = t.node(n_.parents[0]).value.ptr();
    const T sv = t.node(n_.parents[1]).value[0];
    auto& gx = t.grad_of(n_.parents[0]);
    auto& gs = t.grad_of(n_.parents[1]);
    double acc = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * sv;
      acc += static_cast<double>(g[i]) * static_cast<double>(vx[i]);
    }
    gs[0] += static_cast<T>(acc);
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  TensorT<T> out(x.value().shape);
  const T* px = x.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  if (KinkGuard::enabled)
    for (int64_t i = 0; i < n; ++i) KinkGuard::record(std::abs(static_cast<double>(px[i])));
  check_finite(out, "relu");
  return x.tape->emplace(std::move(out), {x.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    const T* vx = t.node(n_.parents[0]).value.ptr();
    auto& gx = t.grad_of(n_.parents[0]);
    for (size_t i = 0; i < n_.grad.size(); ++i)
      if (vx[i] > T(0)) gx[i] += n_.grad[i];
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  TensorT<T> out(x.value().shape);
  const T* px = x.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(px[i]);
    po[i] = static_cast<T>(1.0 / (1.0 + std::exp(-v)));
  }
  check_finite(out, "sigmoid");
  return x.tape->emplace(std::move(out), {x.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    const T* y = n_.value.ptr();
    auto& gx = t.grad_of(n_.parents[0]);
    for (size_t i = 0; i < n_.grad.size(); ++i)
      gx[i] += n_.grad[i] * y[i] * (T(1) - y[i]);
  });
}

// exact (erf) form
template <typename T>
Var<T> gelu(Var<T> x) {
  TensorT<T> out(x.value().shape);
  const T* px = x.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(px[i]);
    po[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
  }
  check_finite(out, "gelu");
  return x.tape->emplace(std::move(out), {x.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    const T* vx = t.node(n_.parents[0]).value.ptr();
    auto& gx = t.grad_of(n_.parents[0]);
    for (size_t i = 0; i < n_.grad.size(); ++i) {
      const double v = static_cast<double>(vx[i]);
      const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      gx[i] += n_.grad[i] * static_cast<T>(cdf + v * pdf);
    }
  });
}

// ln(max(x, eps)); gradient is 0 where the clamp is active.
template <typename T>
Var<T> log_clamped(Var<T> x, double eps = 1e-12) {
  TensorT<T> out(x.value().shape);
  const T* px = x.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i)
    po[i] = static_cast<T>(std::log(std::max(static_cast<double>(px[i]), eps)));
  check_finite(out, "log_clamped");
  return x.tape->emplace(std::move(out), {x.id}, [eps](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    const T* vx = t.node(n_.parents[0]).value.ptr();
    auto& gx = t.grad_of(n_.parents[0]);
    for (size_t i = 0; i < n_.grad.size(); ++i) {
      const double v = static_cast<double>(vx[i]);
      if (v > eps) gx[i] += n_.grad[i] / static_cast<T>(v);
    }
  });
}

// Four-way elementwise sum that sorts its operands per element before
// adding, so the result is invariant under any permutation of the inputs.
template <typename T>
Var<T> add4_commutative(Var<T> a, Var<T> b, Var<T> c, Var<T> d) {
  require_same_shape(a, b, "add4");
  require_same_shape(a, c, "add4");
  require_same_shape(a, d, "add4");
  TensorT<T> out(a.value().shape);
  const T* p[4] = {a.value().ptr(), b.value().ptr(), c.value().ptr(), d.value().ptr()};
  T* po = out.ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    T v[4] = {p[0][i], p[1][i], p[2][i], p[3][i]};
    if (v[0] > v[1]) std::swap(v[0], v[1]);
    if (v[2] > v[3]) std::swap(v[2], v[3]);
    if (v[0] > v[2]) std::swap(v[0], v[2]);
    if (v[1] > v[3]) std::swap(v[1], v[3]);
    if (v[1] > v[2]) std::swap(v[1], v[2]);
    po[i] = ((v[0] + v[1]) + v[2]) + v[3];
  }
  check_finite(out, "add4");
  return a.tape->emplace(std::move(out), {a.id, b.id, c.id, d.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    for (int pi = 0; pi < 4; ++pi) {
      auto& gp = t.grad_of(n_.parents[static_cast<size_t>(pi)]);
      for (size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

template <typename T>
Var<T> stop_gradient(Var<T> x) {
  return x.tape->constant(x.value());
}

// y broadcast over the leading dims of x; y.shape must be a suffix of x.shape.
template <typename T>
Var<T> add_broadcast(Var<T> x, Var<T> y) {
  const Shape& xs = x.value().shape;
  const Shape& ys = y.value().shape;
  if (ys.size() > xs.size() ||
      !std::equal(ys.begin(), ys.end(), xs.end() - static_cast<long>(ys.size())))
    throw DimensionError("add_broadcast: " + shape_str(ys) + " is not a suffix of " +
                         shape_str(xs));
  TensorT<T> out(xs);
  const int64_t inner = y.value().numel();
  const int64_t outer = out.numel() / inner;
  const T* px = x.value().ptr();
  const T* py = y.value().ptr();
  T* po = out.ptr();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) po[o * inner + i] = px[o * inner + i] + py[i];
  check_finite(out, "add_broadcast");
  return x.tape->emplace(std::move(out), {x.id, y.id}, [inner, outer](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    auto& gx = t.grad_of(n_.parents[0]);
    auto& gy = t.grad_of(n_.parents[1]);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    for (int64_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (int64_t o = 0; o < outer; ++o) acc += static_cast<double>(g[static_cast<size_t>(o * inner + i)]);
      gy[static_cast<size_t>(i)] += static_cast<T>(acc);
    }
  });
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

}  // namespace ops
}  // namespace mivit
