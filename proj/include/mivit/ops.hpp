#pragma once

#include "mivit/ops_elementwise.hpp"
#include "mivit/ops_linalg.hpp"
#include "mivit/ops_reduce.hpp"
#include "mivit/ops_shape.hpp"

namespace mivit {
namespace ops {

constexpr double kLogEps = 1e-12;  // clamp inside every log

template <typename T>
Var<T> sum_lastaxis(Var<T> x) {
  return sum_axis(x, static_cast<int>(x.value().shape.size()) - 1);
}

template <typename T>
void require_distribution_rows(const Var<T>& p, const char* op) {
  const int64_t d = p.value().shape.back();
  const int64_t rows = p.value().numel() / d;
  const T* pp = p.value().ptr();
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t i = 0; i < d; ++i) s += static_cast<double>(pp[r * d + i]);
    if (std::abs(s - 1.0) > 1e-5)
      throw DataError(std::string(op) + ": input row " + std::to_string(r) +
                      " is not a distribution (sum=" + std::to_string(s) + ")");
  }
}

// KL(p||q) = sum p * ln(max(p,eps)/max(q,eps)) over the trailing axis,
// in nats. Differentiable in both arguments.
template <typename T>
Var<T> kl_divergence(Var<T> p, Var<T> q) {
  require_same_shape(p, q, "kl_divergence");
  require_distribution_rows(p, "kl_divergence");
  require_distribution_rows(q, "kl_divergence");
  return sum_lastaxis(mul(p, sub(log_clamped(p, kLogEps), log_clamped(q, kLogEps))));
}

// CE(p,q) = -sum p * ln(max(q,eps)) over the trailing axis, in nats.
template <typename T>
Var<T> cross_entropy_dist(Var<T> p, Var<T> q) {
  require_same_shape(p, q, "cross_entropy_dist");
  require_distribution_rows(p, "cross_entropy_dist");
  require_distribution_rows(q, "cross_entropy_dist");
  return scale(sum_lastaxis(mul(p, log_clamped(q, kLogEps))), -1.0);
}

// H(p) = -sum p * ln(max(p,eps)) over the trailing axis.
template <typename T>
Var<T> entropy(Var<T> p) {
  return scale(sum_lastaxis(mul(p, log_clamped(p, kLogEps))), -1.0);
}

// Mean over the batch of -ln(probs[b, labels[b]]).
template <typename T>
Var<T> nll_from_probs(Var<T> probs, const std::vector<int>& labels) {
  const Shape& ps = probs.value().shape;
  if (ps.size() != 2) throw DimensionError("nll_from_probs: probs must be [B,c]");
  const int bsz = ps[0], c = ps[1];
  if (static_cast<int>(labels.size()) != bsz)
    throw DimensionError("nll_from_probs: batch/label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= c)
      throw DataError("nll_from_probs: label " + std::to_string(y) + " outside [0," +
                      std::to_string(c) + ")");
  const T* pp = probs.value().ptr();
  double acc = 0.0;
  for (int b = 0; b < bsz; ++b)
    acc -= std::log(std::max(static_cast<double>(pp[static_cast<int64_t>(b) * c + labels[static_cast<size_t>(b)]]), kLogEps));
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc / bsz));
  check_finite(out, "nll_from_probs");
  auto lab = std::make_shared<std::vector<int>>(labels);
  return probs.tape->emplace(std::move(out), {probs.id}, [lab, bsz, c](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    const double g = static_cast<double>(n_.grad[0]) / bsz;
    const T* pv = t.node(n_.parents[0]).value.ptr();
    auto& gx = t.grad_of(n_.parents[0]);
    for (int b = 0; b < bsz; ++b) {
      const int64_t idx = static_cast<int64_t>(b) * c + (*lab)[static_cast<size_t>(b)];
      const double p = static_cast<double>(pv[idx]);
      if (p > kLogEps) gx[static_cast<size_t>(idx)] -= static_cast<T>(g / p);
    }
  });
}

// sum over all entries of (a-b)^2
template <typename T>
Var<T> squared_error_sum(Var<T> a, Var<T> b) {
  Var<T> d = sub(a, b);
  return sum_all(mul(d, d));
}

template <typename T>
T scalar_value(Var<T> v) {
  if (v.value().numel() != 1) throw DimensionError("scalar_value: tensor is not scalar");
  return v.value()[0];
}

}  // namespace ops
}  // namespace mivit
