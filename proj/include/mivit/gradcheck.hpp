#pragma once

#include <cmath>

#include "mivit/kinkguard.hpp"
#include "mivit/ops.hpp"

namespace mivit {

struct GradCheckReport {
  double max_rel_err = 0.0;     // f64 analytic vs f64 central differences
  double f32_drift = 0.0;       // f32 backward vs f64 backward, gradient-scale relative
  int64_t coords = 0;
};

// Smallest distance of the forward pass from a ReLU kink or a pooling
// argmax switch. Central differences at h are only trustworthy when this
// margin comfortably exceeds h; harnesses re-seed below ~10*h.
template <typename Build>
double kink_margin(Build&& build, const std::vector<Tensor*>& leaves) {
  Tape<float> tape;
  std::vector<Var<float>> lv;
  lv.reserve(leaves.size());
  for (Tensor* t : leaves) lv.push_back(tape.leaf(*t));
  KinkGuard::enabled = true;
  KinkGuard::reset();
  (void)build(tape, lv);
  KinkGuard::enabled = false;
  return KinkGuard::min_margin;
}

// Checks the reverse sweep against central finite differences with the
// whole comparison recomputed in f64 (FD at f32 resolution cannot resolve
// structurally-zero gradients). `build` must be callable for float and
// double tapes and return a scalar. Per-coordinate relative error is
//   |analytic - fd| / (|analytic| + 1e-8),
// and the f32 backward is additionally required to track the f64 backward,
// reported as drift relative to each leaf's gradient scale.
template <typename Build>
GradCheckReport grad_check(Build&& build, std::vector<Tensor*> leaves, double h = 1e-3) {
  GradCheckReport rep;

  // f32 analytic pass
  for (Tensor* t : leaves) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  {
    Tape<float> tape;
    std::vector<Var<float>> lv;
    lv.reserve(leaves.size());
    for (Tensor* t : leaves) lv.push_back(tape.leaf(*t));
    Var<float> loss = build(tape, lv);
    if (loss.value().numel() != 1) throw DimensionError("grad_check: loss must be scalar");
    tape.backward(loss);
  }

  // f64 analytic pass on shadow leaves
  std::vector<TensorT<double>> shadow;
  shadow.reserve(leaves.size());
  for (Tensor* t : leaves) {
    auto d = t->template cast<double>();
    d.set_requires_grad(true);
    shadow.push_back(std::move(d));
  }
  {
    Tape<double> tape;
    std::vector<Var<double>> lv;
    lv.reserve(shadow.size());
    for (auto& t : shadow) lv.push_back(tape.leaf(t));
    tape.backward(build(tape, lv));
  }

  auto eval = [&]() -> double {
    Tape<double> tp;
    std::vector<Var<double>> lv64;
    lv64.reserve(shadow.size());
    for (auto& t : shadow) lv64.push_back(tp.leaf(t));
    return static_cast<double>(build(tp, lv64).value()[0]);
  };

  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = *shadow[li].data;
    const auto& an64 = *shadow[li].grad;
    const auto& an32 = *leaves[li]->grad;
    double scale = 0.0;
    for (double g : an64) scale = std::max(scale, std::abs(g));
    for (size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = eval();
      vals[i] = orig - h;
      const double fm = eval();
      vals[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double rel = std::abs(an64[i] - fd) / (std::abs(an64[i]) + 1e-8);
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      rep.f32_drift = std::max(rep.f32_drift, std::abs(static_cast<double>(an32[i]) - an64[i]) /
                                                  (scale + 1e-6));
      ++rep.coords;
    }
  }
  return rep;
}

}  // namespace mivit
