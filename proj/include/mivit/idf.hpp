#pragma once

#include "mivit/layers.hpp"

namespace mivit {

// Lightweight per-modality head: k conv layers, k maxpool layers, one
// fully-connected layer. Runs on that modality's aligned features only, so
// it stays usable when the other sensor is missing.
template <typename T>
struct ShallowClassifier {
  std::vector<nn::Conv2d<T>> convs;
  nn::Linear<T> fc;
  int width = 0, stages = 0;

  ShallowClassifier() = default;
  ShallowClassifier(int d, int width_, int stages_, int s0, int classes, Rng& rng)
      : width(width_), stages(stages_) {
    int cin = d;
    int extent = s0;
    for (int k = 0; k < stages_; ++k) {
      convs.emplace_back(cin, width_, 3, 3, rng);
      cin = width_;
      if (extent < 2)
        throw ConfigError("shallow classifier: pool stage " + std::to_string(k) +
                          " underflows spatial extent");
      extent /= 2;
    }
    fc = nn::Linear<T>(width_ * extent * extent, classes, rng);
  }

  Var<T> probs(Tape<T>& t, Var<T> phi) {
    auto x = phi;
    for (auto& conv : convs) x = ops::maxpool2d(ops::relu(conv(t, x)), 2, 2);
    const Shape& s = x.value().shape;
    x = ops::reshape(x, {s[0], s[1] * s[2] * s[3]});
    return ops::softmax(fc(t, x));
  }

  void collect(Registry<T>& r, const std::string& p) {
    for (size_t k = 0; k < convs.size(); ++k)
      convs[k].collect(r, p + ".conv." + std::to_string(k));
    fc.collect(r, p + ".fc");
  }
};

namespace idf {

// Label terms of the distribution flow: (shallow pair, fused), each a
// batch-mean cross entropy against the one-hot label.
template <typename T>
std::pair<Var<T>, Var<T>> supervised_term(Var<T> c1, Var<T> c2, Var<T> c,
                                          const std::vector<int>& labels) {
  auto shallow = ops::add(ops::nll_from_probs(c1, labels), ops::nll_from_probs(c2, labels));
  auto fused = ops::nll_from_probs(c, labels);
  return {shallow, fused};
}

// KL(C1||C) + KL(C2||C), batch mean. The teacher keeps its gradient unless
// detached.
template <typename T>
Var<T> distill_term(Tape<T>&, Var<T> c1, Var<T> c2, Var<T> c, bool detach_teacher = false) {
  Var<T> teacher = detach_teacher ? ops::stop_gradient(c) : c;
  auto kl1 = ops::mean_all(ops::kl_divergence(c1, teacher));
  auto kl2 = ops::mean_all(ops::kl_divergence(c2, teacher));
  return ops::add(kl1, kl2);
}

// L_IDF = lambda3*(D(C1,Y)+D(C2,Y)) + D(C,Y) + lambda4*(D(C1,C)+D(C2,C))
template <typename T>
Var<T> loss(Tape<T>& t, Var<T> c1, Var<T> c2, Var<T> c, const std::vector<int>& labels,
            double lambda3, double lambda4, bool detach_teacher = false) {
  auto [shallow, fused] = supervised_term(c1, c2, c, labels);
  Var<T> total = ops::add(ops::scale(shallow, lambda3), fused);
  if (lambda4 != 0.0)
    total = ops::add(total, ops::scale(distill_term(t, c1, c2, c, detach_teacher), lambda4));
  return total;
}

}  // namespace idf
}  // namespace mivit
