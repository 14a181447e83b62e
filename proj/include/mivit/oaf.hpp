#pragma once

#include <array>

#include "mivit/layers.hpp"

namespace mivit {

// conv(1x1, d -> d/4) + ReLU, conv(3x3) + ReLU, conv(1x1, d/4 -> d)
template <typename T>
struct Bottleneck {
  nn::Conv2d<T> reduce, mix, expand;

  Bottleneck() = default;
  Bottleneck(int d, Rng& rng)
      : reduce(d, d / 4, 1, 1, rng), mix(d / 4, d / 4, 3, 3, rng), expand(d / 4, d, 1, 1, rng) {}

  Var<T> operator()(Tape<T>& t, Var<T> x) {
    return expand(t, ops::relu(mix(t, ops::relu(reduce(t, x)))));
  }

  void collect(Registry<T>& r, const std::string& p) {
    reduce.collect(r, p + ".0");
    mix.collect(r, p + ".1");
    expand.collect(r, p + ".2");
  }
};

// Oriented attention fusion. Each gate is built from one modality's own
// bottleneck through a directional (1xk or kx1) conv and a sigmoid, then
// modulates the other modality's bottleneck, with a residual back onto the
// gating modality:
//   H1 = S(E1_h(B1(x1))) .* B2(x2) + B1(x1)      (and V1 with E1_v)
//   H2 = S(E2_h(B3(x2))) .* B4(x1) + B3(x2)      (and V2 with E2_v)
// The four attentive maps are summed (order-independent) and balanced by a
// final conv block.
template <typename T>
struct OafModule {
  Bottleneck<T> b1, b2, b3, b4;
  nn::Conv2d<T> e1h, e1v, e2h, e2v;
  nn::Conv2d<T> balance;

  OafModule() = default;
  OafModule(int d, int k, Rng& rng)
      : b1(d, rng),
        b2(d, rng),
        b3(d, rng),
        b4(d, rng),
        e1h(d, d, 1, k, rng),
        e1v(d, d, k, 1, rng),
        e2h(d, d, 1, k, rng),
        e2v(d, d, k, 1, rng),
        balance(d, d, 3, 3, rng) {}

  struct Attentive {
    Var<T> h1, v1, h2, v2;
  };

  Attentive oriented_attention(Tape<T>& t, Var<T> x1, Var<T> x2) {
    ops::require_same_shape(x1, x2, "oriented_attention");
    auto s1 = b1(t, x1);  // self bottleneck, modality 1
    auto o1 = b2(t, x2);  // other bottleneck seen by modality 1
    auto s2 = b3(t, x2);
    auto o2 = b4(t, x1);
    auto gate = [&](nn::Conv2d<T>& e, Var<T> self_b) { return ops::sigmoid(e(t, self_b)); };
    Attentive a;
    a.h1 = ops::add(ops::mul(gate(e1h, s1), o1), s1);
    a.v1 = ops::add(ops::mul(gate(e1v, s1), o1), s1);
    a.h2 = ops::add(ops::mul(gate(e2h, s2), o2), s2);
    a.v2 = ops::add(ops::mul(gate(e2v, s2), o2), s2);
    return a;
  }

  Var<T> fuse(Tape<T>& t, Var<T> h1, Var<T> v1, Var<T> h2, Var<T> v2) {
    return ops::relu(balance(t, ops::add4_commutative(h1, v1, h2, v2)));
  }

  Var<T> forward(Tape<T>& t, Var<T> x1, Var<T> x2) {
    auto a = oriented_attention(t, x1, x2);
    return fuse(t, a.h1, a.v1, a.h2, a.v2);
  }

  void collect(Registry<T>& r, const std::string& p) {
    b1.collect(r, p + ".b1");
    b2.collect(r, p + ".b2");
    b3.collect(r, p + ".b3");
    b4.collect(r, p + ".b4");
    e1h.collect(r, p + ".e1h");
    e1v.collect(r, p + ".e1v");
    e2h.collect(r, p + ".e2h");
    e2v.collect(r, p + ".e2v");
    balance.collect(r, p + ".t");
  }
};

}  // namespace mivit
