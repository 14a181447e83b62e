#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mivit/ops.hpp"
#include "mivit/rng.hpp"

namespace mivit {

// Flat named-parameter registry. Collection order is construction order,
// which fixes the optimizer update order and the checkpoint layout.
template <typename T>
struct Registry {
  std::vector<std::pair<std::string, TensorT<T>*>> entries;

  void add(const std::string& name, TensorT<T>* t) { entries.push_back({name, t}); }

  int64_t total_params() const {
    int64_t n = 0;
    for (auto& [name, t] : entries) n += t->numel();
    return n;
  }

  TensorT<T>* find(const std::string& name) const {
    for (auto& [n, t] : entries)
      if (n == name) return t;
    return nullptr;
  }
};

// Named intermediate values captured during a forward pass (attention
// probabilities and the like), for tests and feature export.
template <typename T>
struct TraceT {
  std::vector<std::pair<std::string, TensorT<T>>> items;

  void add(const std::string& name, const TensorT<T>& v) { items.push_back({name, v}); }

  const TensorT<T>* find(const std::string& name) const {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }
};

using Trace = TraceT<float>;

namespace nn {

inline double he_bound(int fan_in) { return std::sqrt(6.0 / fan_in); }

template <typename T>
struct Conv2d {
  TensorT<T> w, b;
  int stride = 1, ph = 0, pw = 0;

  Conv2d() = default;
  Conv2d(int cin, int cout, int kh, int kw, Rng& rng, int stride_ = 1, int ph_ = -1, int pw_ = -1)
      : stride(stride_), ph(ph_ < 0 ? kh / 2 : ph_), pw(pw_ < 0 ? kw / 2 : pw_) {
    const double bound = he_bound(cin * kh * kw);
    w = TensorT<T>::uniform({cout, cin, kh, kw}, rng, -bound, bound);
    b = TensorT<T>::zeros({cout});
    w.set_requires_grad();
    b.set_requires_grad();
  }

  Var<T> operator()(Tape<T>& t, Var<T> x) {
    return ops::conv2d(x, t.leaf(w), t.leaf(b), stride, ph, pw);
  }

  void collect(Registry<T>& r, const std::string& p) {
    r.add(p + ".w", &w);
    r.add(p + ".b", &b);
  }
};

template <typename T>
struct Linear {
  TensorT<T> w, b;

  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    const double bound = he_bound(in);
    w = TensorT<T>::uniform({out, in}, rng, -bound, bound);
    b = TensorT<T>::zeros({out});
    w.set_requires_grad();
    b.set_requires_grad();
  }

  Var<T> operator()(Tape<T>& t, Var<T> x) { return ops::linear(x, t.leaf(w), t.leaf(b)); }

  void collect(Registry<T>& r, const std::string& p) {
    r.add(p + ".w", &w);
    r.add(p + ".b", &b);
  }
};

template <typename T>
struct LayerNorm {
  TensorT<T> gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(int d) {
    gamma = TensorT<T>::full({d}, T(1));
    beta = TensorT<T>::zeros({d});
    gamma.set_requires_grad();
    beta.set_requires_grad();
  }

  Var<T> operator()(Tape<T>& t, Var<T> x) {
    return ops::layer_norm(x, t.leaf(gamma), t.leaf(beta));
  }

  void collect(Registry<T>& r, const std::string& p) {
    r.add(p + ".g", &gamma);
    r.add(p + ".b", &beta);
  }
};

// Pre-LN transformer block: MHA + residual, then MLP + residual.
template <typename T>
struct TransformerBlock {
  LayerNorm<T> ln1, ln2;
  Linear<T> wq, wk, wv, wo, fc1, fc2;
  int heads = 1, d_model = 0;

  TransformerBlock() = default;
  TransformerBlock(int d_model_, int heads_, int mlp_ratio, Rng& rng)
      : ln1(d_model_),
        ln2(d_model_),
        wq(d_model_, d_model_, rng),
        wk(d_model_, d_model_, rng),
        wv(d_model_, d_model_, rng),
        wo(d_model_, d_model_, rng),
        fc1(d_model_, d_model_ * mlp_ratio, rng),
        fc2(d_model_ * mlp_ratio, d_model_, rng),
        heads(heads_),
        d_model(d_model_) {
    if (d_model_ % heads_ != 0)
      throw ConfigError("transformer: head count " + std::to_string(heads_) +
                        " must divide d_model " + std::to_string(d_model_));
  }

  // x: [B, T, D]
  Var<T> operator()(Tape<T>& t, Var<T> x, TraceT<T>* trace = nullptr,
                    const std::string& tag = "") {
    const int bsz = x.value().shape[0];
    const int tok = x.value().shape[1];
    const int dh = d_model / heads;

    auto h = ln1(t, x);
    auto split = [&](Var<T> y) {
      // [B,T,D] -> [B,H,T,dh]
      return ops::permute(ops::reshape(y, {bsz, tok, heads, dh}), {0, 2, 1, 3});
    };
    auto qh = split(wq(t, h));
    auto kh = split(wk(t, h));
    auto vh = split(wv(t, h));
    auto scores = ops::scale(ops::matmul(qh, ops::permute(kh, {0, 1, 3, 2})),
                             1.0 / std::sqrt(static_cast<double>(dh)));
    auto probs = ops::softmax(scores);  // [B,H,T,T]
    if (trace) trace->add(tag + ".attn", probs.value());
    auto ctx = ops::matmul(probs, vh);  // [B,H,T,dh]
    auto merged = ops::reshape(ops::permute(ctx, {0, 2, 1, 3}), {bsz, tok, d_model});
    x = ops::add(x, wo(t, merged));

    auto m = ln2(t, x);
    x = ops::add(x, fc2(t, ops::gelu(fc1(t, m))));
    return x;
  }

  void collect(Registry<T>& r, const std::string& p) {
    ln1.collect(r, p + ".ln1");
    ln2.collect(r, p + ".ln2");
    wq.collect(r, p + ".q");
    wk.collect(r, p + ".k");
    wv.collect(r, p + ".v");
    wo.collect(r, p + ".o");
    fc1.collect(r, p + ".fc1");
    fc2.collect(r, p + ".fc2");
  }
};

}  // namespace nn
}  // namespace mivit
