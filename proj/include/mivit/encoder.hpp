#pragma once

#include "mivit/config.hpp"
#include "mivit/layers.hpp"

namespace mivit {

// Multi-scale alignment encoder for one modality: a conv branch shared by
// every scale, a per-scale embedding conv + adaptive max-pool down to
// s0 x s0, and a learnable per-scale mixing weight.
template <typename T>
struct EncoderBranch {
  nn::Conv2d<T> conv1, conv2;            // shared across scales
  std::vector<nn::Conv2d<T>> embeds;     // one per scale
  TensorT<T> alpha;                      // [N] scale weights
  int s0 = 0;

  EncoderBranch() = default;
  EncoderBranch(int bands, int d, int s0_, int nscales, Rng& rng)
      : conv1(bands, d, 3, 3, rng), conv2(d, d, 3, 3, rng), s0(s0_) {
    for (int k = 0; k < nscales; ++k) embeds.emplace_back(d, d, 3, 3, rng);
    alpha = TensorT<T>::full({nscales}, static_cast<T>(1.0 / nscales));
    alpha.set_requires_grad();
  }

  // cubes -> one shallow feature map per scale, spatial extent preserved
  std::vector<Var<T>> encode_branch(Tape<T>& t, const std::vector<Var<T>>& cubes) {
    if (cubes.size() != embeds.size())
      throw ConfigError("encoder: got " + std::to_string(cubes.size()) + " cubes, expected " +
                        std::to_string(embeds.size()));
    std::vector<Var<T>> out;
    out.reserve(cubes.size());
    for (auto& cube : cubes)
      out.push_back(ops::relu(conv2(t, ops::relu(conv1(t, cube)))));
    return out;
  }

  // per-scale embedding, all scales aligned to s0 x s0 x d
  std::vector<Var<T>> embed_align(Tape<T>& t, const std::vector<Var<T>>& shallow) {
    std::vector<Var<T>> out;
    out.reserve(shallow.size());
    for (size_t k = 0; k < shallow.size(); ++k) {
      const Shape& s = shallow[k].value().shape;
      if (s[2] < s0 || s[3] < s0)
        throw ConfigError("encoder: scale " + std::to_string(k) + " extent " +
                          std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                          " pools below s0=" + std::to_string(s0));
      out.push_back(ops::adaptive_maxpool2d(ops::relu(embeds[k](t, shallow[k])), s0));
    }
    return out;
  }

  // plain weighted sum over scales; alpha receives gradients
  Var<T> fuse_scales(Tape<T>& t, const std::vector<Var<T>>& feats) {
    if (feats.size() != embeds.size()) throw ConfigError("encoder: scale count mismatch");
    for (size_t k = 1; k < feats.size(); ++k)
      ops::require_same_shape(feats[0], feats[k], "fuse_scales");
    Var<T> a = t.leaf(alpha);
    Var<T> acc = ops::mul_scalar_tensor(feats[0], ops::slice(a, 0, 0, 1));
    for (size_t k = 1; k < feats.size(); ++k)
      acc = ops::add(acc, ops::mul_scalar_tensor(feats[k], ops::slice(a, 0, static_cast<int>(k), 1)));
    return acc;
  }

  Var<T> forward(Tape<T>& t, const std::vector<Var<T>>& cubes) {
    return fuse_scales(t, embed_align(t, encode_branch(t, cubes)));
  }

  void collect(Registry<T>& r, const std::string& p) {
    conv1.collect(r, p + ".branch.0");
    conv2.collect(r, p + ".branch.1");
    for (size_t k = 0; k < embeds.size(); ++k)
      embeds[k].collect(r, p + ".embed." + std::to_string(k));
    r.add(p + ".alpha", &alpha);
  }
};

}  // namespace mivit
