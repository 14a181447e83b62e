#pragma once

#include "mivit/config.hpp"
#include "mivit/layers.hpp"

namespace mivit {

// Transformer encoder over the fused map plus a mirrored decoder whose
// mean-pooled tokens drive per-scale, per-modality reconstruction heads.
// Token layout: [class token | one token per spatial position of phi_t].
template <typename T>
struct VitCodec {
  nn::Linear<T> tok_proj;
  TensorT<T> pos;        // [tokens, d_model]
  TensorT<T> cls_token;  // [d_model]
  std::vector<nn::TransformerBlock<T>> enc_blocks, dec_blocks;
  nn::LayerNorm<T> enc_norm, dec_norm;
  std::vector<nn::Linear<T>> recon_e, recon_g;  // per scale
  int d = 0, d_model = 0, s0 = 0;
  std::vector<int> cube_sizes;
  int bands1 = 0, bands2 = 0;

  VitCodec() = default;
  VitCodec(const ModelConfig& cfg, Rng& rng)
      : tok_proj(cfg.d, cfg.d_model, rng),
        d(cfg.d),
        d_model(cfg.d_model),
        s0(cfg.s0),
        cube_sizes(cfg.cube_sizes),
        bands1(cfg.bands1),
        bands2(cfg.bands2) {
    pos = TensorT<T>::normal({cfg.tokens(), cfg.d_model}, rng, 0.02);
    cls_token = TensorT<T>::normal({cfg.d_model}, rng, 0.02);
    pos.set_requires_grad();
    cls_token.set_requires_grad();
    for (int l = 0; l < cfg.vit_blocks; ++l) {
      enc_blocks.emplace_back(cfg.d_model, cfg.heads, cfg.mlp_ratio, rng);
      dec_blocks.emplace_back(cfg.d_model, cfg.heads, cfg.mlp_ratio, rng);
    }
    enc_norm = nn::LayerNorm<T>(cfg.d_model);
    dec_norm = nn::LayerNorm<T>(cfg.d_model);
    for (int s : cfg.cube_sizes) {
      recon_e.emplace_back(cfg.d_model, s * s * cfg.bands1, rng);
      recon_g.emplace_back(cfg.d_model, s * s * cfg.bands2, rng);
    }
  }

  // phi_t [B,d,s0,s0] -> tokens [B, s0*s0+1, d_model]
  Var<T> encode(Tape<T>& t, Var<T> phi_t, TraceT<T>* trace = nullptr) {
    const Shape& s = phi_t.value().shape;
    if (s.size() != 4 || s[1] != d || s[2] != s0 || s[3] != s0)
      throw DimensionError("vit: expected [B," + std::to_string(d) + "," + std::to_string(s0) +
                           "," + std::to_string(s0) + "], got " + shape_str(s));
    const int bsz = s[0];
    auto grid = ops::permute(ops::reshape(phi_t, {bsz, d, s0 * s0}), {0, 2, 1});
    auto tok = tok_proj(t, grid);  // [B, s0*s0, d_model]
    auto cls = ops::reshape(ops::broadcast_to_batch(t.leaf(cls_token), bsz), {bsz, 1, d_model});
    auto x = ops::concat<T>({cls, tok}, 1);
    x = ops::add_broadcast(x, t.leaf(pos));
    for (size_t l = 0; l < enc_blocks.size(); ++l)
      x = enc_blocks[l](t, x, trace, "vit.enc." + std::to_string(l));
    return enc_norm(t, x);
  }

  Var<T> class_token_of(Tape<T>&, Var<T> tokens) { return ops::reshape(ops::slice(tokens, 1, 0, 1), {tokens.value().shape[0], d_model}); }

  struct Recons {
    std::vector<Var<T>> e, g;
  };

  Recons decode(Tape<T>& t, Var<T> tokens, TraceT<T>* trace = nullptr) {
    auto x = tokens;
    for (size_t l = 0; l < dec_blocks.size(); ++l)
      x = dec_blocks[l](t, x, trace, "vit.dec." + std::to_string(l));
    x = dec_norm(t, x);
    auto pooled = ops::mean_axis(x, 1);  // [B, d_model]
    const int bsz = tokens.value().shape[0];
    Recons r;
    for (size_t k = 0; k < cube_sizes.size(); ++k) {
      const int sz = cube_sizes[k];
      r.e.push_back(ops::reshape(recon_e[k](t, pooled), {bsz, bands1, sz, sz}));
      r.g.push_back(ops::reshape(recon_g[k](t, pooled), {bsz, bands2, sz, sz}));
    }
    return r;
  }

  void collect(Registry<T>& r, const std::string& p) {
    tok_proj.collect(r, p + ".tokproj");
    r.add(p + ".pos", &pos);
    r.add(p + ".cls", &cls_token);
    for (size_t l = 0; l < enc_blocks.size(); ++l)
      enc_blocks[l].collect(r, p + ".enc." + std::to_string(l));
    enc_norm.collect(r, p + ".enc_norm");
    for (size_t l = 0; l < dec_blocks.size(); ++l)
      dec_blocks[l].collect(r, p + ".dec." + std::to_string(l));
    dec_norm.collect(r, p + ".dec_norm");
    for (size_t k = 0; k < recon_e.size(); ++k) {
      recon_e[k].collect(r, p + ".recon_e." + std::to_string(k));
      recon_g[k].collect(r, p + ".recon_g." + std::to_string(k));
    }
  }
};

}  // namespace mivit
