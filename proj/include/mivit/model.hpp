#pragma once

#include "mivit/config.hpp"
#include "mivit/encoder.hpp"
#include "mivit/iac.hpp"
#include "mivit/idf.hpp"
#include "mivit/oaf.hpp"
#include "mivit/vit.hpp"

namespace mivit {

// The full network. Parameter groups (checkpoint layout):
//   enc.m1, enc.m2, oaf, vit, cls.shallow1, cls.shallow2, cls.fused,
//   iac.mappers
// A single modality's inference path touches only enc.mX + cls.shallowX.
template <typename T>
struct MivitModel {
  ModelConfig cfg;
  uint64_t init_seed = 0;
  EncoderBranch<T> enc1, enc2;
  OafModule<T> oaf;
  VitCodec<T> vit;
  nn::Linear<T> fused_head;
  ShallowClassifier<T> shallow1, shallow2;
  Mapper<T> map1, map2, mapf;

  MivitModel(const ModelConfig& cfg_, uint64_t seed) : cfg(cfg_), init_seed(seed) {
    cfg.validate();
    Rng rng(seed ^ 0x6d69766974ull);
    enc1 = EncoderBranch<T>(cfg.bands1, cfg.d, cfg.s0, cfg.scales(), rng);
    enc2 = EncoderBranch<T>(cfg.bands2, cfg.d, cfg.s0, cfg.scales(), rng);
    oaf = OafModule<T>(cfg.d, cfg.dir_kernel, rng);
    vit = VitCodec<T>(cfg, rng);
    fused_head = nn::Linear<T>(cfg.d + cfg.d_model, cfg.classes, rng);
    shallow1 = ShallowClassifier<T>(cfg.d, cfg.shallow_width, cfg.shallow_layers, cfg.s0,
                                    cfg.classes, rng);
    shallow2 = ShallowClassifier<T>(cfg.d, cfg.shallow_width, cfg.shallow_layers, cfg.s0,
                                    cfg.classes, rng);
    map1 = Mapper<T>(cfg.d, cfg.shallow_width, cfg.s0, cfg.dz(), rng);
    map2 = Mapper<T>(cfg.d, cfg.shallow_width, cfg.s0, cfg.dz(), rng);
    mapf = Mapper<T>(cfg.d, cfg.shallow_width, cfg.s0, cfg.dz(), rng);
  }

  Registry<T> params() {
    Registry<T> r;
    enc1.collect(r, "enc.m1");
    enc2.collect(r, "enc.m2");
    oaf.collect(r, "oaf");
    vit.collect(r, "vit");
    shallow1.collect(r, "cls.shallow1");
    shallow2.collect(r, "cls.shallow2");
    fused_head.collect(r, "cls.fused");
    map1.collect(r, "iac.mappers.m1");
    map2.collect(r, "iac.mappers.m2");
    mapf.collect(r, "iac.mappers.m");
    return r;
  }

  struct Flags {
    bool shallow = true;
    bool fused = true;
    bool recon = false;
    bool iac = false;
    TraceT<T>* trace = nullptr;
  };

  struct Outputs {
    Var<T> phi_t1, phi_t2, phi_t, tokens;
    Var<T> c1, c2, c;
    Var<T> z1, z2, z;
    std::vector<Var<T>> recon_e, recon_g;
  };

  // C = softmax(linear(concat(GAP(phi_t), class_token)))
  Var<T> joint_classify(Tape<T>& t, Var<T> phi_t, Var<T> tokens) {
    auto pooled = ops::global_avgpool(phi_t);
    auto cls = vit.class_token_of(t, tokens);
    auto feat = ops::concat<T>({pooled, cls}, 1);
    return ops::softmax(fused_head(t, feat));
  }

  // e/g: one [B,bands,s,s] cube var per scale, both modalities present.
  Outputs forward(Tape<T>& t, const std::vector<Var<T>>& e, const std::vector<Var<T>>& g,
                  const Flags& f = {}) {
    Outputs o;
    o.phi_t1 = enc1.forward(t, e);
    o.phi_t2 = enc2.forward(t, g);
    o.phi_t = oaf.forward(t, o.phi_t1, o.phi_t2);
    if (f.fused || f.recon) {
      o.tokens = vit.encode(t, o.phi_t, f.trace);
      o.c = joint_classify(t, o.phi_t, o.tokens);
    }
    if (f.shallow) {
      o.c1 = shallow1.probs(t, o.phi_t1);
      o.c2 = shallow2.probs(t, o.phi_t2);
    }
    if (f.iac) {
      o.z1 = map1(t, o.phi_t1);
      o.z2 = map2(t, o.phi_t2);
      o.z = mapf(t, o.phi_t);
    }
    if (f.recon) {
      auto r = vit.decode(t, o.tokens, f.trace);
      o.recon_e = std::move(r.e);
      o.recon_g = std::move(r.g);
    }
    return o;
  }

  // Single-modality path: encoder branch + shallow head only; never touches
  // the other modality or the fusion stack.
  Var<T> forward_modality(Tape<T>& t, int modality, const std::vector<Var<T>>& cubes) {
    if (modality == 1) return shallow1.probs(t, enc1.forward(t, cubes));
    if (modality == 2) return shallow2.probs(t, enc2.forward(t, cubes));
    throw ConfigError("forward_modality: modality must be 1 or 2");
  }
};

// Structure-preserving precision cast (used by the FD oracle).
template <typename U, typename T>
MivitModel<U> cast_model(MivitModel<T>& src) {
  MivitModel<U> dst(src.cfg, src.init_seed);
  auto rs = src.params();
  auto rd = dst.params();
  if (rs.entries.size() != rd.entries.size()) throw ConfigError("cast_model: registry mismatch");
  for (size_t i = 0; i < rs.entries.size(); ++i) {
    auto& [ns, ts] = rs.entries[i];
    auto& [nd, td] = rd.entries[i];
    if (ns != nd) throw ConfigError("cast_model: parameter order mismatch at " + ns);
    for (int64_t j = 0; j < ts->numel(); ++j)
      (*td->data)[static_cast<size_t>(j)] = static_cast<U>((*ts->data)[static_cast<size_t>(j)]);
  }
  return dst;
}

}  // namespace mivit
