#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mivit/gradcheck.hpp"
#include "mivit/metrics.hpp"
#include "mivit/model.hpp"

using namespace mivit;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.classes = 3;
  cfg.bands1 = 2;
  cfg.bands2 = 1;
  cfg.cube_sizes = {2, 4};
  cfg.d = 4;
  cfg.s0 = 2;
  cfg.d_model = 8;
  cfg.vit_blocks = 1;
  cfg.heads = 2;
  cfg.shallow_layers = 1;
  return cfg;
}

template <typename T>
TensorT<T> dist_rows(Rng& rng, int bsz, int d) {
  TensorT<T> t({bsz, d});
  for (int b = 0; b < bsz; ++b) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = rng.uniform() + 1e-3;
      (*t.data)[static_cast<size_t>(b) * d + j] = static_cast<T>(v);
      s += v;
    }
    for (int j = 0; j < d; ++j)
      (*t.data)[static_cast<size_t>(b) * d + j] = static_cast<T>(
          static_cast<double>((*t.data)[static_cast<size_t>(b) * d + j]) / s);
  }
  return t;
}

}  // namespace

TEST_CASE("shallow classifier: zero input and zero-initialized head give uniform output") {
  Rng rng(1);
  ShallowClassifier<float> cls(4, 3, 1, 2, 3, rng);
  std::fill(cls.fc.w.data->begin(), cls.fc.w.data->end(), 0.0f);
  Tensor phi = Tensor::zeros({2, 4, 2, 2});
  Tape<float> t;
  auto c = cls.probs(t, t.leaf(phi));
  REQUIRE(c.value().shape == Shape{2, 3});
  for (int64_t i = 0; i < c.value().numel(); ++i)
    CHECK(c.value()[i] == doctest::Approx(1.0 / 3).epsilon(1e-6));
}

TEST_CASE("shallow classifier: simplex contract and stage plan at the default shape") {
  Rng rng(2);
  ShallowClassifier<float> cls(8, 4, 3, 8, 5, rng);  // 8x8 -> 4 -> 2 -> 1
  Tensor phi = Tensor::uniform({4, 8, 8, 8}, rng, -2, 2);
  Tape<float> t;
  auto c = cls.probs(t, t.leaf(phi));
  REQUIRE(c.value().shape == Shape{4, 5});
  for (int b = 0; b < 4; ++b) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) s += static_cast<double>(c.value()[b * 5 + j]);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("supervised term: exact one-hot output costs (almost) nothing") {
  Tape<float> t;
  Tensor c1({2, 3}, {1, 0, 0, 0, 1, 0});
  Tensor c2 = c1.clone();
  Tensor c = c1.clone();
  auto [shallow, fused] = idf::supervised_term(t.leaf(c1), t.leaf(c2), t.leaf(c), {0, 1});
  CHECK(std::abs(shallow.value()[0]) < 1e-9);
  CHECK(std::abs(fused.value()[0]) < 1e-9);
}

TEST_CASE("supervised term: uniform output over 4 classes costs ln 4") {
  Tape<float> t;
  Tensor c = Tensor::full({2, 4}, 0.25f);
  auto [shallow, fused] = idf::supervised_term(t.leaf(c), t.leaf(c), t.leaf(c), {1, 3});
  CHECK(fused.value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  CHECK(shallow.value()[0] == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("supervised term: batch mean matches the scalar-loop oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int bsz = 2 + static_cast<int>(rng.below(6));
    const int c = 2 + static_cast<int>(rng.below(4));
    TensorT<double> p1 = dist_rows<double>(rng, bsz, c);
    TensorT<double> p2 = dist_rows<double>(rng, bsz, c);
    TensorT<double> pf = dist_rows<double>(rng, bsz, c);
    std::vector<int> y(static_cast<size_t>(bsz));
    for (auto& v : y) v = static_cast<int>(rng.below(c));

    Tape<double> t;
    auto [shallow, fused] = idf::supervised_term(t.leaf(p1), t.leaf(p2), t.leaf(pf), y);

    double o1 = 0.0, o2 = 0.0, of = 0.0;
    for (int b = 0; b < bsz; ++b) {
      o1 -= std::log((*p1.data)[static_cast<size_t>(b) * c + y[static_cast<size_t>(b)]]);
      o2 -= std::log((*p2.data)[static_cast<size_t>(b) * c + y[static_cast<size_t>(b)]]);
      of -= std::log((*pf.data)[static_cast<size_t>(b) * c + y[static_cast<size_t>(b)]]);
    }
    CHECK(std::abs(shallow.value()[0] - (o1 + o2) / bsz) < 1e-8);
    CHECK(std::abs(fused.value()[0] - of / bsz) < 1e-8);
  }
}

TEST_CASE("supervised term: out-of-range label raises a data error") {
  Tape<float> t;
  Tensor c = Tensor::full({1, 3}, 1.0f / 3);
  CHECK_THROWS_AS(idf::supervised_term(t.leaf(c), t.leaf(c), t.leaf(c), {3}), DataError);
}

TEST_CASE("distill term: closed forms") {
  Tape<float> t;
  {
    Tensor c = Tensor::full({1, 2}, 0.5f);
    auto d = idf::distill_term(t, t.leaf(c), t.leaf(c), t.leaf(c));
    CHECK(std::abs(d.value()[0]) < 1e-9);
  }
  {
    Tensor c1({1, 2}, {1.0f, 0.0f});
    Tensor cf = Tensor::full({1, 2}, 0.5f);
    auto d = idf::distill_term(t, t.leaf(c1), t.leaf(cf), t.leaf(cf));
    CHECK(d.value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }
}

TEST_CASE("distill term: matches the two-call KL oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const int bsz = 3, c = 4;
    TensorT<double> p1 = dist_rows<double>(rng, bsz, c);
    TensorT<double> p2 = dist_rows<double>(rng, bsz, c);
    TensorT<double> pf = dist_rows<double>(rng, bsz, c);
    Tape<double> t;
    auto v1 = t.leaf(p1), v2 = t.leaf(p2), vf = t.leaf(pf);
    const double got = idf::distill_term(t, v1, v2, vf).value()[0];
    const double oracle = ops::mean_all(ops::kl_divergence(v1, vf)).value()[0] +
                          ops::mean_all(ops::kl_divergence(v2, vf)).value()[0];
    CHECK(std::abs(got - oracle) < 1e-9);
  }
}

TEST_CASE("idf loss: perfect one-hot outputs cost nothing; composition holds") {
  Tape<float> t;
  Tensor hot({2, 3}, {1, 0, 0, 0, 0, 1});
  auto v = t.leaf(hot);
  auto loss = idf::loss(t, v, v, v, {0, 2}, 1.0, 0.1);
  CHECK(std::abs(loss.value()[0]) < 1e-9);

  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int bsz = 4, c = 3;
    TensorT<double> p1 = dist_rows<double>(rng, bsz, c);
    TensorT<double> p2 = dist_rows<double>(rng, bsz, c);
    TensorT<double> pf = dist_rows<double>(rng, bsz, c);
    std::vector<int> y = {0, 1, 2, 1};
    Tape<double> td;
    auto v1 = td.leaf(p1), v2 = td.leaf(p2), vf = td.leaf(pf);
    const double lambda3 = 0.7, lambda4 = 0.3;
    const double got = idf::loss(td, v1, v2, vf, y, lambda3, lambda4).value()[0];
    auto [shallow, fused] = idf::supervised_term(v1, v2, vf, y);
    const double oracle = lambda3 * shallow.value()[0] + fused.value()[0] +
                          lambda4 * idf::distill_term(td, v1, v2, vf).value()[0];
    CHECK(std::abs(got - oracle) < 1e-8);
    CHECK(got >= -1e-9);
  }
}

TEST_CASE("idf loss: lambda3=lambda4=0 reduces to the fused cross entropy") {
  Rng rng(6);
  TensorT<double> p1 = dist_rows<double>(rng, 3, 4);
  TensorT<double> p2 = dist_rows<double>(rng, 3, 4);
  TensorT<double> pf = dist_rows<double>(rng, 3, 4);
  std::vector<int> y = {1, 0, 3};
  Tape<double> t;
  auto vf = t.leaf(pf);
  const double got = idf::loss(t, t.leaf(p1), t.leaf(p2), vf, y, 0.0, 0.0).value()[0];
  const double ce = ops::nll_from_probs(vf, y).value()[0];
  CHECK(std::abs(got - ce) < 1e-12);
}

TEST_CASE("idf loss: gradients through softmax logits pass the FD check") {
  Rng rng(7);
  Tensor l1 = Tensor::uniform({3, 4}, rng, -1, 1);
  Tensor l2 = Tensor::uniform({3, 4}, rng, -1, 1);
  Tensor lf = Tensor::uniform({3, 4}, rng, -1, 1);
  std::vector<int> y = {0, 2, 3};
  auto rep = grad_check(
      [&]<typename T>(Tape<T>& t, std::vector<Var<T>>& L) {
        return idf::loss(t, ops::softmax(L[0]), ops::softmax(L[1]), ops::softmax(L[2]), y, 1.0,
                         0.1);
      },
      {&l1, &l2, &lf});
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("idf loss: detached teacher blocks gradient into the fused logits' distill share") {
  Rng rng(8);
  Tensor l1 = Tensor::uniform({3, 4}, rng, -1, 1);
  Tensor lf = Tensor::uniform({3, 4}, rng, -1, 1);
  l1.set_requires_grad();
  lf.set_requires_grad();

  auto distill_grad_f = [&](bool detach) {
    l1.zero_grad();
    lf.zero_grad();
    Tape<float> t;
    auto c1 = ops::softmax(t.leaf(l1));
    auto cf = ops::softmax(t.leaf(lf));
    t.backward(idf::distill_term(t, c1, c1, cf, detach));
    std::vector<float> g = *lf.grad;
    return g;
  };
  auto g_detached = distill_grad_f(true);
  auto g_live = distill_grad_f(false);
  bool all_zero = true, any_nonzero = false;
  for (auto g : g_detached) all_zero = all_zero && g == 0.0f;
  for (auto g : g_live) any_nonzero = any_nonzero || g != 0.0f;
  CHECK(all_zero);
  CHECK(any_nonzero);
}

TEST_CASE("missing modality: the single-modality path ignores the other branch entirely") {
  ModelConfig cfg = tiny_cfg();
  MivitModel<float> model(cfg, 42);
  Rng rng(9);
  std::vector<Tensor> cubes = {Tensor::uniform({2, 2, 2, 2}, rng, 0, 1),
                               Tensor::uniform({2, 2, 4, 4}, rng, 0, 1)};
  auto run = [&] {
    Tape<float> t;
    std::vector<Var<float>> cv;
    for (auto& c : cubes) cv.push_back(t.leaf(c));
    auto probs = model.forward_modality(t, 1, cv);
    std::vector<float> out(probs.value().ptr(), probs.value().ptr() + probs.value().numel());
    return out;
  };
  auto before = run();
  // scribble all over modality 2 and the fusion stack
  Registry<float> reg;
  model.enc2.collect(reg, "enc.m2");
  model.oaf.collect(reg, "oaf");
  model.vit.collect(reg, "vit");
  model.shallow2.collect(reg, "cls.shallow2");
  for (auto& [name, tensor] : reg.entries)
    for (auto& v : *tensor->data) v = 123.0f;
  auto after = run();
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("missing modality: zero-initialized model predicts uniformly, ties break low") {
  ModelConfig cfg = tiny_cfg();
  MivitModel<float> model(cfg, 1);
  Registry<float> reg = model.params();
  for (auto& [name, tensor] : reg.entries)
    std::fill(tensor->data->begin(), tensor->data->end(), 0.0f);
  Rng rng(10);
  std::vector<Tensor> cubes = {Tensor::uniform({3, 2, 2, 2}, rng, 0, 1),
                               Tensor::uniform({3, 2, 4, 4}, rng, 0, 1)};
  Tape<float> t;
  std::vector<Var<float>> cv;
  for (auto& c : cubes) cv.push_back(t.leaf(c));
  auto probs = model.forward_modality(t, 1, cv);
  for (int b = 0; b < 3; ++b) {
    for (int j = 0; j < cfg.classes; ++j)
      CHECK(probs.value()[b * cfg.classes + j] == doctest::Approx(1.0 / cfg.classes).epsilon(1e-6));
    CHECK(argmax_lowest(probs.value().ptr() + b * cfg.classes, cfg.classes) == 0);
  }
}

TEST_CASE("argmax tie-break picks the lowest index on constructed ties") {
  const float row1[4] = {0.25f, 0.25f, 0.25f, 0.25f};
  const float row2[4] = {0.1f, 0.4f, 0.4f, 0.1f};
  const float row3[4] = {0.4f, 0.1f, 0.1f, 0.4f};
  CHECK(argmax_lowest(row1, 4) == 0);
  CHECK(argmax_lowest(row2, 4) == 1);
  CHECK(argmax_lowest(row3, 4) == 0);
}
