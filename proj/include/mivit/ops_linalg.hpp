#pragma once

#include <limits>
#include <memory>

#include "mivit/gemm.hpp"
#include "mivit/kinkguard.hpp"
#include "mivit/tape.hpp"

namespace mivit {
namespace ops {

// Batched matmul: [..., M, K] x [..., K, N] -> [..., M, N] with identical
// leading dims.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Shape& as = a.value().shape;
  const Shape& bs = b.value().shape;
  if (as.size() < 2 || bs.size() != as.size())
    throw DimensionError("matmul: need equal-rank inputs of rank >= 2, got " + shape_str(as) +
                         " and " + shape_str(bs));
  const int rank = static_cast<int>(as.size());
  for (int d = 0; d < rank - 2; ++d)
    if (as[static_cast<size_t>(d)] != bs[static_cast<size_t>(d)])
      throw DimensionError("matmul: leading dim mismatch at axis " + std::to_string(d));
  const int m = as[static_cast<size_t>(rank - 2)];
  const int k = as[static_cast<size_t>(rank - 1)];
  const int k2 = bs[static_cast<size_t>(rank - 2)];
  const int n = bs[static_cast<size_t>(rank - 1)];
  if (k != k2)
    throw DimensionError("matmul: inner dims disagree (" + std::to_string(k) + " vs " +
                         std::to_string(k2) + ")");
  int64_t batch = 1;
  for (int d = 0; d < rank - 2; ++d) batch *= as[static_cast<size_t>(d)];

  Shape os = as;
  os[static_cast<size_t>(rank - 1)] = n;
  TensorT<T> out(os);
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  T* po = out.ptr();
  for (int64_t i = 0; i < batch; ++i)
    gemm(pa + i * m * k, pb + i * static_cast<int64_t>(k) * n, po + i * static_cast<int64_t>(m) * n,
         m, k, n, false);
  check_finite(out, "matmul");
  return a.tape->emplace(
      std::move(out), {a.id, b.id}, [batch, m, k, n](Tape<T>& t, int self) {
        auto& n_ = t.node(self);
        auto& g = n_.grad;
        const T* va = t.node(n_.parents[0]).value.ptr();
        const T* vb = t.node(n_.parents[1]).value.ptr();
        auto& ga = t.grad_of(n_.parents[0]);
        auto& gb = t.grad_of(n_.parents[1]);
        std::vector<T> bt(static_cast<size_t>(k) * n), at(static_cast<size_t>(m) * k);
        for (int64_t i = 0; i < batch; ++i) {
          const T* gi = g.data() + i * static_cast<int64_t>(m) * n;
          // dA += g * B^T
          transpose(vb + i * static_cast<int64_t>(k) * n, bt.data(), k, n);
          gemm(gi, bt.data(), ga.data() + i * static_cast<int64_t>(m) * k, m, n, k, true);
          // dB += A^T * g
          transpose(va + i * static_cast<int64_t>(m) * k, at.data(), m, k);
          gemm(at.data(), gi, gb.data() + i * static_cast<int64_t>(k) * n, k, m, n, true);
        }
      });
}

// y = x * w^T + b with x [..., in], w [out, in], b [out].
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  const Shape& xs = x.value().shape;
  const Shape& ws = w.value().shape;
  if (ws.size() != 2) throw DimensionError("linear: weight must be 2-d [out,in]");
  const int in = ws[1];
  const int out_f = ws[0];
  if (xs.empty() || xs.back() != in)
    throw DimensionError("linear: input features " + shape_str(xs) + " do not match weight " +
                         shape_str(ws));
  if (b.value().numel() != out_f) throw DimensionError("linear: bias size mismatch");
  const int64_t rows = x.value().numel() / in;

  Shape os = xs;
  os.back() = out_f;
  TensorT<T> outt(os);
  {
    std::vector<T> wt(static_cast<size_t>(in) * out_f);
    transpose(w.value().ptr(), wt.data(), out_f, in);
    gemm(x.value().ptr(), wt.data(), outt.ptr(), static_cast<int>(rows), in, out_f, false);
  }
  const T* pb = b.value().ptr();
  T* po = outt.ptr();
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < out_f; ++j) po[r * out_f + j] += pb[j];
  check_finite(outt, "linear");

  return x.tape->emplace(
      std::move(outt), {x.id, w.id, b.id}, [rows, in, out_f](Tape<T>& t, int self) {
        auto& n_ = t.node(self);
        auto& g = n_.grad;
        const T* vx = t.node(n_.parents[0]).value.ptr();
        const T* vw = t.node(n_.parents[1]).value.ptr();
        auto& gx = t.grad_of(n_.parents[0]);
        auto& gw = t.grad_of(n_.parents[1]);
        auto& gb = t.grad_of(n_.parents[2]);
        // dx += g * w
        gemm(g.data(), vw, gx.data(), static_cast<int>(rows), out_f, in, true);
        // dw += g^T * x
        std::vector<T> gt(static_cast<size_t>(out_f) * rows);
        transpose(g.data(), gt.data(), static_cast<int>(rows), out_f);
        gemm(gt.data(), vx, gw.data(), out_f, static_cast<int>(rows), in, true);
        // db += column sums of g
        for (int j = 0; j < out_f; ++j) {
          double acc = 0.0;
          for (int64_t r = 0; r < rows; ++r) acc += static_cast<double>(g[static_cast<size_t>(r * out_f + j)]);
          gb[static_cast<size_t>(j)] += static_cast<T>(acc);
        }
      });
}

namespace detail {

template <typename T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, int stride, int ph, int pw,
            int ho, int wo, T* col) {
  // col is [cin*kh*kw, ho*wo]
  const int64_t plane = static_cast<int64_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* dst = col + ((static_cast<int64_t>(c) * kh + ki) * kw + kj) * plane;
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * stride - ph + ki;
          if (ii < 0 || ii >= h) {
            for (int oj = 0; oj < wo; ++oj) dst[static_cast<int64_t>(oi) * wo + oj] = T(0);
            continue;
          }
          const T* src = x + (static_cast<int64_t>(c) * h + ii) * w;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * stride - pw + kj;
            dst[static_cast<int64_t>(oi) * wo + oj] = (jj >= 0 && jj < w) ? src[jj] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int cin, int h, int w, int kh, int kw, int stride, int ph, int pw,
                int ho, int wo, T* x) {
  const int64_t plane = static_cast<int64_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = col + ((static_cast<int64_t>(c) * kh + ki) * kw + kj) * plane;
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * stride - ph + ki;
          if (ii < 0 || ii >= h) continue;
          T* dst = x + (static_cast<int64_t>(c) * h + ii) * w;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * stride - pw + kj;
            if (jj >= 0 && jj < w) dst[jj] += src[static_cast<int64_t>(oi) * wo + oj];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x [B,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]; zero padding (ph,pw).
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int ph, int pw) {
  const Shape& xs = x.value().shape;
  const Shape& ws = w.value().shape;
  if (xs.size() != 4) throw DimensionError("conv2d: input must be [B,C,H,W], got " + shape_str(xs));
  if (ws.size() != 4) throw DimensionError("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(ws));
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  const int bsz = xs[0], cin = xs[1], h = xs[2], wdt = xs[3];
  const int cout = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != cin)
    throw DimensionError("conv2d: kernel expects " + std::to_string(ws[1]) +
                         " input channels, input has " + std::to_string(cin));
  if (kh > h + 2 * ph || kw > wdt + 2 * pw)
    throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + std::to_string(h + 2 * ph) + "x" +
                         std::to_string(wdt + 2 * pw));
  if (b.value().numel() != cout) throw DimensionError("conv2d: bias size mismatch");
  const int ho = (h + 2 * ph - kh) / stride + 1;
  const int wo = (wdt + 2 * pw - kw) / stride + 1;
  const int kdim = cin * kh * kw;
  const int64_t plane = static_cast<int64_t>(ho) * wo;

  TensorT<T> out({bsz, cout, ho, wo});
  {
    std::vector<T> col(static_cast<size_t>(kdim) * plane);
    const T* px = x.value().ptr();
    const T* pw_ = w.value().ptr();
    const T* pb = b.value().ptr();
    T* po = out.ptr();
    for (int bi = 0; bi < bsz; ++bi) {
      detail::im2col(px + static_cast<int64_t>(bi) * cin * h * wdt, cin, h, wdt, kh, kw, stride,
                     ph, pw, ho, wo, col.data());
      T* ob = po + static_cast<int64_t>(bi) * cout * plane;
      gemm(pw_, col.data(), ob, cout, kdim, static_cast<int>(plane), false);
      for (int c = 0; c < cout; ++c) {
        const T bv = pb[c];
        T* row = ob + static_cast<int64_t>(c) * plane;
        for (int64_t i = 0; i < plane; ++i) row[i] += bv;
      }
    }
  }
  check_finite(out, "conv2d");

  return x.tape->emplace(
      std::move(out), {x.id, w.id, b.id},
      [bsz, cin, h, wdt, cout, kh, kw, stride, ph, pw, ho, wo, kdim, plane](Tape<T>& t, int self) {
        auto& n_ = t.node(self);
        auto& g = n_.grad;
        const T* vx = t.node(n_.parents[0]).value.ptr();
        const T* vw = t.node(n_.parents[1]).value.ptr();
        auto& gx = t.grad_of(n_.parents[0]);
        auto& gw = t.grad_of(n_.parents[1]);
        auto& gb = t.grad_of(n_.parents[2]);
        std::vector<T> col(static_cast<size_t>(kdim) * plane);
        std::vector<T> colT(static_cast<size_t>(kdim) * plane);
        std::vector<T> wT(static_cast<size_t>(kdim) * cout);
        std::vector<T> dcol(static_cast<size_t>(kdim) * plane);
        transpose(vw, wT.data(), cout, kdim);
        for (int bi = 0; bi < bsz; ++bi) {
          const T* gb_out = g.data() + static_cast<int64_t>(bi) * cout * plane;
          // recompute col for this sample (cheaper than storing all of them)
          detail::im2col(vx + static_cast<int64_t>(bi) * cin * h * wdt, cin, h, wdt, kh, kw,
                         stride, ph, pw, ho, wo, col.data());
          // dW += g_b * col^T
          transpose(col.data(), colT.data(), kdim, static_cast<int>(plane));
          gemm(gb_out, colT.data(), gw.data(), cout, static_cast<int>(plane), kdim, true);
          // dX_b = W^T * g_b, scattered back through the im2col map
          gemm(wT.data(), gb_out, dcol.data(), kdim, cout, static_cast<int>(plane), false);
          detail::col2im_add(dcol.data(), cin, h, wdt, kh, kw, stride, ph, pw, ho, wo,
                             gx.data() + static_cast<int64_t>(bi) * cin * h * wdt);
        }
        for (int c = 0; c < cout; ++c) {
          double acc = 0.0;
          for (int bi = 0; bi < bsz; ++bi) {
            const T* row = g.data() + (static_cast<int64_t>(bi) * cout + c) * plane;
            for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(row[i]);
          }
          gb[static_cast<size_t>(c)] += static_cast<T>(acc);
        }
      });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  return conv2d(x, w, b, stride, pad, pad);
}

// Max pooling [B,C,H,W] -> [B,C,Ho,Wo], floor division.
template <typename T>
Var<T> maxpool2d(Var<T> x, int k, int stride) {
  const Shape& xs = x.value().shape;
  if (xs.size() != 4) throw DimensionError("maxpool2d: input must be [B,C,H,W]");
  const int bsz = xs[0], c = xs[1], h = xs[2], w = xs[3];
  if (k > h || k > w)
    throw DimensionError("maxpool2d: window " + std::to_string(k) + " exceeds input " +
                         std::to_string(h) + "x" + std::to_string(w));
  const int ho = (h - k) / stride + 1;
  const int wo = (w - k) / stride + 1;
  TensorT<T> out({bsz, c, ho, wo});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(out.numel()));
  const T* px = x.value().ptr();
  T* po = out.ptr();
  int64_t oi = 0;
  for (int bi = 0; bi < bsz; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const T* pl = px + (static_cast<int64_t>(bi) * c + ci) * h * w;
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j, ++oi) {
          int best = (i * stride) * w + (j * stride);
          T bv = pl[best];
          for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
              const int idx = (i * stride + ki) * w + (j * stride + kj);
              if (pl[idx] > bv) {
                bv = pl[idx];
                best = idx;
              }
            }
          po[oi] = bv;
          (*argmax)[static_cast<size_t>(oi)] = best;
          if (KinkGuard::enabled && k > 1) {
            T second = -std::numeric_limits<T>::infinity();
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int idx = (i * stride + ki) * w + (j * stride + kj);
                if (idx != best) second = std::max(second, pl[idx]);
              }
            KinkGuard::record(static_cast<double>(bv - second));
          }
        }
    }
  check_finite(out, "maxpool2d");
  const int64_t in_plane = static_cast<int64_t>(h) * w;
  const int64_t out_plane = static_cast<int64_t>(ho) * wo;
  return x.tape->emplace(std::move(out), {x.id},
                         [argmax, in_plane, out_plane](Tape<T>& t, int self) {
                           auto& n_ = t.node(self);
                           auto& g = n_.grad;
                           auto& gx = t.grad_of(n_.parents[0]);
                           const int64_t planes = static_cast<int64_t>(g.size()) / out_plane;
                           for (int64_t p = 0; p < planes; ++p)
                             for (int64_t i = 0; i < out_plane; ++i)
                               gx[static_cast<size_t>(p * in_plane +
                                                      (*argmax)[static_cast<size_t>(p * out_plane + i)])] +=
                                   g[static_cast<size_t>(p * out_plane + i)];
                         });
}

// Adaptive max pool to out x out (PyTorch-style window partition).
template <typename T>
Var<T> adaptive_maxpool2d(Var<T> x, int out_hw) {
  const Shape& xs = x.value().shape;
  if (xs.size() != 4) throw DimensionError("adaptive_maxpool2d: input must be [B,C,H,W]");
  const int bsz = xs[0], c = xs[1], h = xs[2], w = xs[3];
  if (h < out_hw || w < out_hw)
    throw DimensionError("adaptive_maxpool2d: input " + std::to_string(h) + "x" +
                         std::to_string(w) + " smaller than target " + std::to_string(out_hw));
  TensorT<T> out({bsz, c, out_hw, out_hw});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(out.numel()));
  const T* px = x.value().ptr();
  T* po = out.ptr();
  auto lo = [&](int i, int n) { return (i * n) / out_hw; };
  auto hi = [&](int i, int n) { return ((i + 1) * n + out_hw - 1) / out_hw; };
  int64_t oi = 0;
  for (int bi = 0; bi < bsz; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const T* pl = px + (static_cast<int64_t>(bi) * c + ci) * h * w;
      for (int i = 0; i < out_hw; ++i)
        for (int j = 0; j < out_hw; ++j, ++oi) {
          int best = lo(i, h) * w + lo(j, w);
          T bv = pl[best];
          for (int ii = lo(i, h); ii < hi(i, h); ++ii)
            for (int jj = lo(j, w); jj < hi(j, w); ++jj) {
              const int idx = ii * w + jj;
              if (pl[idx] > bv) {
                bv = pl[idx];
                best = idx;
              }
            }
          po[oi] = bv;
          (*argmax)[static_cast<size_t>(oi)] = best;
          if (KinkGuard::enabled && hi(i, h) - lo(i, h) > 1) {
            T second = -std::numeric_limits<T>::infinity();
            for (int ii = lo(i, h); ii < hi(i, h); ++ii)
              for (int jj = lo(j, w); jj < hi(j, w); ++jj)
                if (ii * w + jj != best) second = std::max(second, pl[ii * w + jj]);
            if (second > -std::numeric_limits<T>::infinity())
              KinkGuard::record(static_cast<double>(bv - second));
          }
        }
    }
  check_finite(out, "adaptive_maxpool2d");
  const int64_t in_plane = static_cast<int64_t>(h) * w;
  const int64_t out_plane = static_cast<int64_t>(out_hw) * out_hw;
  return x.tape->emplace(std::move(out), {x.id},
                         [argmax, in_plane, out_plane](Tape<T>& t, int self) {
                           auto& n_ = t.node(self);
                           auto& g = n_.grad;
                           auto& gx = t.grad_of(n_.parents[0]);
                           const int64_t planes = static_cast<int64_t>(g.size()) / out_plane;
                           for (int64_t p = 0; p < planes; ++p)
                             for (int64_t i = 0; i < out_plane; ++i)
                               gx[static_cast<size_t>(p * in_plane +
                                                      (*argmax)[static_cast<size_t>(p * out_plane + i)])] +=
                                   g[static_cast<size_t>(p * out_plane + i)];
                         });
}

// [B,C,H,W] -> [B,C] spatial mean.
template <typename T>
Var<T> global_avgpool(Var<T> x) {
  const Shape& xs = x.value().shape;
  if (xs.size() != 4) throw DimensionError("global_avgpool: input must be [B,C,H,W]");
  const int bsz = xs[0], c = xs[1];
  const int64_t plane = static_cast<int64_t>(xs[2]) * xs[3];
  TensorT<T> out({bsz, c});
  const T* px = x.value().ptr();
  T* po = out.ptr();
  for (int64_t p = 0; p < static_cast<int64_t>(bsz) * c; ++p) {
    double acc = 0.0;
    for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(px[p * plane + i]);
    po[p] = static_cast<T>(acc / static_cast<double>(plane));
  }
  check_finite(out, "global_avgpool");
  return x.tape->emplace(std::move(out), {x.id}, [plane](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    auto& gx = t.grad_of(n_.parents[0]);
    const T inv = static_cast<T>(1.0 / static_cast<double>(plane));
    for (size_t p = 0; p < g.size(); ++p) {
      const T gv = g[p] * inv;
      for (int64_t i = 0; i < plane; ++i) gx[p * static_cast<size_t>(plane) + static_cast<size_t>(i)] += gv;
    }
  });
}

}  // namespace ops
}  // namespace mivit
