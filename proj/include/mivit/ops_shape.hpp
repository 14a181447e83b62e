#pragma once

#include <numeric>

#include "mivit/tape.hpp"

namespace mivit {
namespace ops {

template <typename T>
Var<T> reshape(Var<T> x, Shape s) {
  if (numel_of(s) != x.value().numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.value().shape) + " as " +
                         shape_str(s));
  TensorT<T> out;
  out.shape = std::move(s);
  out.data = x.value().data;  // view, no copy
  return x.tape->emplace(std::move(out), {x.id}, [](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& gx = t.grad_of(n_.parents[0]);
    for (size_t i = 0; i < n_.grad.size(); ++i) gx[i] += n_.grad[i];
  });
}

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

template <typename T>
Var<T> permute(Var<T> x, std::vector<int> dims) {
  const Shape& xs = x.value().shape;
  if (dims.size() != xs.size()) throw DimensionError("permute: rank mismatch");
  Shape os(dims.size());
  for (size_t i = 0; i < dims.size(); ++i) os[i] = xs[static_cast<size_t>(dims[i])];
  auto in_strides = row_major_strides(xs);
  // stride in the source for each output axis
  std::vector<int64_t> src_stride(dims.size());
  for (size_t i = 0; i < dims.size(); ++i) src_stride[i] = in_strides[static_cast<size_t>(dims[i])];

  TensorT<T> out(os);
  const T* px = x.value().ptr();
  T* po = out.ptr();
  const int64_t n = out.numel();
  const int rank = static_cast<int>(os.size());
  std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t src = 0;
    for (int d = 0; d < rank; ++d) src += idx[static_cast<size_t>(d)] * src_stride[static_cast<size_t>(d)];
    po[flat] = px[src];
    for (int d = rank - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }
  return x.tape->emplace(std::move(out), {x.id},
                         [os, src_stride](Tape<T>& t, int self) {
                           auto& n_ = t.node(self);
                           auto& g = n_.grad;
                           auto& gx = t.grad_of(n_.parents[0]);
                           const int rank = static_cast<int>(os.size());
                           std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
                           for (size_t flat = 0; flat < g.size(); ++flat) {
                             int64_t src = 0;
                             for (int d = 0; d < rank; ++d)
                               src += idx[static_cast<size_t>(d)] * src_stride[static_cast<size_t>(d)];
                             gx[static_cast<size_t>(src)] += g[flat];
                             for (int d = rank - 1; d >= 0; --d) {
                               if (++idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
                               idx[static_cast<size_t>(d)] = 0;
                             }
                           }
                         });
}

template <typename T>
Var<T> concat(std::vector<Var<T>> xs, int axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = xs[0].value().shape;
  const int rank = static_cast<int>(s0.size());
  if (axis < 0 || axis >= rank) throw DimensionError("concat: bad axis");
  Shape os = s0;
  int total = 0;
  for (auto& v : xs) {
    const Shape& s = v.value().shape;
    if (static_cast<int>(s.size()) != rank) throw DimensionError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis && s[static_cast<size_t>(d)] != s0[static_cast<size_t>(d)])
        throw DimensionError("concat: shape mismatch on axis " + std::to_string(d));
    total += s[static_cast<size_t>(axis)];
  }
  os[static_cast<size_t>(axis)] = total;

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[static_cast<size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= s0[static_cast<size_t>(d)];

  TensorT<T> out(os);
  T* po = out.ptr();
  const int64_t out_row = static_cast<int64_t>(total) * inner;
  std::vector<int> parents;
  std::vector<int64_t> offsets;  // element offset of each input inside a row
  int64_t off = 0;
  for (auto& v : xs) {
    parents.push_back(v.id);
    offsets.push_back(off);
    const int64_t chunk = static_cast<int64_t>(v.value().shape[static_cast<size_t>(axis)]) * inner;
    const T* px = v.value().ptr();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(px + o * chunk, px + (o + 1) * chunk, po + o * out_row + off);
    off += chunk;
  }
  return xs[0].tape->emplace(std::move(out), parents,
                             [outer, inner, out_row, offsets](Tape<T>& t, int self) {
                               auto& n_ = t.node(self);
                               auto& g = n_.grad;
                               for (size_t pi = 0; pi < n_.parents.size(); ++pi) {
                                 auto& gp = t.grad_of(n_.parents[pi]);
                                 const int64_t chunk = static_cast<int64_t>(gp.size()) / outer;
                                 (void)inner;
                                 for (int64_t o = 0; o < outer; ++o)
                                   for (int64_t i = 0; i < chunk; ++i)
                                     gp[static_cast<size_t>(o * chunk + i)] +=
                                         g[static_cast<size_t>(o * out_row + offsets[pi] + i)];
                               }
                             });
}

// out[axis] slice [start, start+len)
template <typename T>
Var<T> slice(Var<T> x, int axis, int start, int len) {
  const Shape& xs = x.value().shape;
  const int rank = static_cast<int>(xs.size());
  if (axis < 0 || axis >= rank) throw DimensionError("slice: bad axis");
  if (start < 0 || len < 1 || start + len > xs[static_cast<size_t>(axis)])
    throw DimensionError("slice: range out of bounds");
  Shape os = xs;
  os[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= xs[static_cast<size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= xs[static_cast<size_t>(d)];
  const int64_t in_row = static_cast<int64_t>(xs[static_cast<size_t>(axis)]) * inner;
  const int64_t out_row = static_cast<int64_t>(len) * inner;

  TensorT<T> out(os);
  const T* px = x.value().ptr();
  T* po = out.ptr();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(px + o * in_row + start * inner, px + o * in_row + (start + len) * inner,
              po + o * out_row);
  return x.tape->emplace(std::move(out), {x.id},
                         [outer, inner, in_row, out_row, start](Tape<T>& t, int self) {
                           auto& n_ = t.node(self);
                           auto& g = n_.grad;
                           auto& gx = t.grad_of(n_.parents[0]);
                           for (int64_t o = 0; o < outer; ++o)
                             for (int64_t i = 0; i < out_row; ++i)
                               gx[static_cast<size_t>(o * in_row + start * inner + i)] +=
                                   g[static_cast<size_t>(o * out_row + i)];
                         });
}

// Repeat x (shape S) into [batch, S...]; backward reduces over the batch.
template <typename T>
Var<T> broadcast_to_batch(Var<T> x, int batch) {
  Shape os;
  os.push_back(batch);
  for (int d : x.value().shape) os.push_back(d);
  TensorT<T> out(os);
  const int64_t n = x.value().numel();
  const T* px = x.value().ptr();
  T* po = out.ptr();
  for (int b = 0; b < batch; ++b) std::copy(px, px + n, po + static_cast<int64_t>(b) * n);
  return x.tape->emplace(std::move(out), {x.id}, [batch, n](Tape<T>& t, int self) {
    auto& n_ = t.node(self);
    auto& g = n_.grad;
    auto& gx = t.grad_of(n_.parents[0]);
    for (int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int b = 0; b < batch; ++b) acc += static_cast<double>(g[static_cast<size_t>(b * n + i)]);
      gx[static_cast<size_t>(i)] += static_cast<T>(acc);
    }
  });
}

}  // namespace ops
}  // namespace mivit
