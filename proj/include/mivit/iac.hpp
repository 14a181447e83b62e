#pragma once

#include "mivit/layers.hpp"

namespace mivit {

// Feature-to-distribution mapper: conv(3x3) + ReLU, then a fully-connected
// layer and softmax onto d_z bins.
template <typename T>
struct Mapper {
  nn::Conv2d<T> conv;
  nn::Linear<T> fc;
  int width = 0, s0 = 0;

  Mapper() = default;
  Mapper(int d, int width_, int s0_, int dz, Rng& rng)
      : conv(d, width_, 3, 3, rng), fc(width_ * s0_ * s0_, dz, rng), width(width_), s0(s0_) {}

  Var<T> operator()(Tape<T>& t, Var<T> phi) {
    const int bsz = phi.value().shape[0];
    auto h = ops::relu(conv(t, phi));
    return ops::softmax(fc(t, ops::reshape(h, {bsz, width * s0 * s0})));
  }

  void collect(Registry<T>& r, const std::string& p) {
    conv.collect(r, p + ".conv");
    fc.collect(r, p + ".fc");
  }
};

namespace iac {

// Batch-averaged outer product of paired soft assignments: the joint
// estimate that makes all the entropy terms below concrete and
// differentiable.
template <typename T>
Var<T> joint_contingency(Var<T> a, Var<T> b) {
  const Shape& as = a.value().shape;
  const Shape& bs = b.value().shape;
  if (as.size() != 2 || bs.size() != 2 || as[0] != bs[0])
    throw DimensionError("joint_contingency: need [B,dz] batches with equal B, got " +
                         shape_str(as) + " and " + shape_str(bs));
  if (as[0] < 2) throw DimensionError("joint_contingency: batch must have at least 2 samples");
  const int bsz = as[0];
  auto at = ops::permute(a, {1, 0});
  return ops::scale(ops::matmul(at, b), 1.0 / bsz);  // [dz_a, dz_b]
}

// entropy of the whole table, -sum P ln(max(P,eps))
template <typename T>
Var<T> entropy_all(Var<T> x) {
  return ops::scale(ops::sum_all(ops::mul(x, ops::log_clamped(x, ops::kLogEps))), -1.0);
}

// MI(Z,Z1) = H(p) + H(q) - H(P), marginals taken from the table itself.
template <typename T>
Var<T> mi_direct(Var<T> table) {
  auto p = ops::sum_axis(table, 1);
  auto q = ops::sum_axis(table, 0);
  return ops::sub(ops::add(ops::entropy(p), ops::entropy(q)), entropy_all(table));
}

// Literal cross-entropy/KL decomposition of the same quantity:
//   CE_q(p) + CE_p(q) - H(P) - KL(p||q) - KL(q||p)
// Kept as an executable twin of mi_direct; the two must agree to 1e-9.
template <typename T>
Var<T> mi_decomposed(Var<T> table) {
  auto p = ops::sum_axis(table, 1);
  auto q = ops::sum_axis(table, 0);
  auto ce_pq = ops::cross_entropy_dist(p, q);
  auto ce_qp = ops::cross_entropy_dist(q, p);
  auto sum = ops::add(ce_pq, ce_qp);
  sum = ops::sub(sum, entropy_all(table));
  sum = ops::sub(sum, ops::kl_divergence(p, q));
  return ops::sub(sum, ops::kl_divergence(q, p));
}

// L_IAC = lambda2 * (MI(Z1,Z2) - MI(Z,Z1) - MI(Z,Z2))
template <typename T>
Var<T> loss(Tape<T>& t, Var<T> z1, Var<T> z2, Var<T> z, double lambda2) {
  if (lambda2 == 0.0) return t.constant(TensorT<T>::scalar(T(0)));
  auto mi12 = mi_direct(joint_contingency(z1, z2));
  auto mi01 = mi_direct(joint_contingency(z, z1));
  auto mi02 = mi_direct(joint_contingency(z, z2));
  return ops::scale(ops::sub(mi12, ops::add(mi01, mi02)), lambda2);
}

}  // namespace iac

// Plain f64 contingency table for analysis and tests; mirrors the tape math
// at full double precision.
struct ContingencyTable {
  int rows = 0, cols = 0;
  std::vector<double> joint;  // rows x cols
  std::vector<double> row_marginal, col_marginal;

  static ContingencyTable from_joint(int rows, int cols, std::vector<double> p) {
    ContingencyTable t;
    t.rows = rows;
    t.cols = cols;
    t.joint = std::move(p);
    t.row_marginal.assign(static_cast<size_t>(rows), 0.0);
    t.col_marginal.assign(static_cast<size_t>(cols), 0.0);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        t.row_marginal[static_cast<size_t>(i)] += t.joint[static_cast<size_t>(i) * cols + j];
        t.col_marginal[static_cast<size_t>(j)] += t.joint[static_cast<size_t>(i) * cols + j];
      }
    return t;
  }

  // batch-averaged outer product of paired rows
  static ContingencyTable from_batches(const std::vector<std::vector<double>>& a,
                                       const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size() || a.size() < 2)
      throw DimensionError("contingency: need matching batches of size >= 2");
    const int rows = static_cast<int>(a[0].size());
    const int cols = static_cast<int>(b[0].size());
    std::vector<double> p(static_cast<size_t>(rows) * cols, 0.0);
    for (size_t s = 0; s < a.size(); ++s)
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          p[static_cast<size_t>(i) * cols + j] += a[s][static_cast<size_t>(i)] * b[s][static_cast<size_t>(j)];
    for (auto& v : p) v /= static_cast<double>(a.size());
    return from_joint(rows, cols, std::move(p));
  }

  ContingencyTable transposed() const {
    std::vector<double> p(joint.size());
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        p[static_cast<size_t>(j) * rows + i] = joint[static_cast<size_t>(i) * cols + j];
    return from_joint(cols, rows, std::move(p));
  }
};

namespace iac {

inline double entropy64(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) h -= v * std::log(std::max(v, 1e-12));
  return h;
}

inline double kl64(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (size_t i = 0; i < p.size(); ++i)
    d += p[i] * std::log(std::max(p[i], 1e-12) / std::max(q[i], 1e-12));
  return d;
}

inline double ce64(const std::vector<double>& p, const std::vector<double>& q) {
  double c = 0.0;
  for (size_t i = 0; i < p.size(); ++i) c -= p[i] * std::log(std::max(q[i], 1e-12));
  return c;
}

inline double mi_direct64(const ContingencyTable& t) {
  return entropy64(t.row_marginal) + entropy64(t.col_marginal) - entropy64(t.joint);
}

inline double mi_decomposed64(const ContingencyTable& t) {
  return ce64(t.row_marginal, t.col_marginal) + ce64(t.col_marginal, t.row_marginal) -
         entropy64(t.joint) - kl64(t.row_marginal, t.col_marginal) -
         kl64(t.col_marginal, t.row_marginal);
}

}  // namespace iac
}  // namespace mivit
