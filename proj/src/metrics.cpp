#include "mivit/metrics.hpp"

#include <cmath>

#include "mivit/error.hpp"

namespace mivit {

ClassifierMetrics compute_metrics(const std::vector<int>& pred, const std::vector<int>& label,
                                  int classes) {
  if (pred.size() != label.size() || pred.empty())
    throw DimensionError("metrics: prediction/label size mismatch");
  ClassifierMetrics m;
  m.classes = classes;
  m.confusion.assign(static_cast<size_t>(classes) * classes, 0);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (label[i] < 0 || label[i] >= classes || pred[i] < 0 || pred[i] >= classes)
      throw DataError("metrics: class id outside [0," + std::to_string(classes) + ")");
    ++m.confusion[static_cast<size_t>(label[i]) * classes + pred[i]];
  }
  const double n = static_cast<double>(pred.size());
  double trace = 0.0, pe = 0.0;
  double recall_sum = 0.0;
  int present = 0;
  for (int k = 0; k < classes; ++k) {
    int64_t row = 0, col = 0;
    for (int j = 0; j < classes; ++j) {
      row += m.confusion[static_cast<size_t>(k) * classes + j];
      col += m.confusion[static_cast<size_t>(j) * classes + k];
    }
    trace += static_cast<double>(m.confusion[static_cast<size_t>(k) * classes + k]);
    pe += static_cast<double>(row) * static_cast<double>(col) / (n * n);
    if (row > 0) {
      m.per_class_acc.push_back(
          static_cast<double>(m.confusion[static_cast<size_t>(k) * classes + k]) /
          static_cast<double>(row));
      recall_sum += m.per_class_acc.back();
      ++present;
    } else {
      m.per_class_acc.push_back(0.0);
    }
  }
  m.oa = trace / n;
  m.aa = present > 0 ? recall_sum / present : 0.0;
  const double denom = 1.0 - pe;
  if (std::abs(denom) < 1e-12)
    m.kappa = (m.oa == 1.0) ? 1.0 : 0.0;  // degenerate chance agreement
  else
    m.kappa = (m.oa - pe) / denom;
  return m;
}

int argmax_lowest(const float* row, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

PearsonResult pearson_matrix(const std::vector<float>& a, const std::vector<float>& b, int batch,
                             int da, int db) {
  if (batch < 3) throw DataError("pearson: need at least 3 samples");
  if (a.size() != static_cast<size_t>(batch) * da || b.size() != static_cast<size_t>(batch) * db)
    throw DimensionError("pearson: buffer sizes do not match batch/dims");
  PearsonResult out;
  out.rows = da;
  out.cols = db;
  out.r.assign(static_cast<size_t>(da) * db, 0.0);

  auto stats = [batch](const std::vector<float>& x, int d) {
    std::vector<double> mean(static_cast<size_t>(d), 0.0), var(static_cast<size_t>(d), 0.0);
    for (int s = 0; s < batch; ++s)
      for (int i = 0; i < d; ++i) mean[static_cast<size_t>(i)] += static_cast<double>(x[static_cast<size_t>(s) * d + i]);
    for (auto& v : mean) v /= batch;
    for (int s = 0; s < batch; ++s)
      for (int i = 0; i < d; ++i) {
        const double c = static_cast<double>(x[static_cast<size_t>(s) * d + i]) - mean[static_cast<size_t>(i)];
        var[static_cast<size_t>(i)] += c * c;
      }
    return std::pair{mean, var};
  };
  auto [ma, va] = stats(a, da);
  auto [mb, vb] = stats(b, db);

  for (int i = 0; i < da; ++i)
    for (int j = 0; j < db; ++j) {
      if (va[static_cast<size_t>(i)] <= 0.0 || vb[static_cast<size_t>(j)] <= 0.0) {
        out.had_zero_variance = true;
        continue;  // entry stays 0
      }
      double cov = 0.0;
      for (int s = 0; s < batch; ++s)
        cov += (static_cast<double>(a[static_cast<size_t>(s) * da + i]) - ma[static_cast<size_t>(i)]) *
               (static_cast<double>(b[static_cast<size_t>(s) * db + j]) - mb[static_cast<size_t>(j)]);
      out.r[static_cast<size_t>(i) * db + j] =
          cov / std::sqrt(va[static_cast<size_t>(i)] * vb[static_cast<size_t>(j)]);
    }
  return out;
}

double mean_abs(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += std::abs(x);
  return acc / static_cast<double>(v.size());
}

}  // namespace mivit
