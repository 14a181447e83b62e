#pragma once

#include <cstdint>
#include <vector>

namespace mivit {

struct ClassifierMetrics {
  int classes = 0;
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  std::vector<double> per_class_acc;     // recall per class
  std::vector<int64_t> confusion;        // classes x classes, [true][pred]
};

ClassifierMetrics compute_metrics(const std::vector<int>& pred, const std::vector<int>& label,
                                  int classes);

// argmax with ties resolved to the lowest index
int argmax_lowest(const float* row, int n);

struct PearsonResult {
  int rows = 0, cols = 0;
  std::vector<double> r;  // rows x cols
  bool had_zero_variance = false;
};

// Pearson correlation between channel i of A and channel j of B over the
// batch. Zero-variance channels yield 0 entries and set the flag.
PearsonResult pearson_matrix(const std::vector<float>& a, const std::vector<float>& b, int batch,
                             int da, int db);

double mean_abs(const std::vector<double>& v);

}  // namespace mivit
