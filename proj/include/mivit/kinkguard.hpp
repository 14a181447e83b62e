#pragma once

namespace mivit {

// Finite differences are meaningless across the kink of a ReLU or an
// argmax switch of a max-pool window. During grad checks the guard records
// how close the forward pass came to any such non-smooth point; harnesses
// use it to re-seed until the check runs at a point with safe margin.
struct KinkGuard {
  static inline bool enabled = false;
  static inline double min_margin = 1e300;

  static void reset() { min_margin = 1e300; }

  static void record(double m) {
    if (m < min_margin) min_margin = m;
  }
};

}  // namespace mivit
