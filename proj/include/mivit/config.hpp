#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mivit/error.hpp"

namespace mivit {

struct ModelConfig {
  int classes = 4;
  int bands1 = 16;
  int bands2 = 1;
  std::vector<int> cube_sizes = {8, 16, 24};
  int d = 64;          // encoder channel width
  int s0 = 8;          // aligned spatial extent
  int d_model = 64;    // transformer width
  int vit_blocks = 2;  // encoder depth; decoder mirrors it
  int heads = 4;
  int mlp_ratio = 2;
  int dir_kernel = 3;  // k of the 1xk / kx1 directional convs
  int d_z = 0;         // mapper bins; 0 means "classes"
  int shallow_width = 32;
  int shallow_layers = 3;

  int dz() const { return d_z > 0 ? d_z : classes; }
  int tokens() const { return s0 * s0 + 1; }
  int scales() const { return static_cast<int>(cube_sizes.size()); }

  void validate() const {
    if (classes < 2) throw ConfigError("config: classes must be >= 2");
    if (bands1 < 1 || bands2 < 1) throw ConfigError("config: bands must be >= 1");
    if (cube_sizes.empty()) throw ConfigError("config: need at least one cube size");
    for (int s : cube_sizes)
      if (s < s0)
        throw ConfigError("config: cube size " + std::to_string(s) +
                          " is below the aligned extent s0=" + std::to_string(s0));
    if (d < 4 || d % 4 != 0) throw ConfigError("config: d must be a positive multiple of 4");
    if (d_model % heads != 0) throw ConfigError("config: heads must divide d_model");
    if (dir_kernel < 1 || dir_kernel % 2 == 0)
      throw ConfigError("config: dir_kernel must be odd");
    int e = s0;
    for (int i = 0; i < shallow_layers; ++i) {
      if (e < 2)
        throw ConfigError("config: s0 too small for " + std::to_string(shallow_layers) +
                          " shallow pool stages");
      e /= 2;
    }
  }
};

struct TrainConfig {
  ModelConfig model;
  int epochs = 500;
  int batch_size = 64;
  double lr = 1e-4;
  double weight_decay = 1e-3;
  int sched_step = 50;
  double sched_gamma = 0.9;
  double lambda1 = 1.0;   // reconstruction
  double lambda2 = 0.01;  // information aggregation
  double lambda3 = 1.0;   // shallow supervision
  double lambda4 = 0.1;   // distillation
  uint64_t seed = 0;
  int train_per_class = 16;
  int eval_every = 50;
  int eval_subset = 1024;  // cap for mid-training metric rows; final eval is full
  int ckpt_every = 50;
  bool detach_teacher = false;

  void validate() const {
    model.validate();
    if (epochs < 1 || batch_size < 1) throw ConfigError("config: epochs/batch must be positive");
    if (lr <= 0 || sched_step < 1 || sched_gamma <= 0)
      throw ConfigError("config: bad optimizer schedule");
    if (weight_decay < 0) throw ConfigError("config: negative weight decay");
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
      throw ConfigError("config: loss weights must be >= 0");
    if (train_per_class < 1) throw ConfigError("config: train_per_class must be >= 1");
  }

  double lr_at(int epoch) const {
    return lr * std::pow(sched_gamma, static_cast<double>(epoch / sched_step));
  }
};

}  // namespace mivit
