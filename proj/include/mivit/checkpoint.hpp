#pragma once

#include <string>
#include <vector>

#include "mivit/config.hpp"
#include "mivit/model.hpp"

namespace mivit {

// Checkpoint container: "MVCK" | u32 version | u32 json_len | config JSON |
// u32 count | per entry (u32 name_len, name, u32 ndims, u32 dims[], f32
// data[]). Little-endian throughout; entry order is registry order, so a
// round trip is byte-stable.
struct CheckpointData {
  ModelConfig config;
  uint64_t init_seed = 0;
  std::vector<std::pair<std::string, Tensor>> entries;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, MivitModel<float>& model);
CheckpointData load_checkpoint(const std::string& path);

// Copies entries whose names start with any of `prefixes` (all entries when
// empty) into the model; shape mismatches and absent parameters are errors.
void load_into_model(MivitModel<float>& model, const CheckpointData& ckpt,
                     const std::vector<std::string>& prefixes = {});

// Rebuild a full model from a checkpoint.
MivitModel<float> model_from_checkpoint(const CheckpointData& ckpt);

}  // namespace mivit
