#include "mivit/jsonio.hpp"

#include <set>

namespace mivit {

using nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value type for '") + key + "'");
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* scope) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError(std::string("config: unknown key '") + it.key() + "' in " + scope);
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"classes", cfg.classes},
              {"bands1", cfg.bands1},
              {"bands2", cfg.bands2},
              {"cube_sizes", cfg.cube_sizes},
              {"d", cfg.d},
              {"s0", cfg.s0},
              {"d_model", cfg.d_model},
              {"vit_blocks", cfg.vit_blocks},
              {"heads", cfg.heads},
              {"mlp_ratio", cfg.mlp_ratio},
              {"dir_kernel", cfg.dir_kernel},
              {"d_z", cfg.d_z},
              {"shallow_width", cfg.shallow_width},
              {"shallow_layers", cfg.shallow_layers}};
}

ModelConfig model_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "classes", "bands1",     "bands2",  "cube_sizes",    "d",
      "s0",      "d_model",    "vit_blocks", "heads",      "mlp_ratio",
      "dir_kernel", "d_z",     "shallow_width", "shallow_layers"};
  reject_unknown(j, known, "model config");
  ModelConfig cfg;
  take(j, "classes", cfg.classes);
  take(j, "bands1", cfg.bands1);
  take(j, "bands2", cfg.bands2);
  take(j, "cube_sizes", cfg.cube_sizes);
  take(j, "d", cfg.d);
  take(j, "s0", cfg.s0);
  take(j, "d_model", cfg.d_model);
  take(j, "vit_blocks", cfg.vit_blocks);
  take(j, "heads", cfg.heads);
  take(j, "mlp_ratio", cfg.mlp_ratio);
  take(j, "dir_kernel", cfg.dir_kernel);
  take(j, "d_z", cfg.d_z);
  take(j, "shallow_width", cfg.shallow_width);
  take(j, "shallow_layers", cfg.shallow_layers);
  cfg.validate();
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  json j{{"model", model_config_to_json(cfg.model)},
         {"epochs", cfg.epochs},
         {"batch_size", cfg.batch_size},
         {"lr", cfg.lr},
         {"weight_decay", cfg.weight_decay},
         {"sched_step", cfg.sched_step},
         {"sched_gamma", cfg.sched_gamma},
         {"lambda1", cfg.lambda1},
         {"lambda2", cfg.lambda2},
         {"lambda3", cfg.lambda3},
         {"lambda4", cfg.lambda4},
         {"seed", cfg.seed},
         {"train_per_class", cfg.train_per_class},
         {"eval_every", cfg.eval_every},
         {"eval_subset", cfg.eval_subset},
         {"ckpt_every", cfg.ckpt_every},
         {"detach_teacher", cfg.detach_teacher}};
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "model",      "epochs",        "batch_size", "lr",          "weight_decay",
      "sched_step", "sched_gamma",   "lambda1",    "lambda2",     "lambda3",
      "lambda4",    "seed",          "train_per_class", "eval_every", "eval_subset",
      "ckpt_every", "detach_teacher"};
  reject_unknown(j, known, "train config");
  TrainConfig cfg;
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  take(j, "epochs", cfg.epochs);
  take(j, "batch_size", cfg.batch_size);
  take(j, "lr", cfg.lr);
  take(j, "weight_decay", cfg.weight_decay);
  take(j, "sched_step", cfg.sched_step);
  take(j, "sched_gamma", cfg.sched_gamma);
  take(j, "lambda1", cfg.lambda1);
  take(j, "lambda2", cfg.lambda2);
  take(j, "lambda3", cfg.lambda3);
  take(j, "lambda4", cfg.lambda4);
  take(j, "seed", cfg.seed);
  take(j, "train_per_class", cfg.train_per_class);
  take(j, "eval_every", cfg.eval_every);
  take(j, "eval_subset", cfg.eval_subset);
  take(j, "ckpt_every", cfg.ckpt_every);
  take(j, "detach_teacher", cfg.detach_teacher);
  cfg.validate();
  return cfg;
}

}  // namespace mivit
