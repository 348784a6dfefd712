#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "env.hpp"
#include "flow.hpp"
#include "grpo.hpp"
#include "net.hpp"
#include "rewards.hpp"

namespace editgrpo {

// Full run configuration. JSON keys mirror the hyperparameter names used
// in the logs and CLI; every training hyperparameter has a config key.
struct RunConfig {
  EnvConfig env;
  Arch arch;
  SamplerConfig sampler;
  OptimConfig optim;
  RewardWeights reward_weights;
  Mode mode = Mode::kDecoupled;
  bool oracle_masks = false;
  uint64_t seed = 7;
  int iterations = 300;
  int tasks_per_iteration = 8;
  int pretrain_steps = 4000;
  int pretrain_batch = 8;
  double pretrain_lr = 3e-3;
  int eval_tasks = 200;
  std::string out_dir = "out";
};

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  using detail::maybe;
  if (j.contains("env")) {
    const auto& e = j.at("env");
    maybe(e, "height", c.env.height);
    maybe(e, "width", c.env.width);
    maybe(e, "min_shapes", c.env.min_shapes);
    maybe(e, "max_shapes", c.env.max_shapes);
    maybe(e, "min_size", c.env.min_size);
    maybe(e, "max_size", c.env.max_size);
    maybe(e, "condition_dim", c.env.condition_dim);
    maybe(e, "spatial_condition", c.env.spatial_condition);
    if (e.contains("background"))
      for (int i = 0; i < 3; ++i) c.env.background[i] = e.at("background").at(i);
  }
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    maybe(a, "hidden", c.arch.hidden);
    maybe(a, "time_embed_k", c.arch.time_embed_k);
  }
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    maybe(s, "inference_steps", c.sampler.steps);
    maybe(s, "noise_level", c.sampler.noise_level);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    maybe(t, "images_per_prompt", c.optim.group_size);
    maybe(t, "learning_rate", c.optim.learning_rate);
    maybe(t, "weight_decay", c.optim.weight_decay);
    maybe(t, "adam_beta1", c.optim.adam_beta1);
    maybe(t, "adam_beta2", c.optim.adam_beta2);
    maybe(t, "adam_epsilon", c.optim.adam_eps);
    maybe(t, "ema_decay", c.optim.ema_decay);
    maybe(t, "clip_eps", c.optim.clip_eps);
    maybe(t, "inner_epochs", c.optim.inner_epochs);
    maybe(t, "adv_std_floor", c.optim.adv_std_floor);
    maybe(t, "iterations", c.iterations);
    maybe(t, "tasks_per_iteration", c.tasks_per_iteration);
    maybe(t, "pretrain_steps", c.pretrain_steps);
    maybe(t, "pretrain_batch", c.pretrain_batch);
    maybe(t, "pretrain_learning_rate", c.pretrain_lr);
  }
  if (j.contains("reward_weights")) {
    const auto& r = j.at("reward_weights");
    maybe(r, "mllm_semantic_score", c.reward_weights.vlm);
    maybe(r, "clip_directional_score", c.reward_weights.clip);
    maybe(r, "l1_preservation_score", c.reward_weights.diff);
    maybe(r, "ssim_preservation_score", c.reward_weights.ssim);
    maybe(r, "lpips_preservation_score", c.reward_weights.lpips);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    maybe(l, "semantic_loss", c.optim.lambda_sem);
    maybe(l, "preservation_loss", c.optim.lambda_pres);
    maybe(l, "kl_beta", c.optim.kl_beta);
  }
  maybe(j, "seed", c.seed);
  maybe(j, "eval_tasks", c.eval_tasks);
  maybe(j, "oracle_masks", c.oracle_masks);
  maybe(j, "out_dir", c.out_dir);
  if (j.contains("mode")) {
    auto m = mode_from_name(j.at("mode").get<std::string>());
    if (!m) throw std::invalid_argument("config: unknown mode");
    c.mode = *m;
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  f >> j;
  RunConfig c;
  apply_json(c, j);
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["env"] = {{"height", c.env.height},
              {"width", c.env.width},
              {"min_shapes", c.env.min_shapes},
              {"max_shapes", c.env.max_shapes},
              {"min_size", c.env.min_size},
              {"max_size", c.env.max_size},
              {"condition_dim", c.env.condition_dim},
              {"spatial_condition", c.env.spatial_condition},
              {"background", c.env.background}};
  j["arch"] = {{"hidden", c.arch.hidden},
               {"time_embed_k", c.arch.time_embed_k}};
  j["sampling"] = {{"inference_steps", c.sampler.steps},
                   {"noise_level", c.sampler.noise_level}};
  j["training"] = {{"images_per_prompt", c.optim.group_size},
                   {"learning_rate", c.optim.learning_rate},
                   {"weight_decay", c.optim.weight_decay},
                   {"adam_beta1", c.optim.adam_beta1},
                   {"adam_beta2", c.optim.adam_beta2},
                   {"adam_epsilon", c.optim.adam_eps},
                   {"ema_decay", c.optim.ema_decay},
                   {"clip_eps", c.optim.clip_eps},
                   {"inner_epochs", c.optim.inner_epochs},
                   {"adv_std_floor", c.optim.adv_std_floor},
                   {"iterations", c.iterations},
                   {"tasks_per_iteration", c.tasks_per_iteration},
                   {"pretrain_steps", c.pretrain_steps},
                   {"pretrain_batch", c.pretrain_batch},
                   {"pretrain_learning_rate", c.pretrain_lr}};
  j["reward_weights"] = {{"mllm_semantic_score", c.reward_weights.vlm},
                         {"clip_directional_score", c.reward_weights.clip},
                         {"l1_preservation_score", c.reward_weights.diff},
                         {"ssim_preservation_score", c.reward_weights.ssim},
                         {"lpips_preservation_score", c.reward_weights.lpips}};
  j["loss"] = {{"semantic_loss", c.optim.lambda_sem},
               {"preservation_loss", c.optim.lambda_pres},
               {"kl_beta", c.optim.kl_beta}};
  j["seed"] = c.seed;
  j["eval_tasks"] = c.eval_tasks;
  j["oracle_masks"] = c.oracle_masks;
  j["out_dir"] = c.out_dir;
  j["mode"] = mode_name(c.mode);
  return j;
}

// Architecture sized to the environment.
inline Arch arch_for(const RunConfig& c) {
  Arch a = c.arch;
  a.image_h = c.env.height;
  a.image_w = c.env.width;
  a.image_c = 3;
  a.condition_dim = full_condition_dim(c.env);
  a.spatial_maps = c.env.spatial_condition ? 2 : 0;
  return a;
}

}  // namespace editgrpo
