#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "flow.hpp"
#include "grpo.hpp"
#include "metrics.hpp"
#include "segment.hpp"

namespace editgrpo {

// %.17g round-trips doubles exactly, which keeps CSV outputs bit-stable.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- flow-matching pretraining ---------------------------------------------

struct PretrainResult {
  NetParams params;
  std::vector<double> loss_curve;  // one entry per optimizer step
};

// Regress the velocity field on environment tasks: the clean sample is the
// ground-truth edited image for the task's condition.
inline PretrainResult pretrain_flow_matching(const NetParams& initial,
                                             const RunConfig& rc) {
  PretrainResult out;
  out.params = initial;
  AdamW opt(out.params);
  OptimConfig ocfg = rc.optim;
  ocfg.learning_rate = rc.pretrain_lr;
  // Supervised regression gets the conventional Adam eps; the large
  // default only exists to damp PG noise during RL fine-tuning.
  ocfg.adam_eps = 1e-8;

  RngState env_rng(rc.seed, streams::kEnv);
  RngState noise_rng = RngState(rc.seed, streams::kRollout).substream(0xf1);
  RngState t_rng(rc.seed, streams::kTimeDraw);

  for (int step = 0; step < rc.pretrain_steps; ++step) {
    std::vector<EditTask> tasks;
    std::vector<Grid> noises;
    tasks.reserve(rc.pretrain_batch);
    for (int b = 0; b < rc.pretrain_batch; ++b) {
      tasks.push_back(generate_task(env_rng, rc.env));
      noises.push_back(seeded_gaussian(noise_rng, rc.env.height,
                                       rc.env.width, 3));
    }
    std::vector<FmBatchItem> batch;
    for (int b = 0; b < rc.pretrain_batch; ++b)
      batch.push_back({&tasks[b].target, &noises[b], &tasks[b].condition});
    ParamGrads grads = zeros_like(out.params);
    double loss = fm_loss_and_grads(out.params, batch, t_rng, grads,
                                    rc.sampler.steps);
    if (!std::isfinite(loss))
      throw std::runtime_error("pretrain: non-finite loss");
    // cosine learning-rate decay over the pretraining run
    ocfg.learning_rate =
        rc.pretrain_lr * 0.5 *
        (1.0 + std::cos(std::numbers::pi * step / rc.pretrain_steps));
    opt.update(out.params, grads, ocfg);
    out.loss_curve.push_back(loss);
  }
  return out;
}

// --- held-out evaluation ----------------------------------------------------

struct EvalResult {
  MetricReport report;
  double mean_semantic = 0.0;  // env semantic reward on the gt mask
  double mean_l1_to_target = 0.0;
  std::vector<EditTask> tasks;
  std::vector<Grid> edited;
};

inline std::vector<EditTask> heldout_tasks(uint64_t task_seed, int n,
                                           const EnvConfig& env) {
  RngState rng = RngState(task_seed, streams::kEnv).substream(0xe5a1);
  std::vector<EditTask> tasks;
  for (int i = 0; i < n; ++i) {
    tasks.push_back(generate_task(rng, env));
    tasks.back().id = i;
  }
  return tasks;
}

// Deterministic evaluation: ODE samples (a=0) on a seeded held-out task
// set, locality metrics via the Appendix-style pipeline plus the mean
// semantic reward.
inline EvalResult evaluate_policy(const NetParams& params,
                                  const RunConfig& rc, uint64_t task_seed,
                                  int n, const FeatureBank& bank,
                                  SegmenterMode mode = SegmenterMode::kSegment) {
  EvalResult out;
  out.tasks = heldout_tasks(task_seed, n, rc.env);
  RngState noise_rng = RngState(task_seed, streams::kRollout).substream(0xe5a2);
  SamplerConfig ode_cfg = rc.sampler;
  ode_cfg.noise_level = 0.0;

  std::vector<EvalSample> samples;
  RewardWeights rw = rc.reward_weights;
  double sem_sum = 0.0, l1_sum = 0.0;
  for (const auto& task : out.tasks) {
    Grid x1 = seeded_gaussian(noise_rng, rc.env.height, rc.env.width, 3);
    Grid edited = clamp01(ode_sample(params, x1, task.condition, ode_cfg));
    sem_sum += semantic_reward(edited, task, task.gt_mask, rw, bank);
    l1_sum += l1_mean(edited, task.target,
                      RegionMask(rc.env.height, rc.env.width, true));
    EvalSample s;
    s.task_id = task.id;
    s.source = task.source;
    s.edited = edited;
    s.instruction = task.instruction;
    s.gt_mask = task.gt_mask;
    s.category = verb_name(task.instruction.verb);
    samples.push_back(std::move(s));
    out.edited.push_back(std::move(edited));
  }
  out.report = evaluate_set(samples, mode, bank);
  out.mean_semantic = sem_sum / n;
  out.mean_l1_to_target = l1_sum / n;
  return out;
}

inline TrainConfig make_train_config(const RunConfig& rc) {
  TrainConfig tc;
  tc.env = rc.env;
  tc.sampler = rc.sampler;
  tc.optim = rc.optim;
  tc.reward_weights = rc.reward_weights;
  tc.mode = rc.mode;
  tc.oracle_masks = rc.oracle_masks;
  tc.seed = rc.seed;
  tc.iterations = rc.iterations;
  tc.tasks_per_iteration = rc.tasks_per_iteration;
  return tc;
}

// --- CSV emission -----------------------------------------------------------

inline void write_loss_csv(const std::string& path,
                           const std::vector<double>& curve) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "step,loss\n";
  for (size_t i = 0; i < curve.size(); ++i)
    f << i << "," << fmt_g17(curve[i]) << "\n";
}

inline void write_train_log_csv(const std::string& path,
                                const std::vector<TrainLogRow>& log) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "iteration,mean_r_sem,mean_r_pres,mean_abs_adv_sem,mean_abs_adv_pres,"
       "clip_fraction,kl,loss_sem,loss_pres,loss_total,skipped_samples,"
       "skipped_groups\n";
  for (const auto& r : log)
    f << r.iteration << "," << fmt_g17(r.mean_r_sem) << ","
      << fmt_g17(r.mean_r_pres) << "," << fmt_g17(r.mean_abs_adv_sem) << ","
      << fmt_g17(r.mean_abs_adv_pres) << "," << fmt_g17(r.clip_fraction)
      << "," << fmt_g17(r.kl) << "," << fmt_g17(r.loss_sem) << ","
      << fmt_g17(r.loss_pres) << "," << fmt_g17(r.loss_total) << ","
      << r.skipped_samples << "," << r.skipped_groups << "\n";
}

inline void write_metric_report_csv(const std::string& path,
                                    const MetricReport& report,
                                    double mean_semantic) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "task_id,kept,reason,ur,psnr,ssim,perceptual\n";
  for (const auto& r : report.rows)
    f << r.task_id << "," << (r.kept ? 1 : 0) << "," << r.reason << ","
      << fmt_g17(r.ur) << "," << fmt_g17(r.psnr) << "," << fmt_g17(r.ssim)
      << "," << fmt_g17(r.perceptual) << "\n";
  f << "aggregate,," << report.kept_count << "," << fmt_g17(report.mean_ur)
    << "," << fmt_g17(report.mean_psnr) << "," << fmt_g17(report.mean_ssim)
    << "," << fmt_g17(report.mean_perceptual) << "\n";
  f << "semantic_score,,," << fmt_g17(mean_semantic) << ",,,\n";
}

// Per-step trajectory debug dump: state/mean norms, sigma, region log-prob
// means.
inline void write_trajectory_csv(const std::string& path,
                                 const Trajectory& traj,
                                 const RegionMask& region) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "step,state_norm,mean_norm,sigma,region_logprob_mean\n";
  auto norm = [](const Grid& g) {
    double s = 0.0;
    for (double v : g.data) s += v * v;
    return std::sqrt(s);
  };
  for (int k = 0; k < traj.steps(); ++k) {
    double lp = traj.stochastic
                    ? masked_mean(traj.logprob_grids[k], region)
                    : 0.0;
    f << k << "," << fmt_g17(norm(traj.states[k])) << ","
      << fmt_g17(norm(traj.step_means[k])) << ","
      << fmt_g17(traj.step_stds[k]) << "," << fmt_g17(lp) << "\n";
  }
}

// Reward breakdown per rollout sample.
inline void write_reward_breakdown_csv(const std::string& path,
                                       const std::vector<GroupBatch>& groups) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "task_id,sample,r_vlm,r_clip,r_diff,r_ssim,r_lpips,r_sem,r_pres,"
       "skipped\n";
  for (const auto& g : groups)
    for (int i = 0; i < g.size(); ++i) {
      const auto& c = g.rewards[i].components;
      f << g.task.id << "," << i << "," << fmt_g17(c.vlm) << ","
        << fmt_g17(c.clip) << "," << fmt_g17(c.diff) << "," << fmt_g17(c.ssim)
        << "," << fmt_g17(c.lpips) << "," << fmt_g17(g.rewards[i].sem) << ","
        << fmt_g17(g.rewards[i].pres) << "," << (g.skipped[i] ? 1 : 0)
        << "\n";
    }
}

}  // namespace editgrpo
