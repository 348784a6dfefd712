#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "env.hpp"
#include "flow.hpp"
#include "grid.hpp"
#include "mask.hpp"
#include "net.hpp"
#include "rewards.hpp"
#include "segment.hpp"

namespace editgrpo {

struct OptimConfig {
  int group_size = 8;        // G
  double clip_eps = 0.2;
  double kl_beta = 1e-4;
  double lambda_sem = 0.5;
  double lambda_pres = 1.0;
  double learning_rate = 3e-4;
  int inner_epochs = 1;
  double ema_decay = 0.9;
  double adv_std_floor = 1e-8;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  // Large relative to typical second-moment estimates on purpose: with a
  // near-converged base policy most PG gradients are group-sampling noise,
  // and the raw-Adam normalization would turn that noise into full
  // lr-sized steps every update. A large eps makes the step proportional
  // to the gradient magnitude for small gradients (trust-region-like),
  // which keeps genuine reward signal while suppressing random drift.
  double adam_eps = 5e-3;

  void validate() const {
    if (group_size < 2) throw std::invalid_argument("OptimConfig: G >= 2");
    if (!(clip_eps > 0.0 && clip_eps < 1.0))
      throw std::invalid_argument("OptimConfig: clip_eps in (0,1)");
    if (kl_beta < 0.0 || lambda_sem < 0.0 || lambda_pres < 0.0)
      throw std::invalid_argument("OptimConfig: nonnegative coefficients");
    if (adam_eps <= 0.0)
      throw std::invalid_argument("OptimConfig: adam_eps > 0");
  }
};

enum class Mode { kDecoupled = 0, kCombined = 1, kSemanticOnly = 2,
                  kPreservationOnly = 3 };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kDecoupled: return "decoupled";
    case Mode::kCombined: return "combined";
    case Mode::kSemanticOnly: return "semantic_only";
    case Mode::kPreservationOnly: return "preservation_only";
  }
  return "?";
}

inline std::optional<Mode> mode_from_name(const std::string& s) {
  if (s == "decoupled") return Mode::kDecoupled;
  if (s == "combined") return Mode::kCombined;
  if (s == "semantic_only") return Mode::kSemanticOnly;
  if (s == "preservation_only") return Mode::kPreservationOnly;
  return std::nullopt;
}

struct GroupBatch {
  EditTask task;
  std::vector<Trajectory> trajectories;
  std::vector<Grid> edited;        // clamped final-step means
  std::vector<RegionMask> masks;   // per-sample M^i
  std::vector<RewardPair> rewards;
  std::vector<uint8_t> skipped;    // area-filter dropouts
  std::vector<std::string> skip_reasons;

  int size() const { return static_cast<int>(trajectories.size()); }
  int usable() const {
    int n = 0;
    for (auto s : skipped) n += s ? 0 : 1;
    return n;
  }
};

// (v - mean) / (std + floor) with population std; skipped entries get 0.
// Returns nullopt when fewer than two values are usable.
inline std::optional<std::vector<double>> group_normalize(
    const std::vector<double>& values, const std::vector<uint8_t>& skipped,
    double std_floor) {
  const size_t n = values.size();
  double sum = 0.0;
  long count = 0;
  for (size_t i = 0; i < n; ++i)
    if (!skipped[i]) {
      sum += values[i];
      ++count;
    }
  if (count < 2) return std::nullopt;
  double mean = sum / count;
  double var = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (!skipped[i]) {
      double d = values[i] - mean;
      var += d * d;
    }
  double std_dev = std::sqrt(var / count);
  std::vector<double> adv(n, 0.0);
  for (size_t i = 0; i < n; ++i)
    if (!skipped[i]) adv[i] = (values[i] - mean) / (std_dev + std_floor);
  return adv;
}

inline std::optional<std::vector<double>> group_normalize(
    const std::vector<double>& values, double std_floor) {
  return group_normalize(values, std::vector<uint8_t>(values.size(), 0),
                         std_floor);
}

struct RegionLogprob {
  std::vector<double> per_step;
  double mean = 0.0;
};

// Region-aggregated log probability: per step, the masked mean of the
// per-pixel log-density grid under the given parameters; plus the mean
// over steps.
inline RegionLogprob region_logprob(const Trajectory& traj,
                                    const RegionMask& m,
                                    const NetParams& params) {
  if (m.empty()) throw std::invalid_argument("region_logprob: empty region");
  RegionLogprob out;
  const int T = traj.steps();
  for (int k = 0; k < T; ++k) {
    Grid lp = step_logprob_under(params, traj, k);
    out.per_step.push_back(masked_mean(lp, m));
  }
  for (double v : out.per_step) out.mean += v;
  out.mean /= T;
  return out;
}

// Region log probability from the densities stored at rollout time.
inline RegionLogprob region_logprob_stored(const Trajectory& traj,
                                           const RegionMask& m) {
  if (m.empty()) throw std::invalid_argument("region_logprob: empty region");
  RegionLogprob out;
  for (const auto& lp : traj.logprob_grids)
    out.per_step.push_back(masked_mean(lp, m));
  for (double v : out.per_step) out.mean += v;
  out.mean /= traj.steps();
  return out;
}

struct ClipPg {
  double loss = 0.0;
  double dloss_dlogp = 0.0;  // gradient through logp_new
  bool clipped = false;      // clipped branch active and selected
};

// loss = -min(rho * A, clip(rho, 1 +/- eps) * A), rho = exp(logp_new - logp_old)
inline ClipPg clip_pg_loss(double advantage, double logp_new, double logp_old,
                           double eps) {
  ClipPg out;
  double rho = std::exp(logp_new - logp_old);
  double clipped_rho = std::min(std::max(rho, 1.0 - eps), 1.0 + eps);
  double unclipped = rho * advantage;
  double clipped = clipped_rho * advantage;
  if (unclipped <= clipped) {
    out.loss = -unclipped;
    out.dloss_dlogp = -rho * advantage;
    out.clipped = false;
  } else {
    out.loss = -clipped;
    // gradient flows only if the clip is inactive at this rho
    out.dloss_dlogp = (clipped_rho == rho) ? -rho * advantage : 0.0;
    out.clipped = clipped_rho != rho;
  }
  return out;
}

// Analytic same-std Gaussian KL between the current and reference policy
// transition means, evaluated at the realized trajectory states; mean over
// steps and pixels.
inline double kl_penalty(const Trajectory& traj, const NetParams& params,
                         const NetParams& ref_params) {
  if (!traj.stochastic)
    throw std::domain_error("kl_penalty: undefined for a=0 rollout");
  const int T = traj.steps();
  double total = 0.0;
  for (int k = 0; k < T; ++k) {
    Grid mean_cur, mean_ref;
    step_logprob_under(params, traj, k, nullptr, &mean_cur);
    step_logprob_under(ref_params, traj, k, nullptr, &mean_ref);
    double sigma = traj.step_stds[k];
    double acc = 0.0;
    for (size_t i = 0; i < mean_cur.size(); ++i) {
      double d = mean_cur.data[i] - mean_ref.data[i];
      acc += d * d;
    }
    int npix = mean_cur.height * mean_cur.width;
    total += acc / (2.0 * sigma * sigma) / npix;
  }
  return total / T;
}

struct LossBreakdown {
  double sem = 0.0;
  double pres = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double clip_fraction = 0.0;
  double mean_abs_adv_sem = 0.0;
  double mean_abs_adv_pres = 0.0;
  double mean_r_sem = 0.0;
  double mean_r_pres = 0.0;
  int usable = 0;
};

namespace detail {

// One policy-gradient branch: weight * ClipPG(advantage, ratio over mask).
struct Branch {
  double weight;
  const RegionMask* mask;
  double advantage;
  double logp_old;
  int tag;  // 0 = semantic, 1 = preservation
};

// Shared core for the decoupled and global objectives. For each usable
// sample, recomputes per-step transition means/densities under params,
// applies every branch's clipped PG loss on its region, adds the KL term,
// and backpropagates the combined upstream in a single pass per step.
inline LossBreakdown step_impl(
    const GroupBatch& batch,
    const std::vector<std::vector<Branch>>& branches_per_sample,
    const NetParams& params, const NetParams* ref_params,
    const OptimConfig& cfg, ParamGrads& grads) {
  LossBreakdown out;
  const int n_usable = batch.usable();
  out.usable = n_usable;
  if (n_usable < 2)
    throw std::invalid_argument("step_impl: need >= 2 usable samples");

  const bool use_kl = cfg.kl_beta > 0.0 && ref_params != nullptr;
  long clip_events = 0, clip_opportunities = 0;

  for (int i = 0; i < batch.size(); ++i) {
    if (batch.skipped[i]) continue;
    const Trajectory& traj = batch.trajectories[i];
    const int T = traj.steps();
    SamplerConfig scfg;
    scfg.steps = T;
    const double dt = scfg.dt();

    // per-step recomputation under current params
    std::vector<ForwardCache> caches(T);
    std::vector<Grid> means(T);
    std::vector<Grid> lp_grids(T);
    for (int k = 0; k < T; ++k)
      lp_grids[k] = step_logprob_under(params, traj, k, &caches[k], &means[k]);

    // branch losses and upstream weights on the per-step region means
    struct BranchEval {
      ClipPg pg;
      const Branch* branch;
    };
    std::vector<BranchEval> evals;
    for (const auto& br : branches_per_sample[i]) {
      double logp_new = 0.0;
      for (int k = 0; k < T; ++k) logp_new += masked_mean(lp_grids[k], *br.mask);
      logp_new /= T;
      ClipPg pg = clip_pg_loss(br.advantage, logp_new, br.logp_old,
                               cfg.clip_eps);
      double contrib = br.weight * pg.loss / n_usable;
      out.total += contrib;
      (br.tag == 0 ? out.sem : out.pres) += contrib;
      evals.push_back({pg, &br});
      clip_events += pg.clipped ? 1 : 0;
      ++clip_opportunities;
    }

    double kl_i = 0.0;
    for (int k = 0; k < T; ++k) {
      const Grid& x_next = traj.states[k + 1];
      const double sigma = traj.step_stds[k];
      const double inv_var = 1.0 / (sigma * sigma);
      Grid mean_ref;
      if (use_kl) step_logprob_under(*ref_params, traj, k, nullptr, &mean_ref);

      Grid upstream(x_next.height, x_next.width, x_next.channels);
      const int npix = x_next.height * x_next.width;
      for (int h = 0; h < x_next.height; ++h)
        for (int w = 0; w < x_next.width; ++w) {
          // d(region logp)/d(mu) summed over active branches at this pixel
          double coeff = 0.0;
          for (const auto& ev : evals) {
            if (!ev.branch->mask->get(h, w)) continue;
            coeff += ev.branch->weight * ev.pg.dloss_dlogp /
                     (n_usable * static_cast<double>(T) *
                      ev.branch->mask->area);
          }
          for (int c = 0; c < x_next.channels; ++c) {
            double mu = means[k].at(h, w, c);
            double dlogp_dmu = (x_next.at(h, w, c) - mu) * inv_var;
            double up = coeff * dlogp_dmu;
            if (use_kl) {
              double dkl = (mu - mean_ref.at(h, w, c)) * inv_var /
                           (static_cast<double>(T) * npix);
              up += cfg.kl_beta * dkl / n_usable;
            }
            upstream.at(h, w, c) = up * dt;  // mu = x + v*dt
          }
        }
      if (use_kl) {
        double acc = 0.0;
        for (size_t idx = 0; idx < means[k].size(); ++idx) {
          double d = means[k].data[idx] - mean_ref.data[idx];
          acc += d * d;
        }
        kl_i += acc * inv_var / 2.0 / npix;
      }
      backward(params, caches[k], upstream, grads);
    }
    if (use_kl) {
      kl_i /= T;
      out.kl += kl_i / n_usable;
      out.total += cfg.kl_beta * kl_i / n_usable;
    }
  }
  out.clip_fraction = clip_opportunities == 0
                          ? 0.0
                          : static_cast<double>(clip_events) /
                                clip_opportunities;
  return out;
}

}  // namespace detail

// Region-decoupled objective with caller-supplied region masks per branch;
// the test-facing generalization of decoupled_step.
inline LossBreakdown decoupled_step_with_regions(
    const GroupBatch& batch, const std::vector<RegionMask>& sem_masks,
    const std::vector<RegionMask>& pres_masks, const NetParams& params,
    const NetParams* ref_params, const OptimConfig& cfg, ParamGrads& grads) {
  cfg.validate();
  const int G = batch.size();
  std::vector<double> r_sem(G, 0.0), r_pres(G, 0.0);
  for (int i = 0; i < G; ++i) {
    r_sem[i] = batch.rewards[i].sem;
    r_pres[i] = batch.rewards[i].pres;
  }
  auto adv_sem = group_normalize(r_sem, batch.skipped, cfg.adv_std_floor);
  auto adv_pres = group_normalize(r_pres, batch.skipped, cfg.adv_std_floor);
  if (!adv_sem || !adv_pres)
    throw std::invalid_argument("decoupled_step: fewer than 2 usable samples");

  std::vector<std::vector<detail::Branch>> branches(G);
  for (int i = 0; i < G; ++i) {
    if (batch.skipped[i]) continue;
    const Trajectory& traj = batch.trajectories[i];
    if (cfg.lambda_sem > 0.0) {
      double logp_old = region_logprob_stored(traj, sem_masks[i]).mean;
      branches[i].push_back(
          {cfg.lambda_sem, &sem_masks[i], (*adv_sem)[i], logp_old, 0});
    }
    if (cfg.lambda_pres > 0.0) {
      double logp_old = region_logprob_stored(traj, pres_masks[i]).mean;
      branches[i].push_back(
          {cfg.lambda_pres, &pres_masks[i], (*adv_pres)[i], logp_old, 1});
    }
  }
  LossBreakdown out =
      detail::step_impl(batch, branches, params, ref_params, cfg, grads);

  const int n = batch.usable();
  for (int i = 0; i < G; ++i) {
    if (batch.skipped[i]) continue;
    out.mean_abs_adv_sem += std::abs((*adv_sem)[i]) / n;
    out.mean_abs_adv_pres += std::abs((*adv_pres)[i]) / n;
    out.mean_r_sem += r_sem[i] / n;
    out.mean_r_pres += r_pres[i] / n;
  }
  return out;
}

// Eq.-16-style region-decoupled update: semantic branch on M^i,
// preservation branch on the complement.
inline LossBreakdown decoupled_step(const GroupBatch& batch,
                                    const NetParams& params,
                                    const NetParams* ref_params,
                                    const OptimConfig& cfg,
                                    ParamGrads& grads) {
  std::vector<RegionMask> pres_masks;
  pres_masks.reserve(batch.masks.size());
  for (const auto& m : batch.masks) pres_masks.push_back(complement(m));
  return decoupled_step_with_regions(batch, batch.masks, pres_masks, params,
                                     ref_params, cfg, grads);
}

// Ablation baseline: one combined reward, one advantage, full-image
// log-prob aggregation, weighted by lambda_sem + lambda_pres so the
// degenerate full-mask case matches the decoupled objective.
inline LossBreakdown global_step(const GroupBatch& batch,
                                 const NetParams& params,
                                 const NetParams* ref_params,
                                 const OptimConfig& cfg, ParamGrads& grads) {
  cfg.validate();
  const int G = batch.size();
  std::vector<double> r(G, 0.0);
  for (int i = 0; i < G; ++i)
    r[i] = batch.rewards[i].sem + batch.rewards[i].pres;
  auto adv = group_normalize(r, batch.skipped, cfg.adv_std_floor);
  if (!adv)
    throw std::invalid_argument("global_step: fewer than 2 usable samples");

  const double weight = cfg.lambda_sem + cfg.lambda_pres;
  const auto& any_state = batch.trajectories.front().states.front();
  static thread_local RegionMask full;  // reused between calls
  if (full.height != any_state.height || full.width != any_state.width)
    full = RegionMask(any_state.height, any_state.width, true);

  std::vector<std::vector<detail::Branch>> branches(G);
  for (int i = 0; i < G; ++i) {
    if (batch.skipped[i]) continue;
    double logp_old =
        region_logprob_stored(batch.trajectories[i], full).mean;
    branches[i].push_back({weight, &full, (*adv)[i], logp_old, 0});
  }
  LossBreakdown out =
      detail::step_impl(batch, branches, params, ref_params, cfg, grads);

  const int n = batch.usable();
  for (int i = 0; i < G; ++i) {
    if (batch.skipped[i]) continue;
    out.mean_abs_adv_sem += std::abs((*adv)[i]) / n;
    out.mean_abs_adv_pres += std::abs((*adv)[i]) / n;
    out.mean_r_sem += batch.rewards[i].sem / n;
    out.mean_r_pres += batch.rewards[i].pres / n;
  }
  return out;
}

inline void ema_update(NetParams& ema, const NetParams& params, double decay) {
  if (!(decay >= 0.0 && decay < 1.0))
    throw std::invalid_argument("ema_update: decay in [0,1)");
  if (ema.count() != params.count())
    throw std::invalid_argument("ema_update: shape mismatch");
  for (size_t li = 0; li < ema.layers.size(); ++li) {
    auto& el = ema.layers[li];
    const auto& pl = params.layers[li];
    for (size_t i = 0; i < el.w.size(); ++i)
      el.w[i] = decay * el.w[i] + (1.0 - decay) * pl.w[i];
    for (size_t i = 0; i < el.b.size(); ++i)
      el.b[i] = decay * el.b[i] + (1.0 - decay) * pl.b[i];
  }
  for (size_t i = 0; i < ema.skip.w.size(); ++i)
    ema.skip.w[i] = decay * ema.skip.w[i] + (1.0 - decay) * params.skip.w[i];
  for (size_t i = 0; i < ema.skip.b.size(); ++i)
    ema.skip.b[i] = decay * ema.skip.b[i] + (1.0 - decay) * params.skip.b[i];
  for (size_t li = 0; li < ema.paint.size(); ++li) {
    auto& el = ema.paint[li];
    const auto& pl = params.paint[li];
    for (size_t i = 0; i < el.w.size(); ++i)
      el.w[i] = decay * el.w[i] + (1.0 - decay) * pl.w[i];
    for (size_t i = 0; i < el.b.size(); ++i)
      el.b[i] = decay * el.b[i] + (1.0 - decay) * pl.b[i];
  }
}

// Adaptive-moment optimizer with decoupled weight decay.
struct AdamW {
  NetParams m, v;
  long step = 0;

  explicit AdamW(const NetParams& params)
      : m(zeros_like(params)), v(zeros_like(params)) {}

  void update(NetParams& params, const ParamGrads& grads,
              const OptimConfig& cfg) {
    ++step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, step);
    const double bc2 = 1.0 - std::pow(b2, step);
    const double lr = cfg.learning_rate;
    auto apply = [&](std::vector<double>& p, const std::vector<double>& g,
                     std::vector<double>& mm, std::vector<double>& vv,
                     bool decay) {
      for (size_t i = 0; i < p.size(); ++i) {
        mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
        vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
        double mhat = mm[i] / bc1;
        double vhat = vv[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps));
        if (decay) p[i] -= lr * cfg.weight_decay * p[i];
      }
    };
    for (size_t li = 0; li < params.layers.size(); ++li) {
      apply(params.layers[li].w, grads.layers[li].w, m.layers[li].w,
            v.layers[li].w, true);
      apply(params.layers[li].b, grads.layers[li].b, m.layers[li].b,
            v.layers[li].b, false);
    }
    apply(params.skip.w, grads.skip.w, m.skip.w, v.skip.w, true);
    apply(params.skip.b, grads.skip.b, m.skip.b, v.skip.b, false);
    for (size_t li = 0; li < params.paint.size(); ++li) {
      apply(params.paint[li].w, grads.paint[li].w, m.paint[li].w,
            v.paint[li].w, true);
      apply(params.paint[li].b, grads.paint[li].b, m.paint[li].b,
            v.paint[li].b, false);
    }
  }
};

// --- training loop --------------------------------------------------------

struct TrainLogRow {
  int iteration = 0;
  double mean_r_sem = 0.0, mean_r_pres = 0.0;
  double mean_abs_adv_sem = 0.0, mean_abs_adv_pres = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double loss_sem = 0.0, loss_pres = 0.0, loss_total = 0.0;
  int skipped_samples = 0, skipped_groups = 0;
};

struct TrainConfig {
  EnvConfig env;
  SamplerConfig sampler;
  OptimConfig optim;
  RewardWeights reward_weights;
  Mode mode = Mode::kDecoupled;
  bool oracle_masks = false;
  uint64_t seed = 0;
  int iterations = 300;
  int tasks_per_iteration = 8;
};

struct TrainResult {
  NetParams params;
  NetParams ema;
  std::vector<TrainLogRow> log;
};

inline Grid clamp01(const Grid& g) {
  Grid out = g;
  for (auto& v : out.data) v = std::min(1.0, std::max(0.0, v));
  return out;
}

// Algorithm-1 style loop: rollout G trajectories per task under the
// iteration-start policy snapshot, score and mask each sample, run inner
// policy-update epochs, maintain an EMA, then sync the old policy.
inline TrainResult train(const NetParams& initial, const TrainConfig& tc,
                         const FeatureBank& bank) {
  tc.optim.validate();
  tc.sampler.validate();
  TrainResult result;
  result.params = initial;
  result.ema = initial;

  OptimConfig cfg = tc.optim;
  if (tc.mode == Mode::kSemanticOnly) cfg.lambda_pres = 0.0;
  if (tc.mode == Mode::kPreservationOnly) cfg.lambda_sem = 0.0;

  AdamW opt(result.params);
  const NetParams ref = initial;  // frozen reference policy for the KL term
  RngState env_rng(tc.seed, streams::kEnv);
  RngState rollout_base(tc.seed, streams::kRollout);

  for (int it = 0; it < tc.iterations; ++it) {
    const NetParams old_params = result.params;  // pi_old snapshot
    std::vector<GroupBatch> groups;

    for (int ti = 0; ti < tc.tasks_per_iteration; ++ti) {
      GroupBatch batch;
      batch.task = generate_task(env_rng, tc.env);
      batch.task.id = static_cast<long>(it) * tc.tasks_per_iteration + ti;
      for (int i = 0; i < cfg.group_size; ++i) {
        RngState rng = rollout_base.substream(it, ti, i);
        Grid x1 = seeded_gaussian(rng, tc.env.height, tc.env.width, 3);
        Trajectory traj =
            sde_sample(old_params, x1, batch.task.condition, tc.sampler, rng);
        traj.task_id = batch.task.id;
        // Reward the final-step mean, not the noise-injected final state:
        // the last transition's exploration noise (sigma = a*sqrt|dt|) would
        // otherwise dominate every reward term and drown the group signal.
        Grid edited = clamp01(traj.step_means.back());

        RegionMask m = tc.oracle_masks
                           ? batch.task.gt_mask
                           : segment_union(batch.task.source, edited,
                                           batch.task.instruction);
        FilterDecision fd = area_filter(m);
        RewardPair rp;
        if (fd.keep)
          rp = evaluate_rewards(edited, batch.task, m, tc.reward_weights,
                                bank);
        batch.trajectories.push_back(std::move(traj));
        batch.edited.push_back(std::move(edited));
        batch.masks.push_back(std::move(m));
        batch.rewards.push_back(rp);
        batch.skipped.push_back(fd.keep ? 0 : 1);
        batch.skip_reasons.push_back(filter_reason_name(fd.reason));
      }
      groups.push_back(std::move(batch));
    }

    TrainLogRow row;
    row.iteration = it;
    int updates = 0;
    // Gradients from every task group in the iteration are averaged into a
    // single optimizer step per inner epoch; per-group updates would give
    // the low-sample PG noise an Adam-sized step of its own each time.
    for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
      ParamGrads grads = zeros_like(result.params);
      int used_groups = 0;
      for (const auto& batch : groups) {
        for (auto s : batch.skipped) row.skipped_samples += (epoch == 0 && s) ? 1 : 0;
        if (batch.usable() < 2) {
          if (epoch == 0) ++row.skipped_groups;
          continue;
        }
        LossBreakdown lb =
            (tc.mode == Mode::kCombined)
                ? global_step(batch, result.params, &ref, cfg, grads)
                : decoupled_step(batch, result.params, &ref, cfg, grads);
        if (!std::isfinite(lb.total))
          throw std::runtime_error("train: non-finite loss");
        ++used_groups;
        row.mean_r_sem += lb.mean_r_sem;
        row.mean_r_pres += lb.mean_r_pres;
        row.mean_abs_adv_sem += lb.mean_abs_adv_sem;
        row.mean_abs_adv_pres += lb.mean_abs_adv_pres;
        row.clip_fraction += lb.clip_fraction;
        row.kl += lb.kl;
        row.loss_sem += lb.sem;
        row.loss_pres += lb.pres;
        row.loss_total += lb.total;
        ++updates;
      }
      if (used_groups == 0) continue;
      const double inv = 1.0 / used_groups;
      auto scale = [inv](std::vector<double>& v) {
        for (double& g : v) g *= inv;
      };
      for (auto& l : grads.layers) {
        scale(l.w);
        scale(l.b);
      }
      scale(grads.skip.w);
      scale(grads.skip.b);
      for (auto& l : grads.paint) {
        scale(l.w);
        scale(l.b);
      }
      for (const auto& l : grads.layers)
        for (double g : l.w)
          if (!std::isfinite(g))
            throw std::runtime_error("train: non-finite gradient");
      for (double g : grads.skip.w)
        if (!std::isfinite(g))
          throw std::runtime_error("train: non-finite gradient");
      for (const auto& pl : grads.paint)
        for (double g : pl.w)
          if (!std::isfinite(g))
            throw std::runtime_error("train: non-finite gradient");
      opt.update(result.params, grads, cfg);
    }
    if (updates > 0) {
      row.mean_r_sem /= updates;
      row.mean_r_pres /= updates;
      row.mean_abs_adv_sem /= updates;
      row.mean_abs_adv_pres /= updates;
      row.clip_fraction /= updates;
      row.kl /= updates;
      row.loss_sem /= updates;
      row.loss_pres /= updates;
      row.loss_total /= updates;
    }
    result.log.push_back(row);
    ema_update(result.ema, result.params, cfg.ema_decay);
  }
  return result;
}

}  // namespace editgrpo
