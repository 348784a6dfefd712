#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "grid.hpp"
#include "net.hpp"

namespace editgrpo {

struct SamplerConfig {
  int steps = 6;
  double noise_level = 0.9;  // a; 0 makes the sampler deterministic

  void validate() const {
    if (steps < 1) throw std::invalid_argument("SamplerConfig: steps >= 1");
    if (noise_level < 0.0)
      throw std::invalid_argument("SamplerConfig: noise_level >= 0");
  }

  // Uniform grid 1 = t_0 > t_1 > ... > t_T = 0 (index = steps taken).
  double time_at(int j) const {
    return 1.0 - static_cast<double>(j) / steps;
  }
  double dt() const { return -1.0 / steps; }
};

// One stochastic rollout: states[0] = x1 (noise) ... states[T] = x0.
// logprob_grids[k] holds the channel-summed per-pixel log density of the
// realized step k transition under the rollout policy (H x W x 1).
struct Trajectory {
  std::vector<Grid> states;
  std::vector<Grid> step_means;
  std::vector<double> step_stds;
  std::vector<Grid> logprob_grids;
  std::vector<double> condition;
  long task_id = -1;
  bool stochastic = false;  // false when a=0; logprob_grids then empty

  int steps() const { return static_cast<int>(step_means.size()); }
};

inline Grid interpolate(const Grid& x0, const Grid& x1, double t) {
  require_same_shape(x0, x1, "interpolate");
  Grid out(x0.height, x0.width, x0.channels);
  for (size_t i = 0; i < out.size(); ++i)
    out.data[i] = (1.0 - t) * x0.data[i] + t * x1.data[i];
  return out;
}

struct FmBatchItem {
  const Grid* x0;
  const Grid* x1;
  const std::vector<double>* condition;
};

// Flow-matching loss: mean over batch and elements of
// ((x1 - x0) - v(x_t, t, c))^2, with exact grads for the sampled t's
// accumulated into grads. t ~ U(0,1) by default; with grid_steps = T > 0
// each t is drawn uniformly from the sampler grid {1, (T-1)/T, ..., 1/T},
// matching the only times inference ever queries.
inline double fm_loss_and_grads(const NetParams& p,
                                const std::vector<FmBatchItem>& batch,
                                RngState& t_rng, ParamGrads& grads,
                                int grid_steps = 0) {
  if (batch.empty())
    throw std::invalid_argument("fm_loss_and_grads: empty batch");
  double loss = 0.0;
  const double n_elem = static_cast<double>(p.arch.image_dim());
  const double denom = n_elem * batch.size();
  for (const auto& item : batch) {
    require_same_shape(*item.x0, *item.x1, "fm_loss_and_grads");
    double t = t_rng.next_uniform();
    if (grid_steps > 0) {
      int k = std::min(static_cast<int>(t * grid_steps), grid_steps - 1);
      t = 1.0 - static_cast<double>(k) / grid_steps;
    }
    Grid x_t = interpolate(*item.x0, *item.x1, t);
    ForwardCache cache;
    Grid v = forward(p, x_t, t, *item.condition, &cache);
    Grid upstream(v.height, v.width, v.channels);
    for (size_t i = 0; i < v.size(); ++i) {
      double target = item.x1->data[i] - item.x0->data[i];
      double r = v.data[i] - target;
      loss += r * r / denom;
      upstream.data[i] = 2.0 * r / denom;
    }
    backward(p, cache, upstream, grads);
  }
  return loss;
}

// Euler integration of the learned ODE from x1 at t=1 down to t=0.
inline Grid ode_sample(const NetParams& p, const Grid& x1,
                       const std::vector<double>& cond,
                       const SamplerConfig& cfg) {
  cfg.validate();
  Grid x = x1;
  const double dt = cfg.dt();
  for (int k = 0; k < cfg.steps; ++k) {
    double t = cfg.time_at(k);
    Grid v = forward(p, x, t, cond);
    for (size_t i = 0; i < x.size(); ++i) x.data[i] += v.data[i] * dt;
  }
  return x;
}

// Channel-summed per-pixel Gaussian log density of x_next given mean/std.
inline Grid pixel_logprob(const Grid& x_next, const Grid& mean,
                          double std_dev) {
  Grid per_elem = gaussian_logpdf(x_next, mean, std_dev);
  Grid out(x_next.height, x_next.width, 1);
  for (int h = 0; h < x_next.height; ++h)
    for (int w = 0; w < x_next.width; ++w) {
      double s = 0.0;
      for (int c = 0; c < x_next.channels; ++c) s += per_elem.at(h, w, c);
      out.at(h, w, 0) = s;
    }
  return out;
}

// Stochastic sampler: per step, mean = x + v*dt, std = a*sqrt(|dt|),
// next = mean + std*eps. With a=0 this reduces, state for state, to the
// ODE path and no log densities are recorded.
inline Trajectory sde_sample(const NetParams& p, const Grid& x1,
                             const std::vector<double>& cond,
                             const SamplerConfig& cfg, RngState& rng) {
  cfg.validate();
  Trajectory traj;
  traj.condition = cond;
  traj.stochastic = cfg.noise_level > 0.0;
  traj.states.push_back(x1);
  const double dt = cfg.dt();
  const double sigma = cfg.noise_level * std::sqrt(std::abs(dt));
  for (int k = 0; k < cfg.steps; ++k) {
    const Grid& x = traj.states.back();
    double t = cfg.time_at(k);
    Grid v = forward(p, x, t, cond);
    Grid mean(x.height, x.width, x.channels);
    for (size_t i = 0; i < x.size(); ++i)
      mean.data[i] = x.data[i] + v.data[i] * dt;
    Grid next = mean;
    if (traj.stochastic) {
      for (auto& val : next.data) val += sigma * rng.next_normal();
      traj.logprob_grids.push_back(pixel_logprob(next, mean, sigma));
    }
    traj.step_means.push_back(std::move(mean));
    traj.step_stds.push_back(sigma);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

// Recompute the step-k per-pixel log density of traj's realized transition
// under parameters p (which may differ from the rollout policy).
inline Grid step_logprob_under(const NetParams& p, const Trajectory& traj,
                               int k, ForwardCache* cache = nullptr,
                               Grid* mean_out = nullptr) {
  if (k < 0 || k >= traj.steps())
    throw std::out_of_range("step_logprob_under: step out of range");
  if (!traj.stochastic)
    throw std::invalid_argument(
        "step_logprob_under: deterministic trajectory has no density");
  SamplerConfig cfg;
  cfg.steps = traj.steps();
  const double t = cfg.time_at(k);
  const double dt = cfg.dt();
  const Grid& x = traj.states[k];
  Grid v = forward(p, x, t, traj.condition, cache);
  Grid mean(x.height, x.width, x.channels);
  for (size_t i = 0; i < x.size(); ++i)
    mean.data[i] = x.data[i] + v.data[i] * dt;
  Grid lp = pixel_logprob(traj.states[k + 1], mean, traj.step_stds[k]);
  if (mean_out) *mean_out = std::move(mean);
  return lp;
}

}  // namespace editgrpo
