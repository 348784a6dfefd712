#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "env.hpp"
#include "grid.hpp"
#include "mask.hpp"
#include "ssim.hpp"

namespace editgrpo {

struct RewardWeights {
  double vlm = 4.0;
  double clip = 1.0;
  double diff = 4.0;
  double ssim = 2.0;
  double lpips = 1.0;
};

// Fixed seeded feature banks shared across a run: a random linear image
// embedding with a matching instruction-direction map (directional-cosine
// proxy) and a bank of random 3x3 conv filters (perceptual proxy).
struct FeatureBank {
  int image_dim = 0;
  int cond_dim = 0;
  static constexpr int kEmbedDim = 32;
  static constexpr int kConvFilters = 8;

  std::vector<double> img_map;   // kEmbedDim x image_dim
  std::vector<double> text_map;  // kEmbedDim x cond_dim
  std::vector<double> conv;      // kConvFilters x 3 x 3 x channels

  FeatureBank(uint64_t seed, int img_h, int img_w, int img_c, int cond) {
    image_dim = img_h * img_w * img_c;
    cond_dim = cond;
    RngState rng(seed, streams::kFeatureBank);
    img_map.resize(static_cast<size_t>(kEmbedDim) * image_dim);
    const double s_img = 1.0 / std::sqrt(static_cast<double>(image_dim));
    for (auto& v : img_map) v = s_img * rng.next_normal();
    text_map.resize(static_cast<size_t>(kEmbedDim) * cond_dim);
    const double s_txt = 1.0 / std::sqrt(static_cast<double>(cond_dim));
    for (auto& v : text_map) v = s_txt * rng.next_normal();
    conv.resize(static_cast<size_t>(kConvFilters) * 9 * img_c);
    for (auto& v : conv) v = rng.next_normal() / 3.0;
  }

  std::vector<double> embed_image(const Grid& img) const {
    if (static_cast<int>(img.size()) != image_dim)
      throw std::invalid_argument("FeatureBank: image size mismatch");
    std::vector<double> e(kEmbedDim, 0.0);
    for (int o = 0; o < kEmbedDim; ++o) {
      const double* row = &img_map[static_cast<size_t>(o) * image_dim];
      double acc = 0.0;
      for (int i = 0; i < image_dim; ++i) acc += row[i] * img.data[i];
      e[o] = acc;
    }
    return e;
  }

  std::vector<double> embed_condition(const std::vector<double>& c) const {
    if (static_cast<int>(c.size()) != cond_dim)
      throw std::invalid_argument("FeatureBank: condition size mismatch");
    std::vector<double> e(kEmbedDim, 0.0);
    for (int o = 0; o < kEmbedDim; ++o) {
      const double* row = &text_map[static_cast<size_t>(o) * cond_dim];
      double acc = 0.0;
      for (int i = 0; i < cond_dim; ++i) acc += row[i] * c[i];
      e[o] = acc;
    }
    return e;
  }
};

// --- semantic following -------------------------------------------------

// Error anchors mapping masked L1 error to the 0..5 score set: error 0
// peaks at score 5, error >= 0.5 at score 0.
constexpr std::array<double, 6> kScoreAnchors = {0.5, 0.4, 0.3, 0.2, 0.1,
                                                 0.0};
constexpr double kScoreSharpness = 10.0;

inline std::array<double, 6> score_distribution(const Grid& edited,
                                                const EditTask& task,
                                                const RegionMask& m) {
  if (m.empty()) throw std::invalid_argument("score_distribution: empty mask");
  const double e = l1_mean(edited, task.target, m);
  std::array<double, 6> logits;
  double max_logit = -1e300;
  for (int s = 0; s < 6; ++s) {
    logits[s] = -kScoreSharpness * std::abs(e - kScoreAnchors[s]);
    max_logit = std::max(max_logit, logits[s]);
  }
  double z = 0.0;
  for (int s = 0; s < 6; ++s) {
    logits[s] = std::exp(logits[s] - max_logit);
    z += logits[s];
  }
  for (int s = 0; s < 6; ++s) logits[s] /= z;
  return logits;
}

// Expected score normalized to [0,1].
inline double r_vlm(const std::array<double, 6>& probs) {
  double sum = 0.0, expect = 0.0;
  for (int s = 0; s < 6; ++s) {
    sum += probs[s];
    expect += s * probs[s];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("r_vlm: probabilities do not sum to 1");
  return expect / 5.0;
}

namespace detail {

inline double cosine(const std::vector<double>& a,
                     const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline Grid zero_outside_rgb(const Grid& img, const RegionMask& keep) {
  Grid out = img;
  for (int h = 0; h < img.height; ++h)
    for (int w = 0; w < img.width; ++w)
      if (!keep.get(h, w))
        for (int c = 0; c < img.channels; ++c) out.at(h, w, c) = 0.0;
  return out;
}

}  // namespace detail

// Directional-cosine proxy on the edit region: cosine between the feature
// delta of the masked images and the mapped instruction direction.
inline double r_clip_proxy(const Grid& source, const Grid& edited,
                           const std::vector<double>& condition,
                           const RegionMask& m, const FeatureBank& bank) {
  require_same_shape(source, edited, "r_clip_proxy");
  auto fs = bank.embed_image(detail::zero_outside_rgb(source, m));
  auto fe = bank.embed_image(detail::zero_outside_rgb(edited, m));
  std::vector<double> delta(fs.size());
  for (size_t i = 0; i < fs.size(); ++i) delta[i] = fe[i] - fs[i];
  return detail::cosine(delta, bank.embed_condition(condition));
}

// --- locality preservation ----------------------------------------------

inline double r_diff(const Grid& source, const Grid& edited,
                     const RegionMask& m_bar) {
  return 1.0 - l1_mean(source, edited, m_bar);
}

inline double r_ssim(const Grid& source, const Grid& edited,
                     const RegionMask& m_bar) {
  Grid ga = zero_outside(to_grayscale(source), m_bar);
  Grid gb = zero_outside(to_grayscale(edited), m_bar);
  return ssim_over_centers(ga, gb, m_bar, 1.0);
}

// Negated mean squared distance between random-conv feature maps of the
// masked images, over positions with center in the mask.
inline double perceptual_distance(const Grid& a, const Grid& b,
                                  const RegionMask& m_bar,
                                  const FeatureBank& bank) {
  require_same_shape(a, b, "perceptual_distance");
  require_mask_matches(a, m_bar, "perceptual_distance");
  if (m_bar.empty())
    throw std::invalid_argument("perceptual_distance: empty mask");
  Grid ma = detail::zero_outside_rgb(a, m_bar);
  Grid mb = detail::zero_outside_rgb(b, m_bar);
  const int C = a.channels;
  double total = 0.0;
  long count = 0;
  for (int h = 0; h < a.height; ++h)
    for (int w = 0; w < a.width; ++w) {
      if (!m_bar.get(h, w)) continue;
      for (int f = 0; f < FeatureBank::kConvFilters; ++f) {
        const double* filt = &bank.conv[static_cast<size_t>(f) * 9 * C];
        double fa = 0.0, fb = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int y = h + dy, x = w + dx;
            if (y < 0 || y >= a.height || x < 0 || x >= a.width) continue;
            const double* fk = filt + ((dy + 1) * 3 + (dx + 1)) * C;
            for (int c = 0; c < C; ++c) {
              fa += fk[c] * ma.at(y, x, c);
              fb += fk[c] * mb.at(y, x, c);
            }
          }
        double d = fa - fb;
        total += d * d;
        ++count;
      }
    }
  return total / static_cast<double>(count);
}

inline double r_lpips_proxy(const Grid& source, const Grid& edited,
                            const RegionMask& m_bar, const FeatureBank& bank) {
  return -perceptual_distance(source, edited, m_bar, bank);
}

// --- combined rewards ---------------------------------------------------

struct RewardComponents {
  double vlm = 0.0;
  double clip = 0.0;
  double diff = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
};

struct RewardPair {
  double sem = 0.0;
  double pres = 0.0;
  RewardComponents components;
};

inline double semantic_reward(const Grid& edited, const EditTask& task,
                              const RegionMask& m, const RewardWeights& w,
                              const FeatureBank& bank,
                              RewardComponents* out = nullptr) {
  double vlm = r_vlm(score_distribution(edited, task, m));
  double clip = r_clip_proxy(task.source, edited, task.condition, m, bank);
  if (out) {
    out->vlm = vlm;
    out->clip = clip;
  }
  return w.vlm * vlm + w.clip * clip;
}

inline double preservation_reward(const Grid& source, const Grid& edited,
                                  const RegionMask& m_bar,
                                  const RewardWeights& w,
                                  const FeatureBank& bank,
                                  RewardComponents* out = nullptr) {
  double diff = r_diff(source, edited, m_bar);
  double ssim = r_ssim(source, edited, m_bar);
  double lpips = r_lpips_proxy(source, edited, m_bar, bank);
  if (out) {
    out->diff = diff;
    out->ssim = ssim;
    out->lpips = lpips;
  }
  return w.diff * diff + w.ssim * ssim + w.lpips * lpips;
}

inline RewardPair evaluate_rewards(const Grid& edited, const EditTask& task,
                                   const RegionMask& m,
                                   const RewardWeights& w,
                                   const FeatureBank& bank) {
  RewardPair r;
  r.sem = semantic_reward(edited, task, m, w, bank, &r.components);
  r.pres = preservation_reward(task.source, edited, complement(m), w, bank,
                               &r.components);
  return r;
}

}  // namespace editgrpo
