#pragma once

#include <cmath>
#include <vector>

#include "grid.hpp"
#include "mask.hpp"

namespace editgrpo {

// 11x11 Gaussian window, sigma 1.5 (Wang et al. defaults). Windows that
// overlap the image border are clipped and their weights renormalized.
struct SsimWindow {
  static constexpr int kRadius = 5;
  std::array<double, 11> w;

  SsimWindow() {
    double sum = 0.0;
    for (int i = -kRadius; i <= kRadius; ++i) {
      double v = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
      w[i + kRadius] = v;
      sum += v;
    }
    for (auto& v : w) v /= sum;
  }
};

inline const SsimWindow& ssim_window() {
  static const SsimWindow win;
  return win;
}

// Luma grayscale; works for both the [0,1] and the 8-bit domain since the
// weights sum to 1.
inline Grid to_grayscale(const Grid& img) {
  Grid g(img.height, img.width, 1);
  for (int h = 0; h < img.height; ++h)
    for (int w = 0; w < img.width; ++w)
      g.at(h, w, 0) = 0.299 * img.at(h, w, 0) + 0.587 * img.at(h, w, 1) +
                      0.114 * img.at(h, w, 2);
  return g;
}

inline Grid zero_outside(const Grid& gray, const RegionMask& keep) {
  Grid out = gray;
  for (int h = 0; h < gray.height; ++h)
    for (int w = 0; w < gray.width; ++w)
      if (!keep.get(h, w)) out.at(h, w, 0) = 0.0;
  return out;
}

// Mean SSIM over windows centered on the given pixels. Inputs are
// single-channel grids; data_range sets C1 = (0.01 L)^2, C2 = (0.03 L)^2.
inline double ssim_over_centers(const Grid& a, const Grid& b,
                                const RegionMask& centers,
                                double data_range) {
  require_same_shape(a, b, "ssim");
  require_mask_matches(a, centers, "ssim");
  if (centers.empty()) throw std::invalid_argument("ssim: empty mask");
  const double c1 = 0.01 * data_range * 0.01 * data_range;
  const double c2 = 0.03 * data_range * 0.03 * data_range;
  const auto& win = ssim_window().w;
  constexpr int R = SsimWindow::kRadius;

  double total = 0.0;
  long count = 0;
  for (int h = 0; h < a.height; ++h)
    for (int w = 0; w < a.width; ++w) {
      if (!centers.get(h, w)) continue;
      double sw = 0.0, mu_a = 0.0, mu_b = 0.0, saa = 0.0, sbb = 0.0,
             sab = 0.0;
      for (int dy = -R; dy <= R; ++dy) {
        int y = h + dy;
        if (y < 0 || y >= a.height) continue;
        for (int dx = -R; dx <= R; ++dx) {
          int x = w + dx;
          if (x < 0 || x >= a.width) continue;
          double weight = win[dy + R] * win[dx + R];
          double va = a.at(y, x, 0), vb = b.at(y, x, 0);
          sw += weight;
          mu_a += weight * va;
          mu_b += weight * vb;
          saa += weight * va * va;
          sbb += weight * vb * vb;
          sab += weight * va * vb;
        }
      }
      mu_a /= sw;
      mu_b /= sw;
      double var_a = saa / sw - mu_a * mu_a;
      double var_b = sbb / sw - mu_b * mu_b;
      double cov = sab / sw - mu_a * mu_b;
      double ssim = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                    ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      total += ssim;
      ++count;
    }
  return total / static_cast<double>(count);
}

}  // namespace editgrpo
