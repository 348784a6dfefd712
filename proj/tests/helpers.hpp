#pragma once

// Shared utilities for the test suites: random fixtures and central
// finite differences against flattened parameter vectors.

#include <cmath>
#include <functional>
#include <vector>

#include <editgrpo/grid.hpp>
#include <editgrpo/mask.hpp>
#include <editgrpo/net.hpp>

namespace testutil {

using editgrpo::Grid;
using editgrpo::NetParams;
using editgrpo::RegionMask;
using editgrpo::RngState;

inline Grid random_grid(RngState& rng, int h, int w, int c,
                        double lo = 0.0, double hi = 1.0) {
  Grid g(h, w, c);
  for (auto& v : g.data) v = lo + (hi - lo) * rng.next_uniform();
  return g;
}

// Random mask guaranteed non-empty with non-empty complement.
inline RegionMask random_mask(RngState& rng, int h, int w,
                              double p = 0.5) {
  RegionMask m(h, w);
  while (true) {
    int area = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        bool on = rng.next_uniform() < p;
        m.set(y, x, on);
        area += on ? 1 : 0;
      }
    if (area > 0 && area < h * w) return m;
  }
}

// Central finite-difference gradient of f over the flattened parameters.
inline std::vector<double> fd_grad(
    const NetParams& params, const std::function<double(const NetParams&)>& f,
    double h = 1e-6) {
  std::vector<double> flat = params.flatten();
  std::vector<double> g(flat.size());
  NetParams work = params;
  for (size_t i = 0; i < flat.size(); ++i) {
    double orig = flat[i];
    flat[i] = orig + h;
    work.unflatten(flat);
    double fp = f(work);
    flat[i] = orig - h;
    work.unflatten(flat);
    double fm = f(work);
    flat[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  work.unflatten(flat);
  return g;
}

// Max over components of |a - f| / max(1, |a|, |f|).
inline double max_rel_err(const std::vector<double>& analytic,
                          const std::vector<double>& fd) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({1.0, std::abs(analytic[i]), std::abs(fd[i])});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace testutil
