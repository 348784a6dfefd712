#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace editgrpo {

// Dense H x W x C array of doubles, row-major (h, w, c).
struct Grid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, fill) {
    if (h < 1 || w < 1 || c < 1)
      throw std::invalid_argument("Grid: all dims must be >= 1");
  }

  size_t size() const { return data.size(); }

  double& at(int h, int w, int c) {
    return data[(static_cast<size_t>(h) * width + w) * channels + c];
  }
  double at(int h, int w, int c) const {
    return data[(static_cast<size_t>(h) * width + w) * channels + c];
  }

  bool same_shape(const Grid& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

inline void require_same_shape(const Grid& a, const Grid& b,
                               const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// Counter-based RNG: every draw is a pure hash of (seed, stream, counter),
// so streams for different purposes never interact and any draw is
// reproducible from its position alone.
struct RngState {
  uint64_t seed = 0;
  uint64_t stream = 0;
  uint64_t counter = 0;

  RngState() = default;
  RngState(uint64_t s, uint64_t str) : seed(s), stream(str) {}

  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() {
    uint64_t h = mix(seed);
    h = mix(h ^ stream);
    h = mix(h ^ counter++);
    return h;
  }

  // uniform in (0, 1)
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  // standard normal via Box-Muller (cosine branch)
  double next_normal() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Derive an independent child stream keyed on up to three indices.
  RngState substream(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    uint64_t s = mix(stream ^ mix(a ^ mix(b ^ mix(c))));
    RngState r;
    r.seed = seed;
    r.stream = s;
    return r;
  }
};

// Stream ids for the top-level purposes; everything else derives via
// substream() so rollout noise never aliases initialization draws.
namespace streams {
constexpr uint64_t kInit = 1;
constexpr uint64_t kRollout = 2;
constexpr uint64_t kEnv = 3;
constexpr uint64_t kFeatureBank = 4;
constexpr uint64_t kTimeDraw = 5;
}  // namespace streams

inline Grid seeded_gaussian(RngState& rng, int h, int w, int c) {
  Grid g(h, w, c);
  for (auto& v : g.data) v = rng.next_normal();
  return g;
}

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5*ln(2*pi)

// Per-element log N(x; mean, std^2).
inline Grid gaussian_logpdf(const Grid& x, const Grid& mean, double std_dev) {
  require_same_shape(x, mean, "gaussian_logpdf");
  if (!(std_dev > 0.0))
    throw std::domain_error("gaussian_logpdf: std must be > 0");
  Grid out(x.height, x.width, x.channels);
  const double inv2var = 1.0 / (2.0 * std_dev * std_dev);
  const double log_std = std::log(std_dev);
  for (size_t i = 0; i < x.size(); ++i) {
    double d = x.data[i] - mean.data[i];
    out.data[i] = -kLogSqrt2Pi - log_std - d * d * inv2var;
  }
  return out;
}

}  // namespace editgrpo
