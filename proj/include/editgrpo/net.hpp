#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "grid.hpp"

namespace editgrpo {

// MLP over flattened image (+) time embedding (+) condition vector.
// Tanh hidden layers, linear output. Output width always equals the
// flattened image size so the velocity grid matches the input grid.
// Two scalar time gates, each affine in the time embedding, wrap the MLP:
//   out = g(t) * image + h(t) * mlp(image, t, cond).
// The input gate g carries the full-rank identity component of the
// velocity field past the hidden bottleneck (the true field is
// (1/t)*x_t - (1/t)*x0(c), so the x_t-dependence is a shared scalar
// gain); the output gate h lets the MLP learn one time-independent
// rendering instead of a rescaled copy per time step. Initialization
// g = 0, h = 1 makes a fresh net behave exactly like the plain MLP.
// Fixed (parameter-free) radial-basis featurization of one condition
// entry: `centers` Gaussian bumps evenly spaced on [lo, hi], width equal
// to the spacing. Turns scalar coordinates into quasi-one-hot codes the
// MLP can combine spatially.
struct CondRbf {
  int index = 0;    // which condition entry to expand
  int centers = 0;  // number of bumps (>= 2)
  double lo = 0.0;
  double hi = 1.0;

  bool operator==(const CondRbf&) const = default;
};

struct Arch {
  int image_h = 16;
  int image_w = 16;
  int image_c = 3;
  int time_embed_k = 8;   // embedding dim = 2k
  int condition_dim = 16;
  // Trailing H*W spatial mask maps inside the condition vector (e.g. the
  // env's footprint masks). Each gets a low-rank "paint head":
  //   out_ijc += P_mc(cond_base) * Q_m(t) * map^m_ij
  // so mask-shaped edits bypass the hidden bottleneck the same way the
  // identity does via the input gate.
  int spatial_maps = 0;
  int paint_hidden = 32;  // hidden width of the P head
  std::vector<int> hidden = {256, 256};
  std::vector<CondRbf> cond_rbf;  // appended after the raw condition

  int image_dim() const { return image_h * image_w * image_c; }
  int time_dim() const { return 2 * time_embed_k; }
  int map_dim() const { return image_h * image_w; }
  int base_condition_dim() const {
    return condition_dim - spatial_maps * map_dim();
  }
  int rbf_dim() const {
    int n = 0;
    for (const auto& r : cond_rbf) n += r.centers;
    return n;
  }
  int input_dim() const {
    return image_dim() + time_dim() + condition_dim + rbf_dim();
  }
  int output_dim() const { return image_dim(); }

  // Layer widths including input and output.
  std::vector<int> widths() const {
    std::vector<int> w;
    w.push_back(input_dim());
    for (int h : hidden) w.push_back(h);
    w.push_back(output_dim());
    return w;
  }

  void validate() const {
    if (image_h < 1 || image_w < 1 || image_c < 1 || time_embed_k < 1 ||
        condition_dim < 0)
      throw std::invalid_argument("Arch: invalid dims");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("Arch: hidden width must be >= 1");
    for (const auto& r : cond_rbf)
      if (r.index < 0 || r.index >= condition_dim || r.centers < 2 ||
          !(r.hi > r.lo))
        throw std::invalid_argument("Arch: invalid cond_rbf entry");
    if (spatial_maps < 0 || paint_hidden < 1 || base_condition_dim() < 0)
      throw std::invalid_argument("Arch: invalid spatial map layout");
  }

  bool operator==(const Arch&) const = default;
};

struct Layer {
  // weights row-major: [out][in]
  std::vector<double> w;
  std::vector<double> b;
  int in = 0, out = 0;
};

struct NetParams {
  Arch arch;
  std::vector<Layer> layers;
  // Time gates (row 0: input gate g, row 1: output gate h), each
  // affine in the time embedding: skip.b[r] + skip.w[row r] . time_embed.
  Layer skip;
  // Paint heads for the spatial mask maps (empty when spatial_maps == 0):
  // paint[0]: cond_base -> paint_hidden (tanh)
  // paint[1]: paint_hidden -> channels * spatial_maps  (P, zero-initialized)
  // paint[2]: time_dim -> spatial_maps                 (Q, initialized to 1)
  std::vector<Layer> paint;

  size_t count() const {
    size_t n = skip.w.size() + skip.b.size();
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    for (const auto& l : paint) n += l.w.size() + l.b.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> v;
    v.reserve(count());
    for (const auto& l : layers) {
      v.insert(v.end(), l.w.begin(), l.w.end());
      v.insert(v.end(), l.b.begin(), l.b.end());
    }
    v.insert(v.end(), skip.w.begin(), skip.w.end());
    v.insert(v.end(), skip.b.begin(), skip.b.end());
    for (const auto& l : paint) {
      v.insert(v.end(), l.w.begin(), l.w.end());
      v.insert(v.end(), l.b.begin(), l.b.end());
    }
    return v;
  }

  void unflatten(const std::vector<double>& v) {
    if (v.size() != count())
      throw std::invalid_argument("NetParams::unflatten: size mismatch");
    size_t i = 0;
    for (auto& l : layers) {
      std::copy(v.begin() + i, v.begin() + i + l.w.size(), l.w.begin());
      i += l.w.size();
      std::copy(v.begin() + i, v.begin() + i + l.b.size(), l.b.begin());
      i += l.b.size();
    }
    std::copy(v.begin() + i, v.begin() + i + skip.w.size(), skip.w.begin());
    i += skip.w.size();
    std::copy(v.begin() + i, v.begin() + i + skip.b.size(), skip.b.begin());
    i += skip.b.size();
    for (auto& l : paint) {
      std::copy(v.begin() + i, v.begin() + i + l.w.size(), l.w.begin());
      i += l.w.size();
      std::copy(v.begin() + i, v.begin() + i + l.b.size(), l.b.begin());
      i += l.b.size();
    }
  }
};

// Gradients share the parameter layout.
using ParamGrads = NetParams;

inline NetParams zeros_like(const NetParams& p) {
  NetParams g = p;
  for (auto& l : g.layers) {
    std::fill(l.w.begin(), l.w.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
  std::fill(g.skip.w.begin(), g.skip.w.end(), 0.0);
  std::fill(g.skip.b.begin(), g.skip.b.end(), 0.0);
  for (auto& l : g.paint) {
    std::fill(l.w.begin(), l.w.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
  return g;
}

inline NetParams init_params(RngState& rng, const Arch& arch) {
  arch.validate();
  NetParams p;
  p.arch = arch;
  auto widths = arch.widths();
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    Layer l;
    l.in = widths[i];
    l.out = widths[i + 1];
    l.w.resize(static_cast<size_t>(l.in) * l.out);
    l.b.assign(l.out, 0.0);
    const double std_dev = std::sqrt(2.0 / l.in);  // He init
    for (auto& w : l.w) w = std_dev * rng.next_normal();
    p.layers.push_back(std::move(l));
  }
  p.skip.in = arch.time_dim();
  p.skip.out = 2;
  p.skip.w.assign(2 * arch.time_dim(), 0.0);
  p.skip.b.assign(2, 0.0);
  p.skip.b[1] = 1.0;  // g = 0, h = 1: starts as the plain MLP
  if (arch.spatial_maps > 0) {
    Layer ph;  // cond_base -> paint_hidden, He init
    ph.in = arch.base_condition_dim();
    ph.out = arch.paint_hidden;
    ph.w.resize(static_cast<size_t>(ph.in) * ph.out);
    const double s = std::sqrt(2.0 / std::max(1, ph.in));
    for (auto& w : ph.w) w = s * rng.next_normal();
    ph.b.assign(ph.out, 0.0);
    Layer pp;  // paint_hidden -> channels * maps, zero so paint starts silent
    pp.in = arch.paint_hidden;
    pp.out = arch.image_c * arch.spatial_maps;
    pp.w.assign(static_cast<size_t>(pp.in) * pp.out, 0.0);
    pp.b.assign(pp.out, 0.0);
    Layer pq;  // time_dim -> maps, Q = 1 so P-gradients flow from step one
    pq.in = arch.time_dim();
    pq.out = arch.spatial_maps;
    pq.w.assign(static_cast<size_t>(pq.in) * pq.out, 0.0);
    pq.b.assign(pq.out, 1.0);
    p.paint = {std::move(ph), std::move(pp), std::move(pq)};
  }
  return p;
}

// [sin(2*pi*k*t), cos(2*pi*k*t)] for k = 1..K.
inline std::vector<double> time_embed(double t, int k_max) {
  std::vector<double> e(2 * static_cast<size_t>(k_max));
  constexpr double two_pi = 2.0 * 3.14159265358979323846;
  for (int k = 1; k <= k_max; ++k) {
    e[k - 1] = std::sin(two_pi * k * t);
    e[k_max + k - 1] = std::cos(two_pi * k * t);
  }
  return e;
}

struct ForwardCache {
  std::vector<double> input;                       // assembled input vector
  std::vector<std::vector<double>> activations;    // post-tanh per hidden layer
  std::vector<double> mlp_out;                     // MLP output before gates
  std::vector<double> paint_act;                   // post-tanh P-head hidden
  std::vector<double> paint_p;                     // P values [map][channel]
  std::vector<double> paint_q;                     // Q values [map]
};

namespace detail {

inline void affine(const Layer& l, const std::vector<double>& x,
                   std::vector<double>& y) {
  y.assign(l.out, 0.0);
  for (int o = 0; o < l.out; ++o) {
    const double* wr = &l.w[static_cast<size_t>(o) * l.in];
    double acc = l.b[o];
    for (int i = 0; i < l.in; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
}

}  // namespace detail

// Forward pass on a pre-assembled input vector; returns the raw output.
inline std::vector<double> forward_vec(const NetParams& p,
                                       std::vector<double> input,
                                       ForwardCache* cache = nullptr) {
  if (static_cast<int>(input.size()) != p.arch.input_dim())
    throw std::invalid_argument("forward: input dim mismatch");
  if (cache) {
    cache->input = input;
    cache->activations.clear();
  }
  std::vector<double> cur = input;
  std::vector<double> next;
  const size_t n_layers = p.layers.size();
  for (size_t li = 0; li < n_layers; ++li) {
    detail::affine(p.layers[li], cur, next);
    if (li + 1 < n_layers) {
      for (auto& v : next) v = std::tanh(v);
      if (cache) cache->activations.push_back(next);
    }
    cur = std::move(next);
  }
  // time gates: out_i = h(t) * mlp_i + g(t) * x_i
  const int img = p.arch.image_dim();
  const int td = p.skip.in;
  double g = p.skip.b[0], h = p.skip.b[1];
  for (int k = 0; k < td; ++k) {
    g += p.skip.w[k] * input[img + k];
    h += p.skip.w[td + k] * input[img + k];
  }
  if (cache) cache->mlp_out = cur;
  for (int i = 0; i < img; ++i) cur[i] = h * cur[i] + g * input[i];

  // paint heads: out_ijc += P_mc(cond_base) * Q_m(t) * map^m_ij
  if (p.arch.spatial_maps > 0) {
    const int nm = p.arch.spatial_maps;
    const int nc = p.arch.image_c;
    const int npx = p.arch.map_dim();
    const int cond_at = img + td;
    const int maps_at = cond_at + p.arch.base_condition_dim();
    std::vector<double> act, pv, qv;
    detail::affine(p.paint[0], {input.begin() + cond_at,
                                input.begin() + maps_at}, act);
    for (auto& v : act) v = std::tanh(v);
    detail::affine(p.paint[1], act, pv);
    detail::affine(p.paint[2], {input.begin() + img, input.begin() + img + td},
                   qv);
    for (int m = 0; m < nm; ++m)
      for (int px = 0; px < npx; ++px) {
        const double f = input[maps_at + m * npx + px];
        if (f == 0.0) continue;
        for (int c = 0; c < nc; ++c)
          cur[px * nc + c] += pv[m * nc + c] * qv[m] * f;
      }
    if (cache) {
      cache->paint_act = std::move(act);
      cache->paint_p = std::move(pv);
      cache->paint_q = std::move(qv);
    }
  }
  return cur;
}

inline std::vector<double> assemble_input(const Arch& arch, const Grid& x_t,
                                          double t,
                                          const std::vector<double>& cond) {
  if (x_t.height != arch.image_h || x_t.width != arch.image_w ||
      x_t.channels != arch.image_c)
    throw std::invalid_argument("forward: image shape mismatch");
  if (static_cast<int>(cond.size()) != arch.condition_dim)
    throw std::invalid_argument("forward: condition dim mismatch");
  std::vector<double> in;
  in.reserve(arch.input_dim());
  in.insert(in.end(), x_t.data.begin(), x_t.data.end());
  auto te = time_embed(t, arch.time_embed_k);
  in.insert(in.end(), te.begin(), te.end());
  in.insert(in.end(), cond.begin(), cond.end());
  for (const auto& r : arch.cond_rbf) {
    const double v = cond[r.index];
    const double spacing = (r.hi - r.lo) / (r.centers - 1);
    for (int k = 0; k < r.centers; ++k) {
      const double z = (v - (r.lo + k * spacing)) / spacing;
      in.push_back(std::exp(-z * z));
    }
  }
  return in;
}

inline Grid forward(const NetParams& p, const Grid& x_t, double t,
                    const std::vector<double>& cond,
                    ForwardCache* cache = nullptr) {
  auto out = forward_vec(p, assemble_input(p.arch, x_t, t, cond), cache);
  Grid v(p.arch.image_h, p.arch.image_w, p.arch.image_c);
  v.data = std::move(out);
  return v;
}

// Reverse-mode gradients of <upstream, output> w.r.t. params; accumulates
// into grads (must be shape-congruent, e.g. from zeros_like). Returns the
// gradient w.r.t. the assembled input vector.
inline std::vector<double> backward_vec(const NetParams& p,
                                        const ForwardCache& cache,
                                        const std::vector<double>& upstream,
                                        ParamGrads& grads) {
  const size_t n_layers = p.layers.size();
  if (cache.activations.size() != n_layers - 1)
    throw std::invalid_argument("backward: cache does not match architecture");
  if (static_cast<int>(upstream.size()) != p.arch.output_dim())
    throw std::invalid_argument("backward: upstream dim mismatch");

  // gates from the cached input's time-embed slice
  const int img = p.arch.image_dim();
  const int td = p.skip.in;
  const auto& in = cache.input;
  double g = p.skip.b[0], h = p.skip.b[1];
  for (int k = 0; k < td; ++k) {
    g += p.skip.w[k] * in[img + k];
    h += p.skip.w[td + k] * in[img + k];
  }

  // the MLP chain sees h * upstream
  std::vector<double> delta = upstream;
  for (auto& d : delta) d *= h;
  for (size_t li = n_layers; li-- > 0;) {
    const Layer& l = p.layers[li];
    Layer& gl = grads.layers[li];
    const std::vector<double>& in_act =
        (li == 0) ? cache.input : cache.activations[li - 1];
    // dW += delta * in^T, db += delta
    for (int o = 0; o < l.out; ++o) {
      double d = delta[o];
      gl.b[o] += d;
      double* gw = &gl.w[static_cast<size_t>(o) * l.in];
      for (int i = 0; i < l.in; ++i) gw[i] += d * in_act[i];
    }
    // delta_prev = W^T delta, through tanh' for hidden layers
    std::vector<double> prev(l.in, 0.0);
    for (int o = 0; o < l.out; ++o) {
      const double* wr = &l.w[static_cast<size_t>(o) * l.in];
      double d = delta[o];
      for (int i = 0; i < l.in; ++i) prev[i] += wr[i] * d;
    }
    if (li > 0) {
      const auto& act = cache.activations[li - 1];
      for (int i = 0; i < l.in; ++i) prev[i] *= 1.0 - act[i] * act[i];
    }
    delta = std::move(prev);
  }
  // gate gradients and the skip contributions to the input gradient
  if (cache.mlp_out.size() != static_cast<size_t>(img))
    throw std::invalid_argument("backward: cache missing mlp_out");
  double g_grad = 0.0, h_grad = 0.0;
  for (int i = 0; i < img; ++i) {
    g_grad += upstream[i] * in[i];
    h_grad += upstream[i] * cache.mlp_out[i];
  }
  grads.skip.b[0] += g_grad;
  grads.skip.b[1] += h_grad;
  for (int k = 0; k < td; ++k) {
    grads.skip.w[k] += g_grad * in[img + k];
    grads.skip.w[td + k] += h_grad * in[img + k];
    delta[img + k] += g_grad * p.skip.w[k] + h_grad * p.skip.w[td + k];
  }
  for (int i = 0; i < img; ++i) delta[i] += g * upstream[i];

  // paint heads
  if (p.arch.spatial_maps > 0) {
    const int nm = p.arch.spatial_maps;
    const int nc = p.arch.image_c;
    const int npx = p.arch.map_dim();
    const int cond_at = img + td;
    const int maps_at = cond_at + p.arch.base_condition_dim();
    const auto& act = cache.paint_act;
    const auto& pv = cache.paint_p;
    const auto& qv = cache.paint_q;
    if (static_cast<int>(pv.size()) != nm * nc)
      throw std::invalid_argument("backward: cache missing paint values");
    // S_mc = sum_ij upstream_ijc * map^m_ij, plus the map input gradient
    std::vector<double> s(static_cast<size_t>(nm) * nc, 0.0);
    for (int m = 0; m < nm; ++m)
      for (int px = 0; px < npx; ++px) {
        const double f = in[maps_at + m * npx + px];
        double dmap = 0.0;
        for (int c = 0; c < nc; ++c) {
          const double u = upstream[px * nc + c];
          if (f != 0.0) s[m * nc + c] += u * f;
          dmap += u * pv[m * nc + c] * qv[m];
        }
        delta[maps_at + m * npx + px] += dmap;
      }
    std::vector<double> dp(static_cast<size_t>(nm) * nc);
    std::vector<double> dq(nm, 0.0);
    for (int m = 0; m < nm; ++m)
      for (int c = 0; c < nc; ++c) {
        dp[m * nc + c] = qv[m] * s[m * nc + c];
        dq[m] += pv[m * nc + c] * s[m * nc + c];
      }
    // paint[2] (Q head over the time embedding)
    for (int m = 0; m < nm; ++m) {
      grads.paint[2].b[m] += dq[m];
      for (int k = 0; k < td; ++k) {
        grads.paint[2].w[static_cast<size_t>(m) * td + k] +=
            dq[m] * in[img + k];
        delta[img + k] += dq[m] * p.paint[2].w[static_cast<size_t>(m) * td + k];
      }
    }
    // paint[1] and paint[0] (P head over the base condition)
    const Layer& l0 = p.paint[0];
    const Layer& l1 = p.paint[1];
    std::vector<double> dact(l0.out, 0.0);
    for (int o = 0; o < l1.out; ++o) {
      grads.paint[1].b[o] += dp[o];
      const double* wr = &l1.w[static_cast<size_t>(o) * l1.in];
      double* gw = &grads.paint[1].w[static_cast<size_t>(o) * l1.in];
      for (int i = 0; i < l1.in; ++i) {
        gw[i] += dp[o] * act[i];
        dact[i] += wr[i] * dp[o];
      }
    }
    for (int i = 0; i < l0.out; ++i) dact[i] *= 1.0 - act[i] * act[i];
    for (int o = 0; o < l0.out; ++o) {
      grads.paint[0].b[o] += dact[o];
      const double* wr = &l0.w[static_cast<size_t>(o) * l0.in];
      double* gw = &grads.paint[0].w[static_cast<size_t>(o) * l0.in];
      for (int i = 0; i < l0.in; ++i) {
        gw[i] += dact[o] * in[cond_at + i];
        delta[cond_at + i] += wr[i] * dact[o];
      }
    }
  }
  return delta;
}

inline std::vector<double> backward(const NetParams& p,
                                    const ForwardCache& cache,
                                    const Grid& upstream, ParamGrads& grads) {
  return backward_vec(p, cache, upstream.data, grads);
}

}  // namespace editgrpo
