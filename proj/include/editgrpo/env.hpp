#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"
#include "mask.hpp"

namespace editgrpo {

using Color = std::array<double, 3>;

// Palette chosen so that any two colors (and the background) are at least
// 0.3 apart per channel in Chebyshev distance, well above the segmentation
// tolerance.
inline const std::vector<Color>& palette() {
  static const std::vector<Color> p = {
      {0.95, 0.10, 0.10},  // red
      {0.10, 0.90, 0.10},  // green
      {0.10, 0.20, 0.95},  // blue
      {0.90, 0.85, 0.10},  // yellow
      {0.85, 0.10, 0.80},  // magenta
      {0.10, 0.80, 0.85},  // cyan
  };
  return p;
}

enum class ShapeKind { kSquare = 0, kCircle = 1, kTriangle = 2 };
enum class Verb { kRecolor = 0, kRemove = 1, kAdd = 2, kMove = 3 };

inline const char* verb_name(Verb v) {
  switch (v) {
    case Verb::kRecolor: return "recolor";
    case Verb::kRemove: return "remove";
    case Verb::kAdd: return "add";
    case Verb::kMove: return "move";
  }
  return "?";
}

struct Shape {
  ShapeKind kind = ShapeKind::kSquare;
  int cy = 0, cx = 0;
  int size = 3;  // side / diameter / height in pixels
  Color color = {0, 0, 0};
  int id = 0;

  bool contains(int h, int w) const {
    const double e = size / 2.0;
    const double dy = h - cy, dx = w - cx;
    switch (kind) {
      case ShapeKind::kSquare: {
        // size x size block with top-left corner at center - size/2
        int top = cy - size / 2, left = cx - size / 2;
        return h >= top && h < top + size && w >= left && w < left + size;
      }
      case ShapeKind::kCircle:
        return dy * dy + dx * dx <= e * e;
      case ShapeKind::kTriangle: {
        // upward triangle: apex at cy - e, base at cy + e
        if (dy < -e || dy > e) return false;
        double half_width = e * (dy + e) / (2.0 * e);
        return std::abs(dx) <= half_width;
      }
    }
    return false;
  }
};

struct Scene {
  Color background = {0.30, 0.30, 0.30};
  std::vector<Shape> shapes;
};

// Structured instruction; target geometry/color is resolved at generation
// time so the condition embedding and the segmenter are self-contained.
struct EditInstruction {
  Verb verb = Verb::kRecolor;
  int target_id = -1;
  Shape target;                     // resolved shape (for add: the new spec)
  std::array<double, 3> param = {0, 0, 0};  // new RGB, or (dy, dx, 0) for move
};

struct EnvConfig {
  int height = 16;
  int width = 16;
  int min_shapes = 1;
  int max_shapes = 1;
  int min_size = 3;
  int max_size = 8;
  int condition_dim = 16;
  // Append the instruction's footprint masks (target shape, and the move
  // destination) to the condition as two H*W spatial channels — the
  // desk-scale analog of the region/inpainting-mask conditioning real
  // editing models receive alongside the instruction.
  bool spatial_condition = true;
  Color background = {0.30, 0.30, 0.30};
  // verb weights: recolor, remove, add, move
  std::array<double, 4> verb_mix = {1.0, 1.0, 1.0, 1.0};
};

// Total width of the condition vector produced by condition_embed.
inline int full_condition_dim(const EnvConfig& cfg) {
  return cfg.condition_dim +
         (cfg.spatial_condition ? 2 * cfg.height * cfg.width : 0);
}

struct EditTask {
  Scene scene;
  EditInstruction instruction;
  Grid source;
  Grid target;
  RegionMask gt_mask;
  std::vector<double> condition;
  long id = -1;
};

inline Grid render(const Scene& scene, int height, int width) {
  Grid img(height, width, 3);
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w)
      for (int c = 0; c < 3; ++c) img.at(h, w, c) = scene.background[c];
  // painter's order: later shapes over earlier
  for (const auto& s : scene.shapes)
    for (int h = 0; h < height; ++h)
      for (int w = 0; w < width; ++w)
        if (s.contains(h, w))
          for (int c = 0; c < 3; ++c) img.at(h, w, c) = s.color[c];
  return img;
}

inline RegionMask footprint(const Shape& s, int height, int width) {
  RegionMask m(height, width);
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w)
      if (s.contains(h, w)) m.set(h, w, true);
  return m;
}

// Fixed-layout encoding, zero-padded to the configured condition dim:
// [verb one-hot 4 | kind one-hot 3 | cy/H cx/W | size/max | rgb 3 | param 3]
inline std::vector<double> condition_embed(const EditInstruction& instr,
                                           const EnvConfig& cfg) {
  std::vector<double> e(16, 0.0);
  e[static_cast<int>(instr.verb)] = 1.0;
  e[4 + static_cast<int>(instr.target.kind)] = 1.0;
  e[7] = static_cast<double>(instr.target.cy) / cfg.height;
  e[8] = static_cast<double>(instr.target.cx) / cfg.width;
  e[9] = static_cast<double>(instr.target.size) / cfg.max_size;
  for (int c = 0; c < 3; ++c) e[10 + c] = instr.target.color[c];
  if (instr.verb == Verb::kRecolor) {
    for (int c = 0; c < 3; ++c) e[13 + c] = instr.param[c];
  } else if (instr.verb == Verb::kMove) {
    e[13] = instr.param[0] / cfg.height;
    e[14] = instr.param[1] / cfg.width;
  }
  if (cfg.condition_dim < 16)
    throw std::invalid_argument("condition_dim must be >= 16");
  e.resize(cfg.condition_dim, 0.0);
  if (cfg.spatial_condition) {
    // footprint of the instruction's target shape
    e.reserve(full_condition_dim(cfg));
    for (int h = 0; h < cfg.height; ++h)
      for (int w = 0; w < cfg.width; ++w)
        e.push_back(instr.target.contains(h, w) ? 1.0 : 0.0);
    // footprint at the move destination (all-zero for other verbs)
    Shape dest = instr.target;
    if (instr.verb == Verb::kMove) {
      dest.cy += static_cast<int>(std::lround(instr.param[0]));
      dest.cx += static_cast<int>(std::lround(instr.param[1]));
    }
    for (int h = 0; h < cfg.height; ++h)
      for (int w = 0; w < cfg.width; ++w)
        e.push_back(instr.verb == Verb::kMove && dest.contains(h, w) ? 1.0
                                                                     : 0.0);
  }
  return e;
}

// Apply the instruction to the scene. Move keeps z-order; add appends.
inline Scene apply_edit(const Scene& scene, const EditInstruction& instr) {
  Scene out = scene;
  switch (instr.verb) {
    case Verb::kRecolor:
      for (auto& s : out.shapes)
        if (s.id == instr.target_id)
          s.color = {instr.param[0], instr.param[1], instr.param[2]};
      break;
    case Verb::kRemove:
      std::erase_if(out.shapes,
                    [&](const Shape& s) { return s.id == instr.target_id; });
      break;
    case Verb::kAdd:
      out.shapes.push_back(instr.target);
      break;
    case Verb::kMove:
      for (auto& s : out.shapes)
        if (s.id == instr.target_id) {
          s.cy += static_cast<int>(instr.param[0]);
          s.cx += static_cast<int>(instr.param[1]);
        }
      break;
  }
  return out;
}

namespace detail {

inline int rand_int(RngState& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng.next_u64() %
                               static_cast<uint64_t>(hi - lo + 1));
}

inline Shape random_shape(RngState& rng, const EnvConfig& cfg, int id,
                          const std::vector<int>& forbidden_colors) {
  Shape s;
  s.kind = static_cast<ShapeKind>(rand_int(rng, 0, 2));
  s.size = rand_int(rng, cfg.min_size, cfg.max_size);
  int e = s.size / 2 + 1;
  s.cy = rand_int(rng, e, cfg.height - 1 - e);
  s.cx = rand_int(rng, e, cfg.width - 1 - e);
  int ci;
  do {
    ci = rand_int(rng, 0, static_cast<int>(palette().size()) - 1);
  } while (std::find(forbidden_colors.begin(), forbidden_colors.end(), ci) !=
           forbidden_colors.end());
  s.color = palette()[ci];
  s.id = id;
  return s;
}

inline int palette_index(const Color& c) {
  for (size_t i = 0; i < palette().size(); ++i)
    if (palette()[i] == c) return static_cast<int>(i);
  return -1;
}

}  // namespace detail

// One generation attempt; returns false when the mask-area bounds fail.
inline bool try_generate_task(RngState& rng, const EnvConfig& cfg,
                              EditTask& out) {
  Scene scene;
  scene.background = cfg.background;
  int n_shapes = detail::rand_int(rng, cfg.min_shapes, cfg.max_shapes);
  std::vector<int> used_colors;
  for (int i = 0; i < n_shapes; ++i) {
    Shape s = detail::random_shape(rng, cfg, i, used_colors);
    used_colors.push_back(detail::palette_index(s.color));
    scene.shapes.push_back(s);
  }

  // verb draw by mix weights
  double total = cfg.verb_mix[0] + cfg.verb_mix[1] + cfg.verb_mix[2] +
                 cfg.verb_mix[3];
  double u = rng.next_uniform() * total, acc = 0.0;
  Verb verb = Verb::kMove;
  for (int v = 0; v < 4; ++v) {
    acc += cfg.verb_mix[v];
    if (u < acc) {
      verb = static_cast<Verb>(v);
      break;
    }
  }

  EditInstruction instr;
  instr.verb = verb;
  if (verb == Verb::kAdd) {
    Shape s = detail::random_shape(rng, cfg, n_shapes, used_colors);
    instr.target = s;
    instr.target_id = s.id;
  } else {
    int idx = detail::rand_int(rng, 0, n_shapes - 1);
    instr.target = scene.shapes[idx];
    instr.target_id = scene.shapes[idx].id;
    if (verb == Verb::kRecolor) {
      std::vector<int> forbidden = used_colors;
      int ci;
      do {
        ci = detail::rand_int(rng, 0, static_cast<int>(palette().size()) - 1);
      } while (std::find(forbidden.begin(), forbidden.end(), ci) !=
               forbidden.end());
      instr.param = {palette()[ci][0], palette()[ci][1], palette()[ci][2]};
    } else if (verb == Verb::kMove) {
      const Shape& s = instr.target;
      int e = s.size / 2 + 1;
      int dy = detail::rand_int(rng, e - s.cy, cfg.height - 1 - e - s.cy);
      int dx = detail::rand_int(rng, e - s.cx, cfg.width - 1 - e - s.cx);
      if (dy == 0 && dx == 0) return false;
      instr.param = {static_cast<double>(dy), static_cast<double>(dx), 0.0};
    }
  }

  Scene edited = apply_edit(scene, instr);

  // gt mask: union of the target shape's footprint before and after
  Shape after = instr.target;
  if (verb == Verb::kMove) {
    after.cy += static_cast<int>(instr.param[0]);
    after.cx += static_cast<int>(instr.param[1]);
  }
  RegionMask m_before = (verb == Verb::kAdd)
                            ? RegionMask(cfg.height, cfg.width)
                            : footprint(instr.target, cfg.height, cfg.width);
  RegionMask m_after = (verb == Verb::kRemove)
                           ? RegionMask(cfg.height, cfg.width)
                           : footprint(after, cfg.height, cfg.width);
  RegionMask gt = union_mask(m_before, m_after);

  double frac = static_cast<double>(gt.area) / gt.npixels();
  if (frac < 0.01 || frac > 0.60) return false;

  out.scene = scene;
  out.instruction = instr;
  out.source = render(scene, cfg.height, cfg.width);
  out.target = render(edited, cfg.height, cfg.width);
  out.gt_mask = gt;
  out.condition = condition_embed(instr, cfg);
  return true;
}

inline EditTask generate_task(RngState& rng, const EnvConfig& cfg) {
  EditTask task;
  for (int attempt = 0; attempt < 100; ++attempt)
    if (try_generate_task(rng, cfg, task)) return task;
  throw std::runtime_error(
      "generate_task: could not satisfy mask-area bounds in 100 attempts");
}

}  // namespace editgrpo
