#pragma once

#include <algorithm>
#include <cmath>

#include "env.hpp"
#include "mask.hpp"

namespace editgrpo {

// Color tolerance for the programmatic segmenter, in [0,1] intensity
// units per channel. Palette colors are >= 0.3 apart so this absorbs
// model residual noise without cross-matching.
constexpr double kSegTolerance = 0.1;

namespace detail {

inline bool color_close(const Grid& img, int h, int w, const Color& c,
                        double tol) {
  for (int ch = 0; ch < 3; ++ch)
    if (std::abs(img.at(h, w, ch) - c[ch]) > tol) return false;
  return true;
}

}  // namespace detail

// Programmatic stand-in for the language-grounded segmenter: match pixels
// near the instruction's target color inside a window around the target
// coordinates. Recolor/remove search for the shape's original color;
// add/move for the color the shape carries after the edit (unchanged for
// move). May return an empty mask; the area filter handles that.
inline RegionMask segment(const Grid& img, const EditInstruction& instr) {
  RegionMask m(img.height, img.width);
  Color target_color = instr.target.color;
  if (instr.verb == Verb::kRecolor) {
    // the recolor footprint does not move; the original color marks it
    target_color = instr.target.color;
  }

  // window around the target, widened to cover both endpoints of a move
  const int margin = instr.target.size / 2 + 2;
  int y0 = instr.target.cy, x0 = instr.target.cx;
  int y1 = y0, x1 = x0;
  if (instr.verb == Verb::kMove) {
    y1 = y0 + static_cast<int>(instr.param[0]);
    x1 = x0 + static_cast<int>(instr.param[1]);
  }
  const int top = std::max(0, std::min(y0, y1) - margin);
  const int bottom = std::min(img.height - 1, std::max(y0, y1) + margin);
  const int left = std::max(0, std::min(x0, x1) - margin);
  const int right = std::min(img.width - 1, std::max(x0, x1) + margin);

  for (int h = top; h <= bottom; ++h)
    for (int w = left; w <= right; ++w)
      if (detail::color_close(img, h, w, target_color, kSegTolerance))
        m.set(h, w, true);
  return m;
}

// Eq.-5-style union over the source and edited segmentations.
inline RegionMask segment_union(const Grid& source, const Grid& edited,
                                const EditInstruction& instr) {
  return union_mask(segment(source, instr), segment(edited, instr));
}

inline double mask_iou(const RegionMask& a, const RegionMask& b) {
  int inter = intersect_mask(a, b).area;
  int uni = union_mask(a, b).area;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

}  // namespace editgrpo
