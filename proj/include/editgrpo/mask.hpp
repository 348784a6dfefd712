#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"

namespace editgrpo {

// Boolean H x W mask. area is kept in sync by every mutator.
struct RegionMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bits;
  int area = 0;

  RegionMask() = default;
  RegionMask(int h, int w, bool fill = false)
      : height(h), width(w), bits(static_cast<size_t>(h) * w, fill ? 1 : 0),
        area(fill ? h * w : 0) {
    if (h < 1 || w < 1)
      throw std::invalid_argument("RegionMask: dims must be >= 1");
  }

  bool get(int h, int w) const { return bits[static_cast<size_t>(h) * width + w] != 0; }

  void set(int h, int w, bool v) {
    uint8_t& b = bits[static_cast<size_t>(h) * width + w];
    area += (v ? 1 : 0) - (b ? 1 : 0);
    b = v ? 1 : 0;
  }

  int npixels() const { return height * width; }
  bool empty() const { return area == 0; }

  bool same_dims(const RegionMask& o) const {
    return height == o.height && width == o.width;
  }
};

inline RegionMask union_mask(const RegionMask& a, const RegionMask& b) {
  if (!a.same_dims(b))
    throw std::invalid_argument("union_mask: dim mismatch");
  RegionMask out(a.height, a.width);
  int area = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    out.bits[i] = (a.bits[i] | b.bits[i]) ? 1 : 0;
    area += out.bits[i];
  }
  out.area = area;
  return out;
}

inline RegionMask intersect_mask(const RegionMask& a, const RegionMask& b) {
  if (!a.same_dims(b))
    throw std::invalid_argument("intersect_mask: dim mismatch");
  RegionMask out(a.height, a.width);
  int area = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    out.bits[i] = (a.bits[i] & b.bits[i]) ? 1 : 0;
    area += out.bits[i];
  }
  out.area = area;
  return out;
}

inline RegionMask complement(const RegionMask& m) {
  RegionMask out(m.height, m.width);
  for (size_t i = 0; i < m.bits.size(); ++i) out.bits[i] = m.bits[i] ? 0 : 1;
  out.area = m.npixels() - m.area;
  return out;
}

// Sample filter rules: an edit region under 1% of the image means the
// segmenter failed; a non-edit region under 5% means a near-global edit.
enum class FilterReason { kKeep, kEditTooSmall, kNonEditTooSmall };

struct FilterDecision {
  bool keep = true;
  FilterReason reason = FilterReason::kKeep;
};

inline const char* filter_reason_name(FilterReason r) {
  switch (r) {
    case FilterReason::kKeep: return "keep";
    case FilterReason::kEditTooSmall: return "edit-too-small";
    case FilterReason::kNonEditTooSmall: return "nonedit-too-small";
  }
  return "?";
}

inline FilterDecision area_filter(const RegionMask& m) {
  const double total = static_cast<double>(m.npixels());
  const double edit = static_cast<double>(m.area);
  const double nonedit = total - edit;
  if (edit < 0.01 * total)
    return {false, FilterReason::kEditTooSmall};
  if (nonedit < 0.05 * total)
    return {false, FilterReason::kNonEditTooSmall};
  return {true, FilterReason::kKeep};
}

inline void require_mask_matches(const Grid& g, const RegionMask& m,
                                 const char* what) {
  if (g.height != m.height || g.width != m.width)
    throw std::invalid_argument(std::string(what) + ": mask dims mismatch");
}

// Mean of g over true mask positions, all channels.
inline double masked_mean(const Grid& g, const RegionMask& m) {
  require_mask_matches(g, m, "masked_mean");
  if (m.empty()) throw std::invalid_argument("masked_mean: empty mask");
  double sum = 0.0;
  long count = 0;
  for (int h = 0; h < g.height; ++h)
    for (int w = 0; w < g.width; ++w) {
      if (!m.get(h, w)) continue;
      for (int c = 0; c < g.channels; ++c) sum += g.at(h, w, c);
      count += g.channels;
    }
  return sum / static_cast<double>(count);
}

// Mean absolute difference over masked pixels and channels.
inline double l1_mean(const Grid& a, const Grid& b, const RegionMask& m) {
  require_same_shape(a, b, "l1_mean");
  require_mask_matches(a, m, "l1_mean");
  if (m.empty()) throw std::invalid_argument("l1_mean: empty mask");
  double sum = 0.0;
  long count = 0;
  for (int h = 0; h < a.height; ++h)
    for (int w = 0; w < a.width; ++w) {
      if (!m.get(h, w)) continue;
      for (int c = 0; c < a.channels; ++c)
        sum += std::abs(a.at(h, w, c) - b.at(h, w, c));
      count += a.channels;
    }
  return sum / static_cast<double>(count);
}

}  // namespace editgrpo
