#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "grid.hpp"
#include "mask.hpp"
#include "rewards.hpp"
#include "segment.hpp"
#include "ssim.hpp"

namespace editgrpo {

constexpr double kUrThreshold = 20.0;  // tau, in 8-bit RGB space
constexpr double kPsnrCap = 99.0;      // reported when MSE is exactly 0

// Appendix formulas work in 255-space: round and clamp.
inline Grid to_8bit(const Grid& img) {
  Grid out(img.height, img.width, img.channels);
  for (size_t i = 0; i < img.size(); ++i) {
    double v = std::round(img.data[i] * 255.0);
    out.data[i] = std::min(255.0, std::max(0.0, v));
  }
  return out;
}

// Fraction of non-edit pixels whose channel-summed absolute change is
// strictly below tau.
inline double unchanged_ratio(const Grid& source, const Grid& edited,
                              const RegionMask& m_bar,
                              double tau = kUrThreshold) {
  require_same_shape(source, edited, "unchanged_ratio");
  require_mask_matches(source, m_bar, "unchanged_ratio");
  if (m_bar.empty()) throw std::invalid_argument("unchanged_ratio: empty mask");
  Grid a = to_8bit(source), b = to_8bit(edited);
  long unchanged = 0;
  for (int h = 0; h < a.height; ++h)
    for (int w = 0; w < a.width; ++w) {
      if (!m_bar.get(h, w)) continue;
      double l1 = 0.0;
      for (int c = 0; c < a.channels; ++c)
        l1 += std::abs(a.at(h, w, c) - b.at(h, w, c));
      if (l1 < tau) ++unchanged;
    }
  return static_cast<double>(unchanged) / m_bar.area;
}

inline double masked_psnr(const Grid& source, const Grid& edited,
                          const RegionMask& m_bar) {
  require_same_shape(source, edited, "masked_psnr");
  require_mask_matches(source, m_bar, "masked_psnr");
  if (m_bar.empty()) throw std::invalid_argument("masked_psnr: empty mask");
  Grid a = to_8bit(source), b = to_8bit(edited);
  double se = 0.0;
  for (int h = 0; h < a.height; ++h)
    for (int w = 0; w < a.width; ++w) {
      if (!m_bar.get(h, w)) continue;
      for (int c = 0; c < a.channels; ++c) {
        double d = a.at(h, w, c) - b.at(h, w, c);
        se += d * d;
      }
    }
  double mse = se / (3.0 * m_bar.area);
  if (mse == 0.0) return kPsnrCap;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline double masked_ssim(const Grid& source, const Grid& edited,
                          const RegionMask& m_bar) {
  if (m_bar.empty()) throw std::invalid_argument("masked_ssim: empty mask");
  Grid ga = zero_outside(to_grayscale(to_8bit(source)), m_bar);
  Grid gb = zero_outside(to_grayscale(to_8bit(edited)), m_bar);
  return ssim_over_centers(ga, gb, m_bar, 255.0);
}

// Fixed-filter perceptual distance (proxy; not LPIPS).
inline double masked_perceptual(const Grid& source, const Grid& edited,
                                const RegionMask& m_bar,
                                const FeatureBank& bank) {
  return perceptual_distance(source, edited, m_bar, bank);
}

// --- evaluation pipeline --------------------------------------------------

struct EvalSample {
  long task_id = -1;
  Grid source;
  Grid edited;
  std::optional<EditInstruction> instruction;  // needed for segment mode
  std::optional<RegionMask> gt_mask;
  std::string category;  // task-type exclusion hook
};

enum class SegmenterMode { kSegment, kGroundTruth };

struct SampleRow {
  long task_id = -1;
  bool kept = false;
  std::string reason;
  double ur = 0.0, psnr = 0.0, ssim = 0.0, perceptual = 0.0;
};

struct MetricReport {
  std::vector<SampleRow> rows;
  long kept_count = 0;
  // aggregates over kept samples; meaningless when kept_count == 0
  double mean_ur = 0.0, mean_psnr = 0.0, mean_ssim = 0.0,
         mean_perceptual = 0.0;
};

inline const std::set<std::string>& default_excluded_categories() {
  static const std::set<std::string> s = {"style_change", "text_change",
                                          "tone_transfer"};
  return s;
}

inline MetricReport evaluate_set(const std::vector<EvalSample>& samples,
                                 SegmenterMode mode, const FeatureBank& bank) {
  if (samples.empty())
    throw std::invalid_argument("evaluate_set: no samples");
  MetricReport report;
  double s_ur = 0.0, s_psnr = 0.0, s_ssim = 0.0, s_perc = 0.0;
  for (const auto& sample : samples) {
    SampleRow row;
    row.task_id = sample.task_id;
    if (default_excluded_categories().count(sample.category)) {
      row.reason = "category-excluded";
      report.rows.push_back(row);
      continue;
    }
    RegionMask m;
    if (mode == SegmenterMode::kGroundTruth) {
      if (!sample.gt_mask)
        throw std::invalid_argument("evaluate_set: missing gt mask");
      m = *sample.gt_mask;
    } else {
      if (!sample.instruction)
        throw std::invalid_argument("evaluate_set: missing instruction");
      m = segment_union(sample.source, sample.edited, *sample.instruction);
    }
    FilterDecision fd = area_filter(m);
    if (!fd.keep) {
      row.reason = filter_reason_name(fd.reason);
      report.rows.push_back(row);
      continue;
    }
    RegionMask m_bar = complement(m);
    row.kept = true;
    row.reason = "keep";
    row.ur = unchanged_ratio(sample.source, sample.edited, m_bar);
    row.psnr = masked_psnr(sample.source, sample.edited, m_bar);
    row.ssim = masked_ssim(sample.source, sample.edited, m_bar);
    row.perceptual = masked_perceptual(sample.source, sample.edited, m_bar, bank);
    s_ur += row.ur;
    s_psnr += row.psnr;
    s_ssim += row.ssim;
    s_perc += row.perceptual;
    ++report.kept_count;
    report.rows.push_back(row);
  }
  if (report.kept_count > 0) {
    report.mean_ur = s_ur / report.kept_count;
    report.mean_psnr = s_psnr / report.kept_count;
    report.mean_ssim = s_ssim / report.kept_count;
    report.mean_perceptual = s_perc / report.kept_count;
  }
  return report;
}

}  // namespace editgrpo
