#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <editgrpo/env.hpp>
#include <editgrpo/metrics.hpp>

#include "helpers.hpp"

using namespace editgrpo;

TEST_CASE("to_8bit rounds and clamps") {
  Grid g(1, 1, 3);
  g.at(0, 0, 0) = 0.5;      // 127.5 -> 128 (round half away from zero)
  g.at(0, 0, 1) = -0.2;     // clamps to 0
  g.at(0, 0, 2) = 1.7;      // clamps to 255
  Grid b = to_8bit(g);
  CHECK(b.at(0, 0, 0) == 128.0);
  CHECK(b.at(0, 0, 1) == 0.0);
  CHECK(b.at(0, 0, 2) == 255.0);
}

TEST_CASE("UR tau=20 boundary: channel-sum 15 unchanged, 21 changed") {
  Grid src(2, 2, 3, 0.0);
  Grid ed(2, 2, 3, 0.0);
  RegionMask m_bar(2, 2, true);
  // pixel (0,0): per-channel delta 5/255 -> channel sum 15 < 20
  for (int c = 0; c < 3; ++c) ed.at(0, 0, c) = 5.0 / 255.0;
  // pixel (0,1): per-channel delta 7/255 -> channel sum 21 >= 20
  for (int c = 0; c < 3; ++c) ed.at(0, 1, c) = 7.0 / 255.0;
  // pixel (1,0): exactly 20 -> strictly-below rule says changed
  ed.at(1, 0, 0) = 20.0 / 255.0;
  // pixel (1,1): untouched
  double ur = unchanged_ratio(src, ed, m_bar);
  CHECK(ur == doctest::Approx(2.0 / 4.0).epsilon(1e-12));
  CHECK(kUrThreshold == 20.0);
}

TEST_CASE("UR matches a brute-force oracle on random pairs") {
  RngState rng(31, streams::kInit);
  for (int trial = 0; trial < 50; ++trial) {
    Grid a = testutil::random_grid(rng, 16, 16, 3);
    Grid b = testutil::random_grid(rng, 16, 16, 3);
    RegionMask m = testutil::random_mask(rng, 16, 16);
    long unchanged = 0;
    for (int h = 0; h < 16; ++h)
      for (int w = 0; w < 16; ++w) {
        if (!m.get(h, w)) continue;
        double s = 0.0;
        for (int c = 0; c < 3; ++c) {
          auto q = [](double v) {
            return std::min(255.0, std::max(0.0, std::round(v * 255.0)));
          };
          s += std::abs(q(a.at(h, w, c)) - q(b.at(h, w, c)));
        }
        if (s < 20.0) ++unchanged;
      }
    double expect = static_cast<double>(unchanged) / m.area;
    CHECK(std::abs(unchanged_ratio(a, b, m) - expect) <= 1e-12);
  }
}

TEST_CASE("masked PSNR matches a brute-force oracle; identical images cap") {
  RngState rng(37, streams::kInit);
  for (int trial = 0; trial < 50; ++trial) {
    Grid a = testutil::random_grid(rng, 16, 16, 3);
    Grid b = testutil::random_grid(rng, 16, 16, 3);
    RegionMask m = testutil::random_mask(rng, 16, 16);
    double se = 0.0;
    for (int h = 0; h < 16; ++h)
      for (int w = 0; w < 16; ++w) {
        if (!m.get(h, w)) continue;
        for (int c = 0; c < 3; ++c) {
          auto q = [](double v) {
            return std::min(255.0, std::max(0.0, std::round(v * 255.0)));
          };
          double d = q(a.at(h, w, c)) - q(b.at(h, w, c));
          se += d * d;
        }
      }
    double mse = se / (3.0 * m.area);
    double expect =
        mse == 0.0 ? 99.0 : 10.0 * std::log10(255.0 * 255.0 / mse);
    CHECK(std::abs(masked_psnr(a, b, m) - expect) <= 1e-12);
  }
  Grid a = testutil::random_grid(rng, 8, 8, 3);
  RegionMask m(8, 8, true);
  CHECK(masked_psnr(a, a, m) == kPsnrCap);
  CHECK(kPsnrCap == 99.0);
}

TEST_CASE("masked SSIM closed form on constant images") {
  const double c1v = 120.0 / 255.0, c2v = 180.0 / 255.0;
  Grid a(16, 16, 3, c1v), b(16, 16, 3, c2v);
  RegionMask full(16, 16, true);
  // identical constants -> exactly 1
  CHECK(masked_ssim(a, a, full) == doctest::Approx(1.0).epsilon(1e-12));
  // distinct constants: variance and covariance vanish, so
  // ssim = (2 m1 m2 + C1) / (m1^2 + m2^2 + C1), in 8-bit luma space
  const double m1 = 120.0, m2 = 180.0;
  const double C1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double expect = (2.0 * m1 * m2 + C1) / (m1 * m1 + m2 * m2 + C1);
  CHECK(masked_ssim(a, b, full) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("masked perceptual distance is zero iff masked regions agree") {
  FeatureBank bank(3, 16, 16, 3, 16);
  RngState rng(41, streams::kInit);
  Grid a = testutil::random_grid(rng, 16, 16, 3);
  RegionMask m = testutil::random_mask(rng, 16, 16);
  CHECK(masked_perceptual(a, a, m, bank) == 0.0);
  Grid b = a;
  b.at(0, 0, 0) += 0.5;
  bool touches = false;  // changed pixel influences a masked window?
  for (int h = 0; h <= 1; ++h)
    for (int w = 0; w <= 1; ++w) touches |= m.get(h, w);
  if (touches) CHECK(masked_perceptual(a, b, m, bank) > 0.0);
}

TEST_CASE("evaluate_set: exclusions, filters, and aggregation") {
  EnvConfig cfg;
  FeatureBank bank(7, 16, 16, 3, 16);
  RngState rng(43, streams::kEnv);
  std::vector<EvalSample> samples;
  for (int i = 0; i < 6; ++i) {
    EditTask t = generate_task(rng, cfg);
    EvalSample s;
    s.task_id = i;
    s.source = t.source;
    s.edited = t.target;
    s.instruction = t.instruction;
    s.gt_mask = t.gt_mask;
    samples.push_back(std::move(s));
  }
  samples[1].category = "style_change";  // excluded by category

  // segment mode reproduces the gt masks on clean renders
  MetricReport r0 = evaluate_set(samples, SegmenterMode::kGroundTruth, bank);
  MetricReport r2 = evaluate_set(samples, SegmenterMode::kSegment, bank);
  CHECK(r2.kept_count == r0.kept_count);
  CHECK(r2.mean_ur == doctest::Approx(r0.mean_ur).epsilon(1e-12));

  samples[2].gt_mask = RegionMask(16, 16);  // empty -> edit-too-small
  MetricReport r = evaluate_set(samples, SegmenterMode::kGroundTruth, bank);
  REQUIRE(r.rows.size() == 6);
  CHECK(r.kept_count == 4);
  CHECK(r.rows[1].reason == "category-excluded");
  CHECK(r.rows[2].reason == "edit-too-small");
  double mean_ur = 0.0;
  for (const auto& row : r.rows)
    if (row.kept) mean_ur += row.ur / r.kept_count;
  CHECK(r.mean_ur == doctest::Approx(mean_ur).epsilon(1e-12));
  // perfect synthetic edits leave the complement untouched
  CHECK(r.mean_ur == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.mean_psnr == doctest::Approx(99.0).epsilon(1e-12));

  samples[0].gt_mask.reset();
  CHECK_THROWS_AS(evaluate_set(samples, SegmenterMode::kGroundTruth, bank),
                  std::invalid_argument);
}

TEST_CASE("default category exclusions") {
  const auto& ex = default_excluded_categories();
  CHECK(ex.count("style_change") == 1);
  CHECK(ex.count("text_change") == 1);
  CHECK(ex.count("tone_transfer") == 1);
  CHECK(ex.count("recolor") == 0);
}
