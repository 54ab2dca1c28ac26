#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "sscope/error.hpp"
#include "sscope/skew.hpp"

using namespace sscope;
using namespace sscope::skew;

namespace {

TaskSpec watermark_task() {
  TaskSpec t;
  t.shape = {3, 16, 16};
  t.watermark = WatermarkSkewSpec::strong();
  return t;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// 1-nearest-glyph classifier on the upper-left window, all channels.
double patch_classifier_accuracy(const Dataset& d, const WatermarkSkewSpec& wm) {
  const auto glyphs = make_glyphs(d.class_count, wm);
  const std::size_t p = wm.patch_size, H = d.shape.height, W = d.shape.width;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto px = d.image_pixels(i);
    std::size_t best = 0;
    double best_dist = INFINITY;
    for (std::size_t k = 0; k < glyphs.size(); ++k) {
      double dist = 0;
      for (std::size_t c = 0; c < d.shape.channels; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) {
            const double diff = px[(c * H + y) * W + x] - glyphs[k][y * p + x];
            dist += diff * diff;
          }
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    correct += best == d.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

bool in_window(std::size_t idx, const ImageShape& s, std::size_t p) {
  const std::size_t y = (idx / s.width) % s.height, x = idx % s.width;
  return y < p && x < p;
}

}  // namespace

TEST_CASE("class counts stay within the binomial 5-sigma band") {
  const auto d = gen_clean_synthetic(watermark_task(), 1024, 3);
  std::vector<std::size_t> counts(10, 0);
  for (auto l : d.labels) ++counts[l];
  for (auto c : counts) {
    CHECK(c >= 60);
    CHECK(c <= 145);
  }
}

TEST_CASE("synthetic generation is deterministic and validated") {
  const auto a = gen_clean_synthetic(watermark_task(), 64, 9);
  const auto b = gen_clean_synthetic(watermark_task(), 64, 9);
  CHECK(a == b);
  CHECK_FALSE(a == gen_clean_synthetic(watermark_task(), 64, 10));
  CHECK_NOTHROW(a.validate());
  CHECK_THROWS_AS(gen_clean_synthetic(watermark_task(), 0, 1), UsageError);
}

TEST_CASE("random glyph ids are uncorrelated with labels") {
  const auto d = gen_clean_synthetic(watermark_task(), 10000, 4);
  std::vector<double> glyph(d.attributes.begin(), d.attributes.end());
  std::vector<double> label(d.labels.begin(), d.labels.end());
  CHECK(std::fabs(pearson(glyph, label)) < 0.05);
}

TEST_CASE("glyphs are binary, deterministic and distinct") {
  const auto wm = WatermarkSkewSpec::strong();
  const auto g = make_glyphs(10, wm);
  CHECK(g == make_glyphs(10, wm));
  REQUIRE(g.size() == 10);
  std::set<std::vector<float>> unique(g.begin(), g.end());
  CHECK(unique.size() == 10);
  for (const auto& glyph : g) {
    CHECK(glyph.size() == 100);
    for (float v : glyph) CHECK((v == 0.0f || v == 1.0f));
  }
}

TEST_CASE("blend_watermark formula and locality") {
  LabeledImage img{{3, 16, 16}, std::vector<float>(3 * 16 * 16, 0.2f), 4, kNoAttribute};
  std::vector<float> ones(100, 1.0f);

  const auto same = blend_watermark(img, ones, 10, 0.0);
  CHECK(same.pixels == img.pixels);

  const auto full = blend_watermark(img, ones, 10, 1.0);
  for (std::size_t i = 0; i < full.pixels.size(); ++i) {
    if (in_window(i, img.shape, 10)) {
      CHECK(full.pixels[i] == 1.0f);
    } else {
      CHECK(std::memcmp(&full.pixels[i], &img.pixels[i], sizeof(float)) == 0);
    }
  }

  const auto mixed = blend_watermark(img, ones, 10, 0.75);
  CHECK(mixed.pixels[0] == doctest::Approx(0.8).epsilon(1e-7));
  CHECK(mixed.label == 4);
  CHECK(mixed.attribute == kNoAttribute);

  LabeledImage tiny{{1, 8, 8}, std::vector<float>(64, 0.5f), 0, kNoAttribute};
  CHECK_THROWS_AS(blend_watermark(tiny, ones, 10, 0.5), UsageError);
}

TEST_CASE("fully skewed watermark set is perfectly patch-predictive") {
  const auto wm = WatermarkSkewSpec::strong();
  const auto clean = gen_clean_synthetic(watermark_task(), 2000, 5);
  const auto skewed = make_fully_skewed(clean, wm);
  CHECK(patch_classifier_accuracy(skewed, wm) == 1.0);
  const double chance = patch_classifier_accuracy(clean, wm);
  CHECK(chance == doctest::Approx(0.1).epsilon(0.5));  // within +-5 points
  CHECK(skewed.labels == clean.labels);

  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean.attributes[i] != clean.labels[i]) continue;
    // Already carrying its own class glyph: unchanged by the skew.
    CHECK(std::memcmp(clean.image_pixels(i).data(), skewed.image_pixels(i).data(),
                      clean.shape.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("sampling skew aligns attributes with labels") {
  TaskSpec t;
  t.shape = {3, 16, 16};
  t.class_count = 2;
  t.attribute_count = 4;
  const auto clean = gen_clean_synthetic(t, 400, 6);
  const auto skewed = make_fully_skewed(clean, SamplingSkewSpec{4, 7});
  CHECK(skewed.labels == clean.labels);
  std::vector<double> a(skewed.attributes.begin(), skewed.attributes.end());
  std::vector<double> l(skewed.labels.begin(), skewed.labels.end());
  CHECK(pearson(a, l) == doctest::Approx(1.0).epsilon(1e-12));

  // Label 1 has no aligned example: attribute 1 never drawn.
  auto broken = clean;
  for (std::size_t i = 0; i < broken.size(); ++i)
    if (broken.labels[i] == 1 && broken.attributes[i] == 1) broken.attributes[i] = 2;
  CHECK_THROWS_AS(make_fully_skewed(broken, SamplingSkewSpec{4, 7}), DataError);
}

TEST_CASE("apply_frequency endpoints and mask rate") {
  const auto clean = gen_clean_synthetic(watermark_task(), 300, 8);
  const auto full = make_fully_skewed(clean, WatermarkSkewSpec::strong());

  const auto none = apply_frequency(clean, full, Fraction{0, 1}, 1);
  CHECK(none.skewed.pixels == clean.pixels);
  const auto all = apply_frequency(clean, full, Fraction{1, 1}, 1);
  CHECK(all.skewed.pixels == full.pixels);

  const auto big = gen_clean_synthetic(watermark_task(), 16000, 9);
  const auto bigfull = make_fully_skewed(big, WatermarkSkewSpec::strong());
  const auto pd = apply_frequency(big, bigfull, Fraction::rare(), 2);
  const auto popcount = std::accumulate(pd.skew_mask.begin(), pd.skew_mask.end(), std::size_t{0});
  CHECK(popcount >= 14850);
  CHECK(popcount <= 15150);

  const auto exact = apply_frequency(big, bigfull, Fraction::rare(), 2, MaskMode::kExactCount);
  CHECK(std::accumulate(exact.skew_mask.begin(), exact.skew_mask.end(), std::size_t{0}) == 15000);

  auto shorter = full;
  shorter.labels.pop_back();
  shorter.attributes.pop_back();
  shorter.pixels.resize(shorter.pixels.size() - shorter.shape.size());
  CHECK_THROWS_AS(apply_frequency(clean, shorter, Fraction::common(), 1), UsageError);
}

TEST_CASE("views preserve labels and watermark locality") {
  const auto clean = gen_clean_synthetic(watermark_task(), 500, 11);
  const auto full = make_fully_skewed(clean, WatermarkSkewSpec::weak());
  const auto pd = apply_frequency(clean, full, Fraction::common(), 3);
  CHECK(pd.skewed.labels == pd.clean.labels);
  CHECK(pd.fully_skewed.labels == pd.clean.labels);
  const auto& s = clean.shape;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const auto a = pd.clean.image_pixels(i), b = pd.skewed.image_pixels(i);
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pd.skew_mask[i] && in_window(j, s, 10)) continue;
      CHECK(std::memcmp(&a[j], &b[j], sizeof(float)) == 0);
    }
  }
}

TEST_CASE("paired batches share indices and partition each epoch") {
  const auto clean = gen_clean_synthetic(watermark_task(), 103, 12);
  const auto full = make_fully_skewed(clean, WatermarkSkewSpec::strong());
  const auto pd = apply_frequency(clean, full, Fraction::common(), 4);
  const Shape in{3, 16, 16};

  PairedBatches a(pd, 10, 77), b(pd, 10, 77);
  std::set<std::size_t> seen;
  std::size_t count = 0;
  for (int t = 0; t < 11; ++t) {  // 10 full batches and a short one
    const auto pa = a.next<float>(in);
    const auto pb = b.next<float>(in);
    CHECK(pa.indices == pb.indices);
    CHECK(pa.clean.labels == pa.skewed.labels);
    for (std::size_t k = 0; k < pa.indices.size(); ++k) {
      const auto idx = pa.indices[k];
      const auto row = pa.skewed.inputs.row(k);
      CHECK(std::memcmp(row.data(), pd.skewed.image_pixels(idx).data(), row.size() * sizeof(float)) == 0);
      const auto crow = pa.clean.inputs.row(k);
      CHECK(std::memcmp(crow.data(), pd.clean.image_pixels(idx).data(), crow.size() * sizeof(float)) == 0);
      seen.insert(idx);
      ++count;
    }
  }
  CHECK(count == 103);
  CHECK(seen.size() == 103);

  BatchStream s1(50, 7, 5), s2(50, 7, 6);
  std::vector<std::size_t> e1, e2;
  for (int t = 0; t < 8; ++t) {
    for (auto i : s1.next()) e1.push_back(i);
    for (auto i : s2.next()) e2.push_back(i);
  }
  CHECK(e1 != e2);
  CHECK_THROWS_AS(BatchStream(10, 11, 1), UsageError);
}

TEST_CASE("SSD1 encode and decode") {
  TaskSpec t;
  t.shape = {1, 8, 8};
  t.class_count = 3;
  t.attribute_count = 2;
  const auto d = gen_clean_synthetic(t, 20, 13);
  const auto bytes = encode_ssd1(d);
  CHECK(std::memcmp(bytes.data(), "SSD1", 4) == 0);
  CHECK(bytes.size() == 24 + 20 * 64 + 20 * 2 * 2);
  const auto back = decode_ssd1(bytes);
  CHECK(back.labels == d.labels);
  CHECK(back.attributes == d.attributes);
  for (std::size_t i = 0; i < d.pixels.size(); ++i) {
    CHECK(std::fabs(back.pixels[i] - d.pixels[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  CHECK(encode_ssd1(back) == bytes);  // idempotent after one quantization

  auto truncated = bytes;
  truncated.resize(bytes.size() - 1);
  CHECK_THROWS_AS(decode_ssd1(truncated), FormatError);
}

TEST_CASE("frequency parsing") {
  CHECK(Fraction::parse("common") == Fraction{127, 128});
  CHECK(Fraction::parse("rare") == Fraction{15, 16});
  CHECK(Fraction::parse("3/4") == Fraction{3, 4});
  CHECK_THROWS_AS(Fraction::parse("5/4"), ConfigError);
  CHECK_THROWS_AS(Fraction::parse("x"), ConfigError);
}
