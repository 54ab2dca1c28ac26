#include "sscope/skew.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "sscope/error.hpp"
#include "sscope/rng.hpp"

namespace sscope::skew {
namespace {

constexpr std::size_t kShapeCount = 10;

// Coverage in [0, 1] of class shape `kind` at (y, x) relative to its centre.
bool shape_covers(std::size_t kind, long dy, long dx, long half, long thick) {
  const long ady = std::labs(dy), adx = std::labs(dx);
  switch (kind) {
    case 0:  // horizontal bar
      return ady < thick && adx <= half;
    case 1:  // vertical bar
      return adx < thick && ady <= half;
    case 2:  // main diagonal
      return std::labs(dy - dx) < thick && adx <= half;
    case 3:  // anti-diagonal
      return std::labs(dy + dx) < thick && adx <= half;
    case 4:  // plus
      return (ady < thick && adx <= half) || (adx < thick && ady <= half);
    case 5:  // cross
      return (std::labs(dy - dx) < thick || std::labs(dy + dx) < thick) && adx <= half;
    case 6: {  // hollow square
      const long r = std::max(ady, adx);
      return r <= half && r > half - thick;
    }
    case 7:  // disk
      return dy * dy + dx * dx <= (half - 1) * (half - 1) + 1;
    case 8:  // two horizontal bars
      return (std::labs(dy - 2) < 1 || std::labs(dy + 2) < 1) && adx <= half;
    case 9:  // corner
      return (dx >= -half && dx < -half + thick && ady <= half) ||
             (dy <= half && dy > half - thick && adx <= half);
    default:
      return false;
  }
}

void render_shape(std::size_t kind, const ImageShape& s, rng::Stream& rs, double noise,
                  std::span<float> out) {
  const long h = static_cast<long>(s.height), w = static_cast<long>(s.width);
  const long max_half = std::max(2L, std::min(h, w) / 3);
  const long half = 2 + static_cast<long>(rs.below(static_cast<std::uint64_t>(max_half - 1)));
  const long thick = 1 + static_cast<long>(rs.below(2));
  const long cy = static_cast<long>(rs.below(static_cast<std::uint64_t>(h)));
  const long cx = static_cast<long>(rs.below(static_cast<std::uint64_t>(w)));
  for (std::size_t c = 0; c < s.channels; ++c) {
    const double background = rs.uniform(0.0, 0.3);
    const double color = rs.uniform(0.55, 1.0);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const double base = shape_covers(kind, y - cy, x - cx, half, thick) ? color : background;
        const double v = base + rs.uniform(-noise, noise);
        // 8-bit levels, so raw files round-trip clean images exactly.
        const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        out[(c * s.height + static_cast<std::size_t>(y)) * s.width + static_cast<std::size_t>(x)] =
            static_cast<float>(q);
      }
    }
  }
}

void render_attribute(std::uint16_t attribute, std::uint16_t count, const ImageShape& s,
                      std::span<float> out) {
  const float level = static_cast<float>(attribute + 1) / static_cast<float>(count + 1);
  const std::size_t rows = std::min<std::size_t>(2, s.height);
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = s.height - rows; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) out[(c * s.height + y) * s.width + x] = level;
    }
  }
}

void blend_in_place(std::span<float> pixels, const ImageShape& s, std::span<const float> glyph,
                    std::size_t p, double alpha) {
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        float& px = pixels[(c * s.height + y) * s.width + x];
        px = static_cast<float>((1.0 - alpha) * static_cast<double>(px) +
                                alpha * static_cast<double>(glyph[y * p + x]));
      }
    }
  }
}

void check_watermark(const WatermarkSkewSpec& spec, const ImageShape& s) {
  if (spec.patch_size == 0 || spec.patch_size > std::min(s.height, s.width)) {
    throw UsageError("watermark patch " + std::to_string(spec.patch_size) +
                     " exceeds image dims " + std::to_string(s.height) + "x" +
                     std::to_string(s.width));
  }
  if (!(spec.alpha > 0.0 && spec.alpha <= 1.0)) {
    throw UsageError("watermark blend strength must be in (0, 1]");
  }
}

}  // namespace

Fraction Fraction::parse(std::string_view text) {
  if (text == "common") return common();
  if (text == "rare") return rare();
  Fraction f;
  const auto slash = text.find('/');
  auto num = text.substr(0, slash);
  auto parse_u = [&](std::string_view s, std::uint64_t& v) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ConfigError("malformed frequency '" + std::string(text) + "'");
    }
  };
  parse_u(num, f.numerator);
  f.denominator = 1;
  if (slash != std::string_view::npos) parse_u(text.substr(slash + 1), f.denominator);
  if (f.denominator == 0 || f.numerator > f.denominator) {
    throw ConfigError("frequency must lie in [0, 1]: '" + std::string(text) + "'");
  }
  return f;
}

std::string Fraction::to_string() const {
  return std::to_string(numerator) + "/" + std::to_string(denominator);
}

LabeledImage Dataset::image(std::size_t i) const {
  const auto px = image_pixels(i);
  return LabeledImage{shape, std::vector<float>(px.begin(), px.end()), labels.at(i),
                      attributes.empty() ? kNoAttribute : attributes.at(i)};
}

void Dataset::validate() const {
  if (pixels.size() != labels.size() * shape.size()) {
    throw DataError("dataset pixel buffer does not match example count");
  }
  if (attributes.size() != labels.size()) throw DataError("attribute column length mismatch");
  if (!unmarked.empty() && unmarked.size() != pixels.size()) {
    throw DataError("unmarked pixel buffer length mismatch");
  }
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("pixel outside [0, 1]");
  }
  for (auto l : labels) {
    if (l >= class_count) throw DataError("label outside [0, class_count)");
  }
}

std::vector<std::vector<float>> make_glyphs(std::size_t class_count,
                                            const WatermarkSkewSpec& spec) {
  const std::size_t p = spec.patch_size;
  const std::size_t grid = std::min<std::size_t>(5, p);
  const std::size_t cells = grid * grid;
  rng::Stream rs(spec.glyph_seed, "glyphs");
  std::vector<std::vector<std::uint8_t>> coarse;
  while (coarse.size() < class_count) {
    std::vector<std::uint8_t> cand;
    bool accepted = false;
    for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
      cand.assign(cells, 0);
      for (auto& c : cand) c = rs.bernoulli(1, 2) ? 1 : 0;
      const auto ones = static_cast<std::size_t>(std::count(cand.begin(), cand.end(), 1));
      if (cells >= 9 && (ones < cells / 3 || ones > cells - cells / 3)) continue;
      accepted = true;
      for (const auto& prev : coarse) {
        std::size_t diff = 0;
        for (std::size_t i = 0; i < cells; ++i) diff += prev[i] != cand[i];
        if (diff < std::max<std::size_t>(1, cells / 4)) accepted = false;
      }
    }
    coarse.push_back(cand);
  }
  std::vector<std::vector<float>> glyphs;
  for (const auto& g : coarse) {
    std::vector<float> out(p * p);
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        out[y * p + x] = static_cast<float>(g[(y * grid / p) * grid + x * grid / p]);
      }
    }
    glyphs.push_back(std::move(out));
  }
  return glyphs;
}

Dataset gen_clean_synthetic(const TaskSpec& task, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw UsageError("gen_clean_synthetic needs n > 0");
  if (task.class_count < 2 || task.class_count > kShapeCount) {
    throw UsageError("synthetic tasks support 2..10 classes");
  }
  if (task.shape.channels == 0 || task.shape.height < 4 || task.shape.width < 4) {
    throw UsageError("synthetic images must be at least 4x4 with one channel");
  }
  if (task.watermark && task.attribute_count > 0) {
    throw UsageError("a task carries either a watermark or a group attribute, not both");
  }
  std::vector<std::vector<float>> glyphs;
  if (task.watermark) {
    check_watermark(*task.watermark, task.shape);
    glyphs = make_glyphs(task.class_count, *task.watermark);
  }

  Dataset d;
  d.shape = task.shape;
  d.class_count = task.class_count;
  d.pixels.resize(n * task.shape.size());
  d.labels.resize(n);
  d.attributes.assign(n, kNoAttribute);
  rng::Stream rs(seed, "clean-data");
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = static_cast<std::size_t>(rs.below(task.class_count));
    d.labels[i] = static_cast<std::uint16_t>((kind + task.class_shift) % task.class_count);
    std::span<float> px(d.pixels.data() + i * task.shape.size(), task.shape.size());
    render_shape(kind, task.shape, rs, task.noise, px);
    if (task.attribute_count > 0) {
      d.attributes[i] = static_cast<std::uint16_t>(rs.below(task.attribute_count));
      render_attribute(d.attributes[i], task.attribute_count, task.shape, px);
    }
    if (task.watermark) d.attributes[i] = static_cast<std::uint16_t>(rs.below(task.class_count));
  }
  if (task.watermark) {
    d.unmarked = d.pixels;
    const std::size_t p = task.watermark->patch_size;
    for (std::size_t i = 0; i < n; ++i) {
      blend_in_place(std::span<float>(d.pixels.data() + i * task.shape.size(), task.shape.size()),
                     task.shape, glyphs[d.attributes[i]], p, task.watermark->alpha);
    }
  }
  return d;
}

LabeledImage blend_watermark(const LabeledImage& img, std::span<const float> glyph,
                             std::size_t patch_size, double alpha) {
  if (patch_size > std::min(img.shape.height, img.shape.width)) {
    throw UsageError("watermark patch exceeds image dims");
  }
  if (glyph.size() != patch_size * patch_size) throw UsageError("glyph must be p x p");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("blend strength must be in [0, 1]");
  LabeledImage out = img;
  blend_in_place(out.pixels, out.shape, glyph, patch_size, alpha);
  return out;
}

Dataset make_fully_skewed(const Dataset& clean, const SkewSpec& skew) {
  clean.validate();
  Dataset out = clean;
  if (const auto* wm = std::get_if<WatermarkSkewSpec>(&skew)) {
    check_watermark(*wm, clean.shape);
    const auto glyphs = make_glyphs(clean.class_count, *wm);
    const auto& base = clean.unmarked.empty() ? clean.pixels : clean.unmarked;
    out.pixels = base;
    out.unmarked = base;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      // A random glyph that already matches the label is re-blended unchanged.
      out.attributes[i] = clean.labels[i];
      blend_in_place(
          std::span<float>(out.pixels.data() + i * clean.shape.size(), clean.shape.size()),
          clean.shape, glyphs[clean.labels[i]], wm->patch_size, wm->alpha);
    }
    return out;
  }

  const auto& sp = std::get<SamplingSkewSpec>(skew);
  if (sp.attribute_count == 0) throw UsageError("sampling skew needs attribute_count > 0");
  auto aligned = [&](std::uint16_t label) {
    return static_cast<std::uint16_t>(label % sp.attribute_count);
  };
  std::vector<std::vector<std::size_t>> pool(clean.class_count);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean.attributes[i] == aligned(clean.labels[i])) pool[clean.labels[i]].push_back(i);
  }
  rng::Stream rs(sp.seed, "sampling-skew");
  const std::size_t stride = clean.shape.size();
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto label = clean.labels[i];
    if (clean.attributes[i] == aligned(label)) continue;
    const auto& candidates = pool[label];
    if (candidates.empty()) {
      throw DataError("no aligned-group examples for label " + std::to_string(label));
    }
    const std::size_t src = candidates[rs.below(candidates.size())];
    std::copy_n(clean.pixels.data() + src * stride, stride, out.pixels.data() + i * stride);
    if (!clean.unmarked.empty()) {
      std::copy_n(clean.unmarked.data() + src * stride, stride, out.unmarked.data() + i * stride);
    }
    out.attributes[i] = clean.attributes[src];
  }
  return out;
}

PairedDataset apply_frequency(Dataset clean, Dataset fully_skewed, SkewFrequency freq,
                              std::uint64_t seed, MaskMode mode) {
  if (clean.size() != fully_skewed.size() || clean.shape != fully_skewed.shape) {
    throw UsageError("clean and fully skewed datasets are not index-aligned");
  }
  if (clean.labels != fully_skewed.labels) {
    throw UsageError("clean and fully skewed datasets disagree on labels");
  }
  if (freq.denominator == 0 || freq.numerator > freq.denominator) {
    throw UsageError("skew frequency must lie in [0, 1]");
  }
  const std::size_t n = clean.size();
  PairedDataset pd;
  pd.skew_mask.assign(n, 0);
  rng::Stream rs(seed, "skew-mask");
  if (mode == MaskMode::kIid) {
    for (auto& m : pd.skew_mask) m = rs.bernoulli(freq.numerator, freq.denominator) ? 1 : 0;
  } else {
    const auto count = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * freq.value()));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rs.shuffle(std::span<std::size_t>(order));
    for (std::size_t i = 0; i < count; ++i) pd.skew_mask[order[i]] = 1;
  }
  pd.skewed = clean;
  const std::size_t stride = clean.shape.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!pd.skew_mask[i]) continue;
    std::copy_n(fully_skewed.pixels.data() + i * stride, stride, pd.skewed.pixels.data() + i * stride);
    pd.skewed.attributes[i] = fully_skewed.attributes[i];
    if (!pd.skewed.unmarked.empty() && !fully_skewed.unmarked.empty()) {
      std::copy_n(fully_skewed.unmarked.data() + i * stride, stride,
                  pd.skewed.unmarked.data() + i * stride);
    }
  }
  pd.provenance = "freq=" + freq.to_string() + (mode == MaskMode::kIid ? " iid" : " exact") +
                  " mask_seed=" + std::to_string(seed);
  pd.clean = std::move(clean);
  pd.fully_skewed = std::move(fully_skewed);
  return pd;
}

BatchStream::BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_key)
    : n_(n), batch_size_(batch_size), key_(shuffle_key) {
  if (n == 0) throw UsageError("cannot batch an empty dataset");
  if (batch_size == 0 || batch_size > n) throw UsageError("batch_size must be in [1, n]");
  order_.resize(n);
  reshuffle();
}

void BatchStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng::Stream rs(rng::split(key_, static_cast<std::uint64_t>(epoch_)));
  rs.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

std::span<const std::size_t> BatchStream::next() {
  if (cursor_ >= n_) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t len = std::min(batch_size_, n_ - cursor_);
  std::span<const std::size_t> out(order_.data() + cursor_, len);
  cursor_ += len;
  return out;
}

PairedBatches::PairedBatches(const PairedDataset& pd, std::size_t batch_size,
                             std::uint64_t epoch_seed)
    : pd_(&pd), stream_(pd.size(), batch_size, epoch_seed) {}

template <typename T>
PairedBatch<T> PairedBatches::next(const Shape& input_shape) {
  const auto idx = stream_.next();
  PairedBatch<T> out;
  out.indices.assign(idx.begin(), idx.end());
  out.clean = net::gather<T>(pd_->clean.view(), out.indices, input_shape);
  out.skewed = net::gather<T>(pd_->skewed.view(), out.indices, input_shape);
  return out;
}

template PairedBatch<float> PairedBatches::next<float>(const Shape&);
template PairedBatch<double> PairedBatches::next<double>(const Shape&);

}  // namespace sscope::skew
