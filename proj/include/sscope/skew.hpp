#pragma once

// Clean, fully skewed and frequency-mixed datasets with index-aligned views.
//
// Every dataset keeps its examples in one flat float buffer; a PairedDataset
// holds the clean view, the fully skewed view and the per-index mask that
// selects which of the two the skewed training view serves. Applying the skew
// g to a batch is therefore a lookup by index.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sscope/net.hpp"

namespace sscope::skew {

inline constexpr std::uint16_t kNoAttribute = 0xFFFF;

struct ImageShape {
  std::size_t channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;

  std::size_t size() const noexcept { return channels * height * width; }
  Shape as_shape() const { return {channels, height, width}; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct LabeledImage {
  ImageShape shape;
  std::vector<float> pixels;  // [C][H][W], values in [0, 1]
  std::uint16_t label = 0;
  std::uint16_t attribute = kNoAttribute;
};

/// An exact rational probability.
struct Fraction {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;

  static Fraction common() { return {127, 128}; }
  static Fraction rare() { return {15, 16}; }
  /// "common", "rare", "a/b" or "0" / "1".
  static Fraction parse(std::string_view text);

  double value() const noexcept {
    return static_cast<double>(numerator) / static_cast<double>(denominator);
  }
  std::string to_string() const;
  friend bool operator==(const Fraction&, const Fraction&) = default;
};
using SkewFrequency = Fraction;

inline constexpr std::uint64_t kDefaultGlyphSeed = 0x61797068736b7765ULL;

struct WatermarkSkewSpec {
  std::size_t patch_size = 10;
  double alpha = 0.75;
  std::uint64_t glyph_seed = kDefaultGlyphSeed;

  static WatermarkSkewSpec strong() { return {10, 0.75, kDefaultGlyphSeed}; }
  static WatermarkSkewSpec weak() { return {10, 0.25, kDefaultGlyphSeed}; }
};

/// Group-sampling skew: attribute a is aligned with label l iff
/// a == l % attribute_count.
struct SamplingSkewSpec {
  std::uint16_t attribute_count = 2;
  std::uint64_t seed = 0;
};

using SkewSpec = std::variant<WatermarkSkewSpec, SamplingSkewSpec>;

/// Procedural task: class-specific shapes on noisy backgrounds.
struct TaskSpec {
  std::size_t class_count = 10;
  ImageShape shape{};
  double noise = 0.1;
  /// When set, clean images carry a uniformly random class glyph.
  std::optional<WatermarkSkewSpec> watermark;
  /// When > 0, each image renders a group attribute independent of the label.
  std::uint16_t attribute_count = 0;
  /// Relabels class k as (k + class_shift) % class_count; gives a related task.
  std::size_t class_shift = 0;
};

class Dataset {
 public:
  ImageShape shape{};
  std::size_t class_count = 0;
  std::vector<float> pixels;
  std::vector<std::uint16_t> labels;
  std::vector<std::uint16_t> attributes;
  /// Pixels before any watermark was blended; empty when none was applied.
  std::vector<float> unmarked;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> image_pixels(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * shape.size(), shape.size());
  }
  LabeledImage image(std::size_t i) const;
  net::DataView view() const noexcept { return {pixels, labels, shape.size()}; }
  /// Checks sizes, pixel range and label range.
  void validate() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// One deterministic p x p glyph per class, values in {0, 1}.
std::vector<std::vector<float>> make_glyphs(std::size_t class_count, const WatermarkSkewSpec& spec);

Dataset gen_clean_synthetic(const TaskSpec& task, std::size_t n, std::uint64_t seed);

/// Convex blend (1 - alpha) * x + alpha * glyph inside the upper-left p x p
/// window of every channel; pixels outside the window are copied unchanged.
LabeledImage blend_watermark(const LabeledImage& img, std::span<const float> glyph,
                             std::size_t patch_size, double alpha);

Dataset make_fully_skewed(const Dataset& clean, const SkewSpec& skew);

enum class MaskMode { kIid, kExactCount };

struct PairedDataset {
  Dataset clean;
  Dataset fully_skewed;
  Dataset skewed;  // mask-selected view served to skewed-role training
  std::vector<std::uint8_t> skew_mask;
  std::string provenance;

  std::size_t size() const noexcept { return clean.size(); }
};

PairedDataset apply_frequency(Dataset clean, Dataset fully_skewed, SkewFrequency freq,
                              std::uint64_t seed, MaskMode mode = MaskMode::kIid);

/// Epoch-wise shuffled index batches; every epoch partitions [0, n) and the
/// final batch of an epoch may be short.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_key);

  std::span<const std::size_t> next();
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch_size() const noexcept { return batch_size_; }

 private:
  void reshuffle();
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t key_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

template <typename T>
struct PairedBatch {
  std::vector<std::size_t> indices;
  net::Batch<T> clean;   // B_t
  net::Batch<T> skewed;  // B'_t = g(B_t)
};

/// Ordered stream of (B_t, B'_t) drawn from the same indices.
class PairedBatches {
 public:
  PairedBatches(const PairedDataset& pd, std::size_t batch_size, std::uint64_t epoch_seed);

  std::span<const std::size_t> next_indices() { return stream_.next(); }
  template <typename T>
  PairedBatch<T> next(const Shape& input_shape);

 private:
  const PairedDataset* pd_;
  BatchStream stream_;
};

// Raw dataset files ("SSD1"), all integers little-endian:
//   "SSD1" | u32 n | u32 channels | u32 height | u32 width | u32 class_count
//   | u8 pixels[n*C*H*W] | u16 labels[n] | u16 attributes[n] (0xFFFF = none)
void write_ssd1(const std::filesystem::path& path, const Dataset& data);
Dataset read_ssd1(const std::filesystem::path& path);
std::vector<unsigned char> encode_ssd1(const Dataset& data);
Dataset decode_ssd1(std::span<const unsigned char> bytes);

}  // namespace sscope::skew
