#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sscope/tensor.hpp"

namespace sscope::net {

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};

struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

/// Non-overlapping max pooling (stride == kernel), floor semantics.
struct MaxPool {
  std::size_t kernel = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

struct GlobalAvgPool {
  friend bool operator==(const GlobalAvgPool&, const GlobalAvgPool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

using LayerSpec = std::variant<Dense, Conv2d, ReLU, MaxPool, GlobalAvgPool, Flatten>;

struct BlockSpec {
  std::vector<LayerSpec> layers;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// A feed-forward network partitioned into m >= 2 parameter blocks.
/// Input shapes are per example: {features} or {channels, height, width}.
struct NetSpec {
  std::vector<BlockSpec> blocks;
  std::size_t class_count = 0;
  Shape input_shape;
  friend bool operator==(const NetSpec&, const NetSpec&) = default;

  std::size_t block_count() const noexcept { return blocks.size(); }
};

std::string layer_to_string(const LayerSpec& layer);

/// Number of trainable scalars of one layer (weights then biases).
std::size_t layer_param_count(const LayerSpec& layer);

/// Output shape of `layer` applied to a per-example `input`, or throws
/// ShapeError describing the mismatch.
Shape layer_output_shape(const LayerSpec& layer, const Shape& input);

/// Checks every structural invariant; errors name the offending layer pair.
void validate(const NetSpec& spec);

/// Canonical text form; byte-stable, used in checkpoints and run hashes.
std::string to_canonical_text(const NetSpec& spec);
NetSpec parse_net_spec(std::string_view text);

// Desk-scale presets.

/// 4 dense blocks on flattened input: [in->h1, relu] [h1->h2, relu]
/// [h2->h3, relu] [h3->classes].
NetSpec mlp4(std::size_t input_features, std::size_t class_count, std::size_t hidden = 64);

/// 6 blocks: conv stem / three conv+pool stages / conv stage / GAP + dense.
/// The stem has stride 2 when image_size >= 32.
NetSpec minicnn6(std::size_t channels, std::size_t image_size, std::size_t class_count,
                 std::size_t width = 8);

/// Resolves "mlp4" / "minicnn6" for a given per-example input shape.
NetSpec preset(std::string_view name, const Shape& image_shape, std::size_t class_count);

}  // namespace sscope::net
