#pragma once

// Block-decomposed feed-forward networks with reverse-mode gradients.
//
// Parameters live in one flat vector per block (weights then bias of each
// parametric layer, in declaration order). Dense weights are stored
// [in][out]; Conv2d weights [out_ch][in_ch][k][k]. Forward, loss and
// gradient are pure functions of (parameters, batch).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sscope/intervention_set.hpp"
#include "sscope/netspec.hpp"
#include "sscope/tensor.hpp"

namespace sscope::net {

/// theta_0..theta_{m-1}, one flat vector per block.
template <typename T>
struct ParamStore {
  std::vector<std::vector<T>> blocks;

  std::size_t block_count() const noexcept { return blocks.size(); }
  std::size_t total_size() const noexcept;
  /// Byte-level equality (distinguishes -0/+0, compares NaN payloads).
  bool bytes_equal(const ParamStore& other) const noexcept;
  bool block_bytes_equal(const ParamStore& other, std::size_t block) const noexcept;
};

template <typename T>
struct Batch {
  Tensor<T> inputs;  // [N, input_shape...]
  std::vector<std::uint32_t> labels;
};

/// Read-only view of a labeled dataset stored as 32-bit pixels.
struct DataView {
  std::span<const float> pixels;  // n * example_size, row-major
  std::span<const std::uint16_t> labels;
  std::size_t example_size = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Copies the selected examples into a batch shaped for `input_shape`.
template <typename T>
Batch<T> gather(const DataView& data, std::span<const std::size_t> indices,
                const Shape& input_shape);

struct EvalReport {
  std::size_t mispredictions = 0;
  std::size_t n_examples = 0;
  double loss_mean = 0.0;
  std::vector<std::size_t> mispredicted;  // example indices, ascending

  double error_rate() const noexcept {
    return static_cast<double>(mispredictions) / static_cast<double>(n_examples);
  }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  ParamStore<T> grads;
};

/// Per-parametric-layer location inside the block vectors.
struct ParamSlot {
  std::size_t block = 0;
  std::size_t layer = 0;   // index within the block
  std::size_t offset = 0;  // into the block's flat vector
  std::size_t weight_count = 0;
  std::size_t bias_count = 0;
  double init_bound = 0.0;  // sqrt(6 / (fan_in + fan_out))
};

template <typename T>
class BlockNet {
 public:
  /// Validates `spec` and draws Glorot-uniform weights from the "init"
  /// stream of `seed`; biases start at zero.
  BlockNet(NetSpec spec, std::uint64_t seed);
  /// Adopts existing parameters (checkpoint load); shapes must match.
  BlockNet(NetSpec spec, ParamStore<T> params);

  const NetSpec& spec() const noexcept { return spec_; }
  std::size_t block_count() const noexcept { return spec_.blocks.size(); }
  const ParamStore<T>& params() const noexcept { return params_; }
  /// Element access only; block sizes must not change.
  ParamStore<T>& mutable_params() noexcept { return params_; }
  const std::vector<ParamSlot>& slots() const noexcept { return slots_; }
  std::size_t block_size(std::size_t block) const { return params_.blocks.at(block).size(); }

  std::span<T> block(std::size_t b) { return params_.blocks.at(b); }
  std::span<const T> block(std::size_t b) const { return params_.blocks.at(b); }

  /// Logits [N, class_count]. Throws NumericError naming the first block
  /// whose output is not finite.
  Tensor<T> forward(const Tensor<T>& inputs) const;

  /// The input of every layer followed by the final logits (test hook for
  /// kink margins and activation inspection).
  std::vector<Tensor<T>> activations(const Tensor<T>& inputs) const;

  /// Mean softmax cross-entropy and its gradient w.r.t. every block.
  /// Backpropagation stops below `first_block`; those gradients stay zero.
  LossAndGrad<T> loss_and_grad(const Batch<T>& batch, std::size_t first_block = 0) const;

 private:
  NetSpec spec_;
  std::vector<ParamSlot> slots_;
  std::vector<Shape> layer_inputs_;  // per-example input shape of each layer
  ParamStore<T> params_;

  void plan();
};

template <typename T>
BlockNet<T> build_net(const NetSpec& spec, std::uint64_t seed) {
  return BlockNet<T>(spec, seed);
}

template <typename T>
LossAndGrad<T> loss_and_grad(const BlockNet<T>& net, const Batch<T>& batch) {
  return net.loss_and_grad(batch);
}

/// Error rate with argmax ties broken toward the lowest class index.
template <typename T>
EvalReport evaluate(const BlockNet<T>& net, const DataView& data);

/// Copies of the blocks in A, ascending block order.
template <typename T>
std::vector<std::vector<T>> get_blocks(const BlockNet<T>& net, const InterventionSet& blocks);

/// Overwrites blocks in A with `values` (ascending order); others untouched.
template <typename T>
void set_blocks(BlockNet<T>& net, const InterventionSet& blocks,
                const std::vector<std::vector<T>>& values);

/// Copies blocks in A from `source` into `target` by value.
template <typename T>
void copy_blocks(const BlockNet<T>& source, BlockNet<T>& target, const InterventionSet& blocks);

/// Converts parameter precision (float <-> double) by value.
template <typename To, typename From>
ParamStore<To> convert(const ParamStore<From>& params) {
  ParamStore<To> out;
  out.blocks.reserve(params.blocks.size());
  for (const auto& b : params.blocks) out.blocks.emplace_back(b.begin(), b.end());
  return out;
}

}  // namespace sscope::net
