#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "sscope/checkpoint.hpp"
#include "sscope/error.hpp"
#include "sscope/net.hpp"

using namespace sscope;
using namespace sscope::net;

namespace {

NetSpec small_mlp() { return mlp4(6, 3, 8); }

template <typename T>
Batch<T> make_batch(const NetSpec& spec, std::size_t n, std::uint64_t seed) {
  rng::Stream s(seed);
  Shape shape{n};
  shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
  Batch<T> b{Tensor<T>(shape), {}};
  for (auto& x : b.inputs.data()) x = static_cast<T>(s.uniform(-1.0, 1.0));
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<std::uint32_t>(s.below(spec.class_count)));
  return b;
}

struct OwnedData {
  std::vector<float> pixels;
  std::vector<std::uint16_t> labels;
  std::size_t example_size = 0;
  DataView view() const { return {pixels, labels, example_size}; }
};

}  // namespace

TEST_CASE("build_net is deterministic in the seed") {
  const auto spec = minicnn6(3, 16, 10);
  const BlockNet<float> a(spec, 7), b(spec, 7), c(spec, 8);
  CHECK(a.params().bytes_equal(b.params()));
  CHECK_FALSE(a.params().bytes_equal(c.params()));
}

TEST_CASE("initialization is Glorot uniform with zero biases") {
  const BlockNet<double> network(small_mlp(), 3);
  for (const auto& slot : network.slots()) {
    const auto& block = network.params().blocks[slot.block];
    for (std::size_t i = 0; i < slot.weight_count; ++i) {
      CHECK(std::fabs(block[slot.offset + i]) <= slot.init_bound);
    }
    for (std::size_t i = 0; i < slot.bias_count; ++i) {
      CHECK(block[slot.offset + slot.weight_count + i] == 0.0);
    }
  }
}

TEST_CASE("incompatible layers are rejected naming the pair") {
  NetSpec spec;
  spec.class_count = 2;
  spec.input_shape = {4};
  spec.blocks = {{{Dense{4, 3}}}, {{Dense{5, 2}}}};
  try {
    validate(spec);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("Dense(4,3)") != std::string::npos);
    CHECK(what.find("Dense(5,2)") != std::string::npos);
  }
  CHECK_THROWS_AS(BlockNet<float>(spec, 1), ShapeError);
}

TEST_CASE("structural invariants of NetSpec") {
  NetSpec one_block{{{{Dense{4, 2}}}}, 2, {4}};
  CHECK_THROWS(validate(one_block));
  NetSpec relu_first{{{{ReLU{}, Dense{4, 2}}}, {{Dense{2, 2}}}}, 2, {4}};
  CHECK_THROWS(validate(relu_first));
  NetSpec wrong_head{{{{Dense{4, 3}}}, {{Dense{3, 3}}}}, 2, {4}};
  CHECK_THROWS(validate(wrong_head));
  CHECK_NOTHROW(validate(minicnn6(3, 32, 10)));
  CHECK(minicnn6(3, 32, 10).block_count() == 6);
  CHECK(mlp4(16, 10).block_count() == 4);
}

TEST_CASE("canonical text round-trips") {
  for (const auto& spec : {small_mlp(), minicnn6(1, 16, 4, 6), minicnn6(3, 32, 10)}) {
    const auto text = to_canonical_text(spec);
    CHECK(parse_net_spec(text) == spec);
    CHECK(to_canonical_text(parse_net_spec(text)) == text);
  }
}

TEST_CASE("block partition covers every parameter exactly once") {
  const BlockNet<float> network(minicnn6(3, 16, 10), 1);
  std::size_t total = 0;
  std::vector<std::size_t> used(network.block_count(), 0);
  for (const auto& slot : network.slots()) {
    CHECK(slot.offset == used[slot.block]);  // contiguous, disjoint
    used[slot.block] += slot.weight_count + slot.bias_count;
  }
  for (std::size_t b = 0; b < network.block_count(); ++b) {
    CHECK(used[b] == network.block_size(b));
    total += used[b];
  }
  std::size_t from_layers = 0;
  for (const auto& block : network.spec().blocks)
    for (const auto& layer : block.layers) from_layers += layer_param_count(layer);
  CHECK(total == from_layers);
  CHECK(network.params().total_size() == total);
}

TEST_CASE("uniform logits give loss ln k") {
  const auto spec = small_mlp();
  BlockNet<double> network(spec, 5);
  for (auto& block : network.mutable_params().blocks) std::fill(block.begin(), block.end(), 0.0);
  const auto batch = make_batch<double>(spec, 9, 11);
  const auto lg = network.loss_and_grad(batch);
  CHECK(lg.loss == doctest::Approx(std::log(3.0)).epsilon(1e-15));
}

TEST_CASE("loss is non-negative and gradients match the parameter shapes") {
  const auto spec = minicnn6(2, 16, 5, 4);
  const BlockNet<float> network(spec, 2);
  const auto lg = network.loss_and_grad(make_batch<float>(spec, 4, 3));
  CHECK(lg.loss >= 0.0);
  REQUIRE(lg.grads.block_count() == network.block_count());
  for (std::size_t b = 0; b < network.block_count(); ++b) {
    CHECK(lg.grads.blocks[b].size() == network.block_size(b));
  }
}

TEST_CASE("gradients match central finite differences in 64-bit mode") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    const auto r = oracle::random_gradient_trial(seed);
    CHECK(r.params > 0);
    CHECK(r.bad == 0);
    CHECK(r.worst_rel < 1e-4);
  }
}

TEST_CASE("gradient of the desk-scale CNN matches finite differences") {
  // Small width keeps the parameter count low enough for a full sweep.
  const auto spec = minicnn6(1, 16, 3, 2);
  rng::Stream s(99);
  for (int attempt = 0; attempt < 20; ++attempt) {
    BlockNet<double> network(spec, s.next_u64());
    for (auto& block : network.mutable_params().blocks)
      for (auto& v : block) v += s.uniform(-0.05, 0.05);
    const auto batch = oracle::random_batch(s, spec.input_shape, 3, 2);
    // Many ReLU units: shrink the step so a smaller kink margin suffices.
    if (oracle::kink_margin(network, batch) < 1e-5) continue;
    const auto r = oracle::finite_difference_check(network, batch, 1e-6);
    CAPTURE(r.worst_rel);
    CHECK(r.bad == 0);
    return;
  }
  FAIL("no kink-free draw found");
}

TEST_CASE("backpropagation stopped below a block leaves lower gradients zero") {
  const auto spec = small_mlp();
  const BlockNet<double> network(spec, 4);
  const auto batch = make_batch<double>(spec, 5, 6);
  const auto full = network.loss_and_grad(batch);
  const auto cut = network.loss_and_grad(batch, 2);
  CHECK(cut.loss == full.loss);
  for (std::size_t b = 0; b < 2; ++b)
    for (double g : cut.grads.blocks[b]) CHECK(g == 0.0);
  for (std::size_t b = 2; b < 4; ++b) CHECK(cut.grads.blocks[b] == full.grads.blocks[b]);
}

TEST_CASE("duplicating every example leaves loss and gradients unchanged") {
  const auto spec = small_mlp();
  const BlockNet<double> network(spec, 8);
  const auto batch = make_batch<double>(spec, 6, 1);
  Batch<double> twice{Tensor<double>({12, 6}), {}};
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t r = 0; r < 2; ++r) {
      std::copy(batch.inputs.row(i).begin(), batch.inputs.row(i).end(), twice.inputs.row(2 * i + r).begin());
      twice.labels.push_back(batch.labels[i]);
    }
  }
  const auto a = network.loss_and_grad(batch);
  const auto b = network.loss_and_grad(twice);
  CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-12));
  for (std::size_t blk = 0; blk < a.grads.block_count(); ++blk)
    for (std::size_t i = 0; i < a.grads.blocks[blk].size(); ++i)
      CHECK(std::fabs(a.grads.blocks[blk][i] - b.grads.blocks[blk][i]) <= 1e-12);
}

TEST_CASE("loss_and_grad is a pure function") {
  const auto spec = minicnn6(3, 16, 10);
  const BlockNet<float> network(spec, 12);
  const auto batch = make_batch<float>(spec, 3, 2);
  const auto a = network.loss_and_grad(batch);
  const auto b = network.loss_and_grad(batch);
  CHECK(a.loss == b.loss);
  CHECK(a.grads.bytes_equal(b.grads));
}

TEST_CASE("non-finite activations name the block") {
  const auto spec = small_mlp();
  BlockNet<float> network(spec, 1);
  network.mutable_params().blocks[1][0] = std::numeric_limits<float>::infinity();
  const auto batch = make_batch<float>(spec, 2, 1);
  try {
    network.forward(batch.inputs);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.block() >= 1);
  }
}

TEST_CASE("constant class 0 on a 30% class-0 dataset gives error 0.7") {
  const auto spec = small_mlp();
  BlockNet<float> network(spec, 1);
  for (auto& block : network.mutable_params().blocks) std::fill(block.begin(), block.end(), 0.0f);
  network.mutable_params().blocks[3].back() = -1.0f;  // last bias entry: class 2 below the rest
  OwnedData data{std::vector<float>(100 * 6, 0.5f), {}, 6};
  for (int i = 0; i < 100; ++i) data.labels.push_back(i < 30 ? 0 : 1 + i % 2);
  const auto r = evaluate(network, data.view());
  CHECK(r.mispredictions == 70);
  CHECK(r.error_rate() == doctest::Approx(0.7));
  CHECK(evaluate(network, data.view()) == r);  // deterministic
}

TEST_CASE("argmax ties break toward the lowest class") {
  const auto spec = small_mlp();
  BlockNet<float> network(spec, 1);
  for (auto& block : network.mutable_params().blocks) std::fill(block.begin(), block.end(), 0.0f);
  OwnedData data{std::vector<float>(3 * 6, 0.1f), {0, 1, 2}, 6};
  const auto r = evaluate(network, data.view());
  CHECK(r.mispredicted == std::vector<std::size_t>{1, 2});
  OwnedData empty{{}, {}, 6};
  CHECK_THROWS_AS(evaluate(network, empty.view()), UsageError);
}

TEST_CASE("32-bit and 64-bit evaluation agree on a large-margin fixture") {
  const auto spec = mlp4(8, 4, 16);
  const BlockNet<float> f32(spec, 21);
  const BlockNet<double> f64(spec, convert<double>(f32.params()));
  rng::Stream s(5);
  OwnedData data{{}, {}, 8};
  while (data.labels.size() < 100) {
    std::vector<double> x(8);
    for (auto& v : x) v = s.uniform(-2.0, 2.0);
    const auto logits = f64.forward(Tensor<double>({1, 8}, x));
    std::vector<double> l(logits.data().begin(), logits.data().end());
    std::sort(l.rbegin(), l.rend());
    if (l[0] - l[1] <= 1e-3) continue;  // keep only clear-margin examples
    for (double v : x) data.pixels.push_back(static_cast<float>(v));
    data.labels.push_back(static_cast<std::uint16_t>(s.below(4)));
  }
  // The 32-bit pixels were rounded; re-evaluate the 64-bit net on the same floats.
  const auto a = evaluate(f32, data.view());
  const auto b = evaluate(f64, data.view());
  CHECK(a.mispredicted == b.mispredicted);
}

TEST_CASE("get_blocks and set_blocks") {
  const auto spec = minicnn6(3, 16, 10);
  BlockNet<float> net1(spec, 1);
  BlockNet<float> net2(spec, 2);
  const auto before = net1.params();

  set_blocks(net1, InterventionSet::empty(6), {});
  CHECK(net1.params().bytes_equal(before));

  const auto A = InterventionSet::of(6, {2});
  set_blocks(net1, A, get_blocks(net2, A));
  CHECK(net1.params().block_bytes_equal(net2.params(), 2));
  for (std::size_t b : {0, 1, 3, 4, 5}) CHECK(net1.params().block_bytes_equal(before, b));
  CHECK(get_blocks(net1, A) == get_blocks(net2, A));

  auto bad = get_blocks(net2, A);
  bad[0].pop_back();
  try {
    set_blocks(net1, A, bad);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("block 2") != std::string::npos);
  }

  copy_blocks(net2, net1, InterventionSet::full(6));
  CHECK(net1.params().bytes_equal(net2.params()));
  rng::Stream s(3);
  OwnedData data{std::vector<float>(20 * 3 * 16 * 16), std::vector<std::uint16_t>(20), 3 * 16 * 16};
  for (auto& p : data.pixels) p = static_cast<float>(s.uniform());
  for (auto& l : data.labels) l = static_cast<std::uint16_t>(s.below(10));
  CHECK(evaluate(net1, data.view()) == evaluate(net2, data.view()));
}

TEST_CASE("SSC1 checkpoints round-trip") {
  const auto spec = minicnn6(3, 16, 10);
  const BlockNet<float> network(spec, 17);
  const auto bytes = encode_checkpoint(spec, network.params());
  REQUIRE(bytes.size() > 12);
  CHECK(std::memcmp(bytes.data(), "SSC1", 4) == 0);
  const auto ck = decode_checkpoint(bytes);
  CHECK(ck.spec == spec);
  CHECK(ck.params.bytes_equal(network.params()));

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
}
