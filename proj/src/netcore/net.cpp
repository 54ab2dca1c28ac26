#include "sscope/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <variant>

#include "sscope/error.hpp"
#include "sscope/kernels.hpp"
#include "sscope/rng.hpp"

namespace sscope::net {

template <typename T>
std::size_t ParamStore<T>::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

template <typename T>
bool ParamStore<T>::block_bytes_equal(const ParamStore& other, std::size_t block) const noexcept {
  const auto& a = blocks[block];
  const auto& b = other.blocks[block];
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
bool ParamStore<T>::bytes_equal(const ParamStore& other) const noexcept {
  if (blocks.size() != other.blocks.size()) return false;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (!block_bytes_equal(other, b)) return false;
  }
  return true;
}

namespace {

struct FlatLayer {
  const LayerSpec* spec;
  std::size_t block;
  int slot;  // index into slots_, -1 when parameter-free
};

template <typename T>
struct LayerCache {
  Tensor<T> input;
  std::vector<T> col;                   // Conv2d: im2col matrix [K][N*P]
  std::vector<std::uint32_t> argmax;    // MaxPool: flat input index per output
};

template <typename T>
void check_finite(const Tensor<T>& t, std::size_t block, const char* what) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(block, std::string("non-finite ") + what);
  }
}

// ---- Dense -----------------------------------------------------------------

template <typename T>
Tensor<T> dense_forward(const Dense& d, std::span<const T> p, const Tensor<T>& x) {
  const auto& k = kernels::active<T>();
  const std::size_t n = x.dim(0);
  const T* w = p.data();
  const T* bias = p.data() + d.in * d.out;
  Tensor<T> y({n, d.out});
  for (std::size_t r = 0; r < n; ++r) {
    T* yr = y.raw() + r * d.out;
    std::copy(bias, bias + d.out, yr);
    const T* xr = x.raw() + r * d.in;
    for (std::size_t i = 0; i < d.in; ++i) {
      if (xr[i] != T(0)) k.axpy(xr[i], w + i * d.out, yr, d.out);
    }
  }
  return y;
}

template <typename T>
void dense_backward(const Dense& d, std::span<const T> p, const Tensor<T>& x,
                    const Tensor<T>& dy, std::span<T> grad, Tensor<T>* dx) {
  const auto& k = kernels::active<T>();
  const std::size_t n = x.dim(0);
  const T* w = p.data();
  T* gw = grad.data();
  T* gb = grad.data() + d.in * d.out;
  for (std::size_t r = 0; r < n; ++r) {
    const T* dyr = dy.raw() + r * d.out;
    k.axpy(T(1), dyr, gb, d.out);
    const T* xr = x.raw() + r * d.in;
    for (std::size_t i = 0; i < d.in; ++i) {
      if (xr[i] != T(0)) k.axpy(xr[i], dyr, gw + i * d.out, d.out);
    }
  }
  if (dx) {
    *dx = Tensor<T>(x.shape());
    for (std::size_t r = 0; r < n; ++r) {
      const T* dyr = dy.raw() + r * d.out;
      T* dxr = dx->raw() + r * d.in;
      for (std::size_t i = 0; i < d.in; ++i) dxr[i] = k.dot(w + i * d.out, dyr, d.out);
    }
  }
}

// ---- Conv2d ----------------------------------------------------------------

struct ConvGeometry {
  std::size_t n, c, h, w, oc, k, stride, pad, oh, ow;
  std::size_t rows() const { return c * k * k; }
  std::size_t spatial() const { return oh * ow; }
  std::size_t cols() const { return n * oh * ow; }
};

template <typename T>
ConvGeometry conv_geometry(const Conv2d& cs, const Tensor<T>& x) {
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.oc = cs.out_channels;
  g.k = cs.kernel;
  g.stride = cs.stride;
  g.pad = cs.pad;
  g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

// Visits every (col row, col column, input flat index) triple that lies inside
// the unpadded input.
template <typename F>
void for_each_patch_element(const ConvGeometry& g, F&& f) {
  const std::size_t cols = g.cols();
  const std::size_t spatial = g.spatial();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const std::size_t row = (c * g.k + ki) * g.k + kj;
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              const std::size_t col_index = row * cols + n * spatial + oy * g.ow + ox;
              const std::size_t in_index =
                  ((n * g.c + c) * g.h + static_cast<std::size_t>(iy)) * g.w +
                  static_cast<std::size_t>(ix);
              f(col_index, in_index);
            }
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_forward(const Conv2d& cs, std::span<const T> p, const Tensor<T>& x,
                       std::vector<T>& col) {
  const auto& k = kernels::active<T>();
  const auto g = conv_geometry(cs, x);
  const std::size_t rows = g.rows(), cols = g.cols(), spatial = g.spatial();
  col.assign(rows * cols, T(0));
  for_each_patch_element(g, [&](std::size_t ci, std::size_t xi) { col[ci] = x[xi]; });

  const T* w = p.data();
  const T* bias = p.data() + g.oc * rows;
  std::vector<T> out(g.oc * cols);
  for (std::size_t o = 0; o < g.oc; ++o) {
    T* yo = out.data() + o * cols;
    std::fill(yo, yo + cols, bias[o]);
    for (std::size_t r = 0; r < rows; ++r) {
      const T a = w[o * rows + r];
      if (a != T(0)) k.axpy(a, col.data() + r * cols, yo, cols);
    }
  }
  Tensor<T> y({g.n, g.oc, g.oh, g.ow});
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.oc; ++o) {
      std::copy_n(out.data() + o * cols + n * spatial, spatial,
                  y.raw() + (n * g.oc + o) * spatial);
    }
  }
  return y;
}

template <typename T>
void conv_backward(const Conv2d& cs, std::span<const T> p, const Tensor<T>& x,
                   const std::vector<T>& col, const Tensor<T>& dy, std::span<T> grad,
                   Tensor<T>* dx) {
  const auto& k = kernels::active<T>();
  const auto g = conv_geometry(cs, x);
  const std::size_t rows = g.rows(), cols = g.cols(), spatial = g.spatial();

  std::vector<T> dyt(g.oc * cols);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.oc; ++o) {
      std::copy_n(dy.raw() + (n * g.oc + o) * spatial, spatial,
                  dyt.data() + o * cols + n * spatial);
    }
  }
  T* gw = grad.data();
  T* gb = grad.data() + g.oc * rows;
  for (std::size_t o = 0; o < g.oc; ++o) {
    const T* d = dyt.data() + o * cols;
    T s = T(0);
    for (std::size_t j = 0; j < cols; ++j) s += d[j];
    gb[o] += s;
    for (std::size_t r = 0; r < rows; ++r) {
      gw[o * rows + r] += k.dot(d, col.data() + r * cols, cols);
    }
  }
  if (dx) {
    const T* w = p.data();
    std::vector<T> dcol(rows * cols, T(0));
    for (std::size_t o = 0; o < g.oc; ++o) {
      const T* d = dyt.data() + o * cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const T a = w[o * rows + r];
        if (a != T(0)) k.axpy(a, d, dcol.data() + r * cols, cols);
      }
    }
    *dx = Tensor<T>(x.shape());
    for_each_patch_element(g, [&](std::size_t ci, std::size_t xi) { (*dx)[xi] += dcol[ci]; });
  }
}

// ---- Pooling and shape layers ----------------------------------------------

template <typename T>
Tensor<T> maxpool_forward(const MaxPool& mp, const Tensor<T>& x,
                          std::vector<std::uint32_t>& argmax) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t kk = mp.kernel, oh = h / kk, ow = w / kk;
  Tensor<T> y({n, c, oh, ow});
  argmax.assign(y.size(), 0);
  std::size_t out = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++out) {
        std::size_t best = base + (oy * kk) * w + ox * kk;
        for (std::size_t dy = 0; dy < kk; ++dy) {
          for (std::size_t dxi = 0; dxi < kk; ++dxi) {
            const std::size_t idx = base + (oy * kk + dy) * w + ox * kk + dxi;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[out] = x[best];
        argmax[out] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& x, const std::vector<std::uint32_t>& argmax,
                           const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template <typename T>
Tensor<T> gap_forward(const Tensor<T>& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    T s = T(0);
    const T* src = x.raw() + plane * hw;
    for (std::size_t i = 0; i < hw; ++i) s += src[i];
    y[plane] = s / static_cast<T>(hw);
  }
  return y;
}

template <typename T>
Tensor<T> gap_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> dx(x.shape());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T v = dy[plane] / static_cast<T>(hw);
    std::fill(dx.raw() + plane * hw, dx.raw() + (plane + 1) * hw, v);
  }
  return dx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  kernels::active<T>().relu_forward(x.raw(), y.raw(), x.size());
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  kernels::active<T>().relu_backward(x.raw(), dy.raw(), dx.raw(), x.size());
  return dx;
}

template <typename T>
Tensor<T> reshape_copy(const Tensor<T>& x, Shape shape) {
  Tensor<T> y = x;
  y.reshape(std::move(shape));
  return y;
}

Shape batched(std::size_t n, const Shape& per_example) {
  Shape s{n};
  s.insert(s.end(), per_example.begin(), per_example.end());
  return s;
}

std::vector<FlatLayer> flatten_layers(const NetSpec& spec, const std::vector<ParamSlot>& slots) {
  std::vector<FlatLayer> out;
  std::size_t next_slot = 0;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    for (std::size_t l = 0; l < spec.blocks[b].layers.size(); ++l) {
      const auto& ls = spec.blocks[b].layers[l];
      int slot = -1;
      if (layer_param_count(ls) > 0) slot = static_cast<int>(next_slot++);
      out.push_back({&ls, b, slot});
    }
  }
  (void)slots;
  return out;
}

// Runs the forward pass, optionally retaining what backward needs.
template <typename T>
Tensor<T> run_forward(const NetSpec& spec, const std::vector<ParamSlot>& slots,
                      const ParamStore<T>& params, const Tensor<T>& inputs,
                      std::vector<LayerCache<T>>* caches, std::vector<Tensor<T>>* trace) {
  const auto layers = flatten_layers(spec, slots);
  Tensor<T> x = inputs;
  if (caches) caches->resize(layers.size());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& fl = layers[li];
    std::span<const T> p;
    if (fl.slot >= 0) {
      const auto& s = slots[static_cast<std::size_t>(fl.slot)];
      p = std::span<const T>(params.blocks[s.block]).subspan(s.offset,
                                                             s.weight_count + s.bias_count);
    }
    if (trace) trace->push_back(x);
    Tensor<T> y;
    std::vector<T> col;
    std::vector<std::uint32_t> argmax;
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Dense>) {
            y = dense_forward<T>(l, p, x);
          } else if constexpr (std::is_same_v<L, Conv2d>) {
            y = conv_forward<T>(l, p, x, col);
          } else if constexpr (std::is_same_v<L, ReLU>) {
            y = relu_forward(x);
          } else if constexpr (std::is_same_v<L, MaxPool>) {
            y = maxpool_forward(l, x, argmax);
          } else if constexpr (std::is_same_v<L, GlobalAvgPool>) {
            y = gap_forward(x);
          } else {
            y = reshape_copy(x, {x.dim(0), x.size() / x.dim(0)});
          }
        },
        *fl.spec);
    const bool block_end = li + 1 == layers.size() || layers[li + 1].block != fl.block;
    if (block_end) check_finite(y, fl.block, "activation");
    if (caches) {
      auto& c = (*caches)[li];
      c.input = std::move(x);
      c.col = std::move(col);
      c.argmax = std::move(argmax);
    }
    x = std::move(y);
  }
  if (trace) trace->push_back(x);
  return x;
}

}  // namespace

template <typename T>
BlockNet<T>::BlockNet(NetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  plan();
  rng::Stream stream(seed, "init");
  for (const auto& s : slots_) {
    auto& block = params_.blocks[s.block];
    for (std::size_t i = 0; i < s.weight_count; ++i) {
      block[s.offset + i] = static_cast<T>(stream.uniform(-s.init_bound, s.init_bound));
    }
  }
}

template <typename T>
BlockNet<T>::BlockNet(NetSpec spec, ParamStore<T> params) : spec_(std::move(spec)) {
  plan();
  if (params.blocks.size() != params_.blocks.size()) {
    throw ShapeError("parameter store has " + std::to_string(params.blocks.size()) +
                     " blocks, spec has " + std::to_string(params_.blocks.size()));
  }
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    if (params.blocks[b].size() != params_.blocks[b].size()) {
      throw ShapeError("block " + std::to_string(b) + " has " +
                       std::to_string(params.blocks[b].size()) + " parameters, expected " +
                       std::to_string(params_.blocks[b].size()));
    }
  }
  params_ = std::move(params);
}

template <typename T>
void BlockNet<T>::plan() {
  validate(spec_);
  slots_.clear();
  layer_inputs_.clear();
  params_.blocks.assign(spec_.blocks.size(), {});
  Shape shape = spec_.input_shape;
  for (std::size_t b = 0; b < spec_.blocks.size(); ++b) {
    std::size_t offset = 0;
    for (std::size_t l = 0; l < spec_.blocks[b].layers.size(); ++l) {
      const auto& layer = spec_.blocks[b].layers[l];
      layer_inputs_.push_back(shape);
      const std::size_t count = layer_param_count(layer);
      if (count > 0) {
        ParamSlot s;
        s.block = b;
        s.layer = l;
        s.offset = offset;
        double fan_in = 0, fan_out = 0;
        if (const auto* d = std::get_if<Dense>(&layer)) {
          s.weight_count = d->in * d->out;
          s.bias_count = d->out;
          fan_in = static_cast<double>(d->in);
          fan_out = static_cast<double>(d->out);
        } else {
          const auto& c = std::get<Conv2d>(layer);
          s.weight_count = c.out_channels * c.in_channels * c.kernel * c.kernel;
          s.bias_count = c.out_channels;
          fan_in = static_cast<double>(c.in_channels * c.kernel * c.kernel);
          fan_out = static_cast<double>(c.out_channels * c.kernel * c.kernel);
        }
        s.init_bound = std::sqrt(6.0 / (fan_in + fan_out));
        slots_.push_back(s);
        offset += count;
      }
      shape = layer_output_shape(layer, shape);
    }
    params_.blocks[b].assign(offset, T(0));
  }
}

template <typename T>
Tensor<T> BlockNet<T>::forward(const Tensor<T>& inputs) const {
  return run_forward<T>(spec_, slots_, params_, inputs, nullptr, nullptr);
}

template <typename T>
std::vector<Tensor<T>> BlockNet<T>::activations(const Tensor<T>& inputs) const {
  std::vector<Tensor<T>> trace;
  run_forward<T>(spec_, slots_, params_, inputs, nullptr, &trace);
  return trace;
}

template <typename T>
LossAndGrad<T> BlockNet<T>::loss_and_grad(const Batch<T>& batch, std::size_t first_block) const {
  const std::size_t n = batch.labels.size();
  if (n == 0) throw UsageError("loss_and_grad needs a non-empty batch");
  if (batch.inputs.rank() == 0 || batch.inputs.dim(0) != n) {
    throw ShapeError("batch inputs and labels disagree on batch size");
  }
  const std::size_t classes = spec_.class_count;
  for (auto y : batch.labels) {
    if (y >= classes) throw UsageError("label " + std::to_string(y) + " >= class_count");
  }

  std::vector<LayerCache<T>> caches;
  const Tensor<T> logits = run_forward<T>(spec_, slots_, params_, batch.inputs, &caches, nullptr);

  LossAndGrad<T> out;
  out.grads.blocks.reserve(params_.blocks.size());
  for (const auto& b : params_.blocks) out.grads.blocks.emplace_back(b.size(), T(0));

  Tensor<T> dy(logits.shape());
  double total = 0.0;
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* l = logits.raw() + r * classes;
    T* d = dy.raw() + r * classes;
    const T mx = *std::max_element(l, l + classes);
    T sum = T(0);
    for (std::size_t c = 0; c < classes; ++c) {
      d[c] = std::exp(l[c] - mx);
      sum += d[c];
    }
    const T lse = mx + std::log(sum);
    total += static_cast<double>(lse - l[batch.labels[r]]);
    for (std::size_t c = 0; c < classes; ++c) d[c] = (d[c] / sum) * inv_n;
    d[batch.labels[r]] -= inv_n;
  }
  out.loss = total / static_cast<double>(n);
  if (!std::isfinite(out.loss)) throw NumericError(spec_.blocks.size() - 1, "non-finite loss");

  const auto layers = flatten_layers(spec_, slots_);
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& fl = layers[li];
    auto& cache = caches[li];
    if (fl.block < first_block) break;
    const Tensor<T>& x = cache.input;
    const bool need_dx = li > 0 && layers[li - 1].block >= first_block;
    Tensor<T> dx;
    std::span<const T> p;
    std::span<T> g;
    if (fl.slot >= 0) {
      const auto& s = slots_[static_cast<std::size_t>(fl.slot)];
      const std::size_t count = s.weight_count + s.bias_count;
      p = std::span<const T>(params_.blocks[s.block]).subspan(s.offset, count);
      g = std::span<T>(out.grads.blocks[s.block]).subspan(s.offset, count);
    }
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Dense>) {
            dense_backward<T>(l, p, x, dy, g, need_dx ? &dx : nullptr);
          } else if constexpr (std::is_same_v<L, Conv2d>) {
            conv_backward<T>(l, p, x, cache.col, dy, g, need_dx ? &dx : nullptr);
          } else if constexpr (std::is_same_v<L, ReLU>) {
            dx = relu_backward(x, dy);
          } else if constexpr (std::is_same_v<L, MaxPool>) {
            dx = maxpool_backward(x, cache.argmax, dy);
          } else if constexpr (std::is_same_v<L, GlobalAvgPool>) {
            dx = gap_backward(x, dy);
          } else {
            dx = reshape_copy(dy, x.shape());
          }
        },
        *fl.spec);
    cache = LayerCache<T>{};
    if (need_dx) dy = std::move(dx);
  }
  return out;
}

template <typename T>
Batch<T> gather(const DataView& data, std::span<const std::size_t> indices,
                const Shape& input_shape) {
  if (shape_size(input_shape) != data.example_size) {
    throw ShapeError("network input " + shape_to_string(input_shape) + " does not hold " +
                     std::to_string(data.example_size) + " values per example");
  }
  Batch<T> batch;
  batch.inputs = Tensor<T>(batched(indices.size(), input_shape));
  batch.labels.reserve(indices.size());
  T* dst = batch.inputs.raw();
  for (std::size_t i : indices) {
    if (i >= data.size()) throw UsageError("example index out of range");
    const float* src = data.pixels.data() + i * data.example_size;
    for (std::size_t j = 0; j < data.example_size; ++j) *dst++ = static_cast<T>(src[j]);
    batch.labels.push_back(data.labels[i]);
  }
  return batch;
}

template <typename T>
EvalReport evaluate(const BlockNet<T>& net, const DataView& data) {
  if (data.size() == 0) throw UsageError("cannot evaluate on an empty dataset");
  constexpr std::size_t kChunk = 256;
  const std::size_t classes = net.spec().class_count;
  EvalReport report;
  report.n_examples = data.size();
  double loss = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const auto batch = gather<T>(data, idx, net.spec().input_shape);
    const auto logits = net.forward(batch.inputs);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const T* l = logits.raw() + r * classes;
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (l[c] > l[best]) best = c;
      }
      const T mx = l[best];
      T sum = T(0);
      for (std::size_t c = 0; c < classes; ++c) sum += std::exp(l[c] - mx);
      loss += static_cast<double>(mx + std::log(sum) - l[batch.labels[r]]);
      if (best != batch.labels[r]) {
        ++report.mispredictions;
        report.mispredicted.push_back(start + r);
      }
    }
  }
  report.loss_mean = loss / static_cast<double>(data.size());
  return report;
}

template <typename T>
std::vector<std::vector<T>> get_blocks(const BlockNet<T>& net, const InterventionSet& blocks) {
  if (blocks.block_count() != net.block_count()) {
    throw UsageError("intervention set is over a different block count");
  }
  std::vector<std::vector<T>> out;
  for (auto b : blocks.members()) {
    const auto src = net.block(b);
    out.emplace_back(src.begin(), src.end());
  }
  return out;
}

template <typename T>
void set_blocks(BlockNet<T>& net, const InterventionSet& blocks,
                const std::vector<std::vector<T>>& values) {
  if (blocks.block_count() != net.block_count()) {
    throw UsageError("intervention set is over a different block count");
  }
  const auto members = blocks.members();
  if (members.size() != values.size()) {
    throw ShapeError("set_blocks got " + std::to_string(values.size()) + " tensors for " +
                     std::to_string(members.size()) + " blocks");
  }
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (values[i].size() != net.block_size(members[i])) {
      throw ShapeError("block " + std::to_string(members[i]) + " expects " +
                       std::to_string(net.block_size(members[i])) + " values, got " +
                       std::to_string(values[i].size()));
    }
  }
  for (std::size_t i = 0; i < members.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), net.block(members[i]).begin());
  }
}

template <typename T>
void copy_blocks(const BlockNet<T>& source, BlockNet<T>& target, const InterventionSet& blocks) {
  if (source.spec() != target.spec()) throw UsageError("copy_blocks across different specs");
  for (auto b : blocks.members()) {
    const auto src = source.block(b);
    std::copy(src.begin(), src.end(), target.block(b).begin());
  }
}

#define SSCOPE_INSTANTIATE(T)                                                               \
  template struct ParamStore<T>;                                                            \
  template class BlockNet<T>;                                                               \
  template Batch<T> gather<T>(const DataView&, std::span<const std::size_t>, const Shape&); \
  template EvalReport evaluate<T>(const BlockNet<T>&, const DataView&);                     \
  template std::vector<std::vector<T>> get_blocks<T>(const BlockNet<T>&,                    \
                                                     const InterventionSet&);               \
  template void set_blocks<T>(BlockNet<T>&, const InterventionSet&,                         \
                              const std::vector<std::vector<T>>&);                          \
  template void copy_blocks<T>(const BlockNet<T>&, BlockNet<T>&, const InterventionSet&);

SSCOPE_INSTANTIATE(float)
SSCOPE_INSTANTIATE(double)

#undef SSCOPE_INSTANTIATE

}  // namespace sscope::net
