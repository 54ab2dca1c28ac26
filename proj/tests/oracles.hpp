#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "sscope/net.hpp"
#include "sscope/rng.hpp"

namespace oracle {

using namespace sscope;

/// A random shape-valid network with few parameters: either a dense stack or
/// a small conv net ending in pooling and a dense classifier.
inline net::NetSpec random_small_net(rng::Stream& s) {
  net::NetSpec spec;
  spec.class_count = 2 + s.below(3);
  if (s.below(2) == 0) {
    std::size_t width = 2 + s.below(5);
    spec.input_shape = {width};
    const std::size_t m = 2 + s.below(3);
    for (std::size_t b = 0; b + 1 < m; ++b) {
      const std::size_t out = 2 + s.below(7);
      spec.blocks.push_back({{net::Dense{width, out}, net::ReLU{}}});
      width = out;
    }
    spec.blocks.push_back({{net::Dense{width, spec.class_count}}});
    return spec;
  }
  const std::size_t c = 1 + s.below(2);
  const std::size_t hw = 5 + s.below(4);
  spec.input_shape = {c, hw, hw};
  Shape shape = spec.input_shape;
  auto push = [&](net::BlockSpec& block, net::LayerSpec layer) {
    shape = net::layer_output_shape(layer, shape);
    block.layers.push_back(layer);
  };
  net::BlockSpec b0, b1, b2;
  push(b0, net::Conv2d{c, 2 + s.below(2), 1 + s.below(3), 1 + s.below(2), s.below(2)});
  push(b0, net::ReLU{});
  if (shape[1] >= 4 && s.below(2) == 0) push(b0, net::MaxPool{2});
  push(b1, net::Conv2d{shape[0], 2 + s.below(3), std::min<std::size_t>(2, shape[1]), 1, s.below(2)});
  push(b1, net::ReLU{});
  if (s.below(2) == 0) {
    push(b2, net::GlobalAvgPool{});
  } else {
    push(b2, net::Flatten{});
  }
  push(b2, net::Dense{shape[0], spec.class_count});
  spec.blocks = {b0, b1, b2};
  return spec;
}

inline net::Batch<double> random_batch(rng::Stream& s, const Shape& input_shape,
                                       std::size_t classes, std::size_t n) {
  Shape shape{n};
  shape.insert(shape.end(), input_shape.begin(), input_shape.end());
  net::Batch<double> batch{Tensor<double>(shape), {}};
  for (auto& x : batch.inputs.data()) x = s.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) batch.labels.push_back(static_cast<std::uint32_t>(s.below(classes)));
  return batch;
}

/// Smallest distance of any ReLU input to zero and of any max-pool winner to
/// its runner-up. Finite differences are only meaningful away from kinks.
inline double kink_margin(const net::BlockNet<double>& network, const net::Batch<double>& batch) {
  const auto acts = network.activations(batch.inputs);
  double margin = std::numeric_limits<double>::infinity();
  std::size_t li = 0;
  for (const auto& block : network.spec().blocks) {
    for (const auto& layer : block.layers) {
      const auto& x = acts[li];
      if (std::holds_alternative<net::ReLU>(layer)) {
        for (double v : x.data()) margin = std::min(margin, std::fabs(v));
      } else if (const auto* pool = std::get_if<net::MaxPool>(&layer)) {
        const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), k = pool->kernel;
        for (std::size_t e = 0; e < n; ++e)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < h / k; ++oy)
              for (std::size_t ox = 0; ox < w / k; ++ox) {
                std::vector<double> window;
                for (std::size_t dy = 0; dy < k; ++dy)
                  for (std::size_t dx = 0; dx < k; ++dx)
                    window.push_back(x[((e * c + ch) * h + oy * k + dy) * w + ox * k + dx]);
                std::sort(window.rbegin(), window.rend());
                // A tie of post-ReLU zeros stays a zero-gradient tie while the
                // ReLU inputs keep their sign, which the ReLU margin covers.
                if (window[0] == 0.0 && window[1] == 0.0) continue;
                margin = std::min(margin, window[0] - window[1]);
              }
      }
      ++li;
    }
  }
  return margin;
}

struct GradCheck {
  std::size_t params = 0;
  std::size_t bad = 0;
  double worst_rel = 0.0;
};

/// Central differences with step h against the reverse-mode gradient.
/// Relative error uses max(|a|, |b|, floor) as the denominator so that
/// vanishing components are judged on an absolute scale.
inline GradCheck finite_difference_check(net::BlockNet<double>& network,
                                         const net::Batch<double>& batch, double h = 1e-5,
                                         double tol = 1e-4, double floor = 1e-5) {
  GradCheck out;
  const auto analytic = network.loss_and_grad(batch).grads;
  auto& params = network.mutable_params();
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    for (std::size_t i = 0; i < params.blocks[b].size(); ++i) {
      double& p = params.blocks[b][i];
      const double keep = p;
      p = keep + h;
      const double up = network.loss_and_grad(batch).loss;
      p = keep - h;
      const double down = network.loss_and_grad(batch).loss;
      p = keep;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic.blocks[b][i];
      const double rel = std::fabs(fd - a) / std::max({std::fabs(fd), std::fabs(a), floor});
      out.worst_rel = std::max(out.worst_rel, rel);
      out.bad += rel > tol;
      ++out.params;
    }
  }
  return out;
}

/// Draws nets and batches until the kink margin is comfortably above the
/// perturbation size, then runs the check.
inline GradCheck random_gradient_trial(std::uint64_t seed) {
  rng::Stream s(seed, "gradient-oracle");
  const auto spec = random_small_net(s);
  for (int attempt = 0;; ++attempt) {
    net::BlockNet<double> network(spec, s.next_u64());
    // Nonzero biases so that no ReLU input sits at an exact zero.
    for (auto& block : network.mutable_params().blocks)
      for (auto& v : block) v += s.uniform(-0.1, 0.1);
    const auto batch = random_batch(s, spec.input_shape, spec.class_count, 2 + s.below(3));
    if (kink_margin(network, batch) > 1e-3 || attempt >= 50) {
      return finite_difference_check(network, batch);
    }
  }
}

}  // namespace oracle
