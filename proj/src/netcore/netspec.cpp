#include "sscope/netspec.hpp"

#include <charconv>
#include <optional>
#include <sstream>

#include "sscope/error.hpp"

namespace sscope {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace sscope

namespace sscope::net {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

struct LayerLocation {
  std::size_t block;
  std::size_t layer;
  const LayerSpec* spec;
};

std::string location_string(const LayerLocation& loc) {
  return "block " + std::to_string(loc.block) + " layer " + std::to_string(loc.layer) + " " +
         layer_to_string(*loc.spec);
}

}  // namespace

std::string layer_to_string(const LayerSpec& layer) {
  return std::visit(
      Overloaded{
          [](const Dense& d) {
            return "Dense(" + std::to_string(d.in) + "," + std::to_string(d.out) + ")";
          },
          [](const Conv2d& c) {
            return "Conv2d(" + std::to_string(c.in_channels) + "," +
                   std::to_string(c.out_channels) + ",k=" + std::to_string(c.kernel) +
                   ",s=" + std::to_string(c.stride) + ",p=" + std::to_string(c.pad) + ")";
          },
          [](const ReLU&) { return std::string("ReLU"); },
          [](const MaxPool& p) { return "MaxPool(" + std::to_string(p.kernel) + ")"; },
          [](const GlobalAvgPool&) { return std::string("GlobalAvgPool"); },
          [](const Flatten&) { return std::string("Flatten"); },
      },
      layer);
}

std::size_t layer_param_count(const LayerSpec& layer) {
  if (const auto* d = std::get_if<Dense>(&layer)) return d->in * d->out + d->out;
  if (const auto* c = std::get_if<Conv2d>(&layer)) {
    return c->out_channels * c->in_channels * c->kernel * c->kernel + c->out_channels;
  }
  return 0;
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& input) {
  return std::visit(
      Overloaded{
          [&](const Dense& d) -> Shape {
            if (d.in == 0 || d.out == 0) throw ShapeError("Dense dims must be positive");
            if (input.size() != 1 || input[0] != d.in) {
              throw ShapeError("expected input [" + std::to_string(d.in) + "], got " +
                               shape_to_string(input));
            }
            return {d.out};
          },
          [&](const Conv2d& c) -> Shape {
            if (c.in_channels == 0 || c.out_channels == 0 || c.kernel == 0 || c.stride == 0) {
              throw ShapeError("Conv2d dims must be positive");
            }
            if (input.size() != 3 || input[0] != c.in_channels) {
              throw ShapeError("expected input [" + std::to_string(c.in_channels) +
                               ",H,W], got " + shape_to_string(input));
            }
            const std::size_t h = input[1] + 2 * c.pad;
            const std::size_t w = input[2] + 2 * c.pad;
            if (h < c.kernel || w < c.kernel) {
              throw ShapeError("kernel larger than padded input " + shape_to_string(input));
            }
            return {c.out_channels, (h - c.kernel) / c.stride + 1, (w - c.kernel) / c.stride + 1};
          },
          [&](const ReLU&) -> Shape { return input; },
          [&](const MaxPool& p) -> Shape {
            if (p.kernel == 0) throw ShapeError("MaxPool kernel must be positive");
            if (input.size() != 3 || input[1] < p.kernel || input[2] < p.kernel) {
              throw ShapeError("MaxPool needs [C,H,W] with H,W >= kernel, got " +
                               shape_to_string(input));
            }
            return {input[0], input[1] / p.kernel, input[2] / p.kernel};
          },
          [&](const GlobalAvgPool&) -> Shape {
            if (input.size() != 3) {
              throw ShapeError("GlobalAvgPool needs [C,H,W], got " + shape_to_string(input));
            }
            return {input[0]};
          },
          [&](const Flatten&) -> Shape { return {shape_size(input)}; },
      },
      layer);
}

void validate(const NetSpec& spec) {
  if (spec.blocks.size() < 2) throw ShapeError("a network needs at least 2 blocks");
  if (spec.blocks.size() > 64) throw ShapeError("at most 64 blocks are supported");
  if (spec.class_count < 2) throw ShapeError("class_count must be at least 2");
  if (spec.input_shape.empty() || shape_size(spec.input_shape) == 0) {
    throw ShapeError("input_shape must be non-empty with positive dims");
  }
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& layers = spec.blocks[b].layers;
    if (layers.empty()) throw ShapeError("block " + std::to_string(b) + " is empty");
    std::size_t params = 0;
    for (const auto& l : layers) params += layer_param_count(l);
    if (params == 0) {
      throw ShapeError("block " + std::to_string(b) + " has no trainable parameters");
    }
  }
  const auto& first = spec.blocks.front().layers.front();
  if (!std::holds_alternative<Conv2d>(first) && !std::holds_alternative<Dense>(first)) {
    throw ShapeError("first block must begin with Conv2d or Dense, found " +
                     layer_to_string(first));
  }
  const auto& last = spec.blocks.back().layers.back();
  const auto* head = std::get_if<Dense>(&last);
  if (head == nullptr || head->out != spec.class_count) {
    throw ShapeError("last block must end with Dense(*, " + std::to_string(spec.class_count) +
                     "), found " + layer_to_string(last));
  }

  Shape current = spec.input_shape;
  std::optional<LayerLocation> previous;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& layers = spec.blocks[b].layers;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const LayerLocation here{b, l, &layers[l]};
      try {
        current = layer_output_shape(layers[l], current);
      } catch (const ShapeError& e) {
        const std::string prev =
            previous ? location_string(*previous) : std::string("network input");
        throw ShapeError("incompatible layers: " + prev + " -> " + location_string(here) +
                         ": " + e.what());
      }
      previous = here;
    }
  }
}

std::string to_canonical_text(const NetSpec& spec) {
  std::ostringstream os;
  os << "sscope-netspec 1\n";
  os << "input";
  for (auto d : spec.input_shape) os << ' ' << d;
  os << "\nclasses " << spec.class_count << '\n';
  for (const auto& block : spec.blocks) {
    os << "block\n";
    for (const auto& layer : block.layers) {
      std::visit(Overloaded{
                     [&](const Dense& d) { os << "dense " << d.in << ' ' << d.out; },
                     [&](const Conv2d& c) {
                       os << "conv2d " << c.in_channels << ' ' << c.out_channels << ' '
                          << c.kernel << ' ' << c.stride << ' ' << c.pad;
                     },
                     [&](const ReLU&) { os << "relu"; },
                     [&](const MaxPool& p) { os << "maxpool " << p.kernel; },
                     [&](const GlobalAvgPool&) { os << "gap"; },
                     [&](const Flatten&) { os << "flatten"; },
                 },
                 layer);
      os << '\n';
    }
    os << "end\n";
  }
  return os.str();
}

namespace {

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::istringstream is{std::string(line)};
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

std::size_t to_size(const std::string& word, std::size_t line_no) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), v);
  if (ec != std::errc{} || ptr != word.data() + word.size()) {
    throw FormatError("netspec line " + std::to_string(line_no) + ": expected integer, got '" +
                      word + "'");
  }
  return v;
}

}  // namespace

NetSpec parse_net_spec(std::string_view text) {
  NetSpec spec;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  BlockSpec* open = nullptr;
  while (std::getline(is, line)) {
    ++line_no;
    const auto words = split_words(line);
    if (words.empty()) continue;
    auto arity = [&](std::size_t n) {
      if (words.size() != n + 1) {
        throw FormatError("netspec line " + std::to_string(line_no) + ": '" + words[0] +
                          "' takes " + std::to_string(n) + " arguments");
      }
    };
    const auto& kw = words[0];
    if (!header) {
      if (kw != "sscope-netspec" || words.size() != 2 || words[1] != "1") {
        throw FormatError("netspec must start with 'sscope-netspec 1'");
      }
      header = true;
    } else if (kw == "input") {
      spec.input_shape.clear();
      for (std::size_t i = 1; i < words.size(); ++i) {
        spec.input_shape.push_back(to_size(words[i], line_no));
      }
    } else if (kw == "classes") {
      arity(1);
      spec.class_count = to_size(words[1], line_no);
    } else if (kw == "block") {
      if (open) throw FormatError("netspec line " + std::to_string(line_no) + ": nested block");
      spec.blocks.emplace_back();
      open = &spec.blocks.back();
    } else if (kw == "end") {
      if (!open) throw FormatError("netspec line " + std::to_string(line_no) + ": stray end");
      open = nullptr;
    } else {
      if (!open) {
        throw FormatError("netspec line " + std::to_string(line_no) + ": layer outside block");
      }
      if (kw == "dense") {
        arity(2);
        open->layers.emplace_back(Dense{to_size(words[1], line_no), to_size(words[2], line_no)});
      } else if (kw == "conv2d") {
        arity(5);
        open->layers.emplace_back(Conv2d{to_size(words[1], line_no), to_size(words[2], line_no),
                                         to_size(words[3], line_no), to_size(words[4], line_no),
                                         to_size(words[5], line_no)});
      } else if (kw == "relu") {
        arity(0);
        open->layers.emplace_back(ReLU{});
      } else if (kw == "maxpool") {
        arity(1);
        open->layers.emplace_back(MaxPool{to_size(words[1], line_no)});
      } else if (kw == "gap") {
        arity(0);
        open->layers.emplace_back(GlobalAvgPool{});
      } else if (kw == "flatten") {
        arity(0);
        open->layers.emplace_back(Flatten{});
      } else {
        throw FormatError("netspec line " + std::to_string(line_no) + ": unknown layer '" + kw +
                          "'");
      }
    }
  }
  if (!header) throw FormatError("empty netspec");
  if (open) throw FormatError("netspec: unterminated block");
  validate(spec);
  return spec;
}

NetSpec mlp4(std::size_t input_features, std::size_t class_count, std::size_t hidden) {
  NetSpec spec;
  spec.input_shape = {input_features};
  spec.class_count = class_count;
  spec.blocks = {
      BlockSpec{{Dense{input_features, hidden}, ReLU{}}},
      BlockSpec{{Dense{hidden, hidden}, ReLU{}}},
      BlockSpec{{Dense{hidden, hidden / 2}, ReLU{}}},
      BlockSpec{{Dense{hidden / 2, class_count}}},
  };
  validate(spec);
  return spec;
}

NetSpec minicnn6(std::size_t channels, std::size_t image_size, std::size_t class_count,
                 std::size_t width) {
  NetSpec spec;
  spec.input_shape = {channels, image_size, image_size};
  spec.class_count = class_count;
  const std::size_t w1 = width, w2 = 2 * width, w3 = 4 * width;
  // Large inputs get a strided stem so every later stage runs at <= 16 px.
  const std::size_t stem_stride = image_size >= 32 ? 2 : 1;
  spec.blocks = {
      BlockSpec{{Conv2d{channels, w1, 3, stem_stride, 1}, ReLU{}}},
      BlockSpec{{Conv2d{w1, w1, 3, 1, 1}, ReLU{}, MaxPool{2}}},
      BlockSpec{{Conv2d{w1, w2, 3, 1, 1}, ReLU{}, MaxPool{2}}},
      BlockSpec{{Conv2d{w2, w2, 3, 1, 1}, ReLU{}, MaxPool{2}}},
      BlockSpec{{Conv2d{w2, w3, 3, 1, 1}, ReLU{}}},
      BlockSpec{{GlobalAvgPool{}, Dense{w3, class_count}}},
  };
  validate(spec);
  return spec;
}

NetSpec preset(std::string_view name, const Shape& image_shape, std::size_t class_count) {
  if (name == "mlp4") return mlp4(shape_size(image_shape), class_count);
  if (name == "minicnn6") {
    if (image_shape.size() != 3 || image_shape[1] != image_shape[2]) {
      throw ConfigError("minicnn6 needs square [C,H,W] images");
    }
    return minicnn6(image_shape[0], image_shape[1], class_count);
  }
  throw ConfigError("unknown net preset '" + std::string(name) + "'");
}

}  // namespace sscope::net
