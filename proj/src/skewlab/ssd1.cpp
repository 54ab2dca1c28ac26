#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sscope/error.hpp"
#include "sscope/skew.hpp"

namespace sscope::skew {
namespace {

constexpr char kMagic[4] = {'S', 'S', 'D', '1'};
constexpr std::size_t kHeader = 4 + 5 * 4;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw FormatError(std::string("SSD1 ") + what + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<unsigned char> encode_ssd1(const Dataset& data) {
  data.validate();
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, checked_u32(data.size(), "example count"));
  put_u32(out, checked_u32(data.shape.channels, "channels"));
  put_u32(out, checked_u32(data.shape.height, "height"));
  put_u32(out, checked_u32(data.shape.width, "width"));
  put_u32(out, checked_u32(data.class_count, "class count"));
  out.reserve(out.size() + data.pixels.size() + 4 * data.size());
  for (float v : data.pixels) {
    out.push_back(static_cast<unsigned char>(std::lround(static_cast<double>(v) * 255.0)));
  }
  for (auto l : data.labels) put_u16(out, l);
  for (auto a : data.attributes) put_u16(out, a);
  return out;
}

Dataset decode_ssd1(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an SSD1 dataset");
  }
  Dataset d;
  const std::size_t n = get_u32(bytes.data() + 4);
  d.shape = {get_u32(bytes.data() + 8), get_u32(bytes.data() + 12), get_u32(bytes.data() + 16)};
  d.class_count = get_u32(bytes.data() + 20);
  const std::size_t pix = n * d.shape.size();
  if (bytes.size() != kHeader + pix + 4 * n) {
    throw FormatError("SSD1 size mismatch: expected " + std::to_string(kHeader + pix + 4 * n) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  d.pixels.resize(pix);
  const unsigned char* p = bytes.data() + kHeader;
  for (std::size_t i = 0; i < pix; ++i) {
    d.pixels[i] = static_cast<float>(static_cast<double>(p[i]) / 255.0);
  }
  p += pix;
  d.labels.resize(n);
  d.attributes.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = get_u16(p + 2 * i);
  p += 2 * n;
  for (std::size_t i = 0; i < n; ++i) d.attributes[i] = get_u16(p + 2 * i);
  try {
    d.validate();
  } catch (const DataError& e) {
    throw FormatError(std::string("invalid SSD1 contents: ") + e.what());
  }
  return d;
}

void write_ssd1(const std::filesystem::path& path, const Dataset& data) {
  const auto bytes = encode_ssd1(data);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Dataset read_ssd1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return decode_ssd1(bytes);
}

}  // namespace sscope::skew
