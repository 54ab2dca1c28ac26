#include "sscope/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sscope/error.hpp"

namespace sscope::net {
namespace {

constexpr char kMagic[4] = {'S', 'S', 'C', '1'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f32(std::vector<unsigned char>& out, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

float get_f32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(v);
}

}  // namespace

template <typename T>
std::vector<unsigned char> encode_checkpoint(const NetSpec& spec, const ParamStore<T>& params) {
  const std::string text = to_canonical_text(spec);
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& block : params.blocks) {
    for (T v : block) put_f32(out, static_cast<float>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an SSC1 checkpoint");
  }
  const std::uint64_t len = get_u64(bytes.data() + 4);
  if (len > bytes.size() - 12) throw FormatError("truncated SSC1 spec text");
  const std::string text(reinterpret_cast<const char*>(bytes.data() + 12), len);
  Checkpoint ck;
  ck.spec = parse_net_spec(text);
  // Shape the store through a throwaway network so block sizes match the spec.
  const BlockNet<float> shape_probe(ck.spec, std::uint64_t{0});
  std::size_t pos = 12 + len;
  ck.params.blocks.resize(shape_probe.block_count());
  for (std::size_t b = 0; b < shape_probe.block_count(); ++b) {
    const std::size_t count = shape_probe.block_size(b);
    if (bytes.size() - pos < count * 4) {
      throw FormatError("truncated SSC1 parameters in block " + std::to_string(b));
    }
    auto& block = ck.params.blocks[b];
    block.resize(count);
    for (std::size_t i = 0; i < count; ++i, pos += 4) block[i] = get_f32(bytes.data() + pos);
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after SSC1 parameters");
  return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const BlockNet<T>& net) {
  const auto bytes = encode_checkpoint(net.spec(), net.params());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template std::vector<unsigned char> encode_checkpoint<float>(const NetSpec&,
                                                             const ParamStore<float>&);
template std::vector<unsigned char> encode_checkpoint<double>(const NetSpec&,
                                                              const ParamStore<double>&);
template void save_checkpoint<float>(const std::filesystem::path&, const BlockNet<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const BlockNet<double>&);

}  // namespace sscope::net
