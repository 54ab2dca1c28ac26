#pragma once

// Network checkpoint ("SSC1"):
//
//   bytes 0..3   magic "SSC1"
//   u64 LE       length L of the canonical NetSpec text
//   L bytes      canonical NetSpec text (see to_canonical_text)
//   f32 LE...    every block's parameters, block 0 first, declaration order
//
// 64-bit parameter stores are narrowed to f32 on save.

#include <filesystem>
#include <string>
#include <vector>

#include "sscope/net.hpp"

namespace sscope::net {

struct Checkpoint {
  NetSpec spec;
  ParamStore<float> params;
};

template <typename T>
std::vector<unsigned char> encode_checkpoint(const NetSpec& spec, const ParamStore<T>& params);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const BlockNet<T>& net);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sscope::net
