#pragma once

// Reader/writer for the safetensors container:
//   u64 little-endian header length N
//   N bytes of UTF-8 JSON: {name: {"dtype", "shape", "data_offsets": [begin, end]}, "__metadata__"?: {...}}
//   payload; offsets are relative to the payload start
// Only F32 tensors are materialised.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchlens/tensor.hpp"

namespace patchlens {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TensorMap = std::map<std::string, Tensor>;

TensorMap parse_safetensors(const std::vector<std::uint8_t>& bytes);
TensorMap load_safetensors(const std::filesystem::path& path);

/// Names are written in sorted order; the header is space-padded to an
/// 8-byte boundary.
std::vector<std::uint8_t> serialize_safetensors(const TensorMap& tensors);
void save_safetensors(const std::filesystem::path& path, const TensorMap& tensors);

}  // namespace patchlens
