#include "patchlens/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace patchlens {
namespace {

using nlohmann::json;

constexpr std::size_t kLenBytes = 8;

std::uint64_t read_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_u64_le(std::uint64_t v, std::vector<std::uint8_t>& out) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

float read_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void write_f32_le(float v, std::vector<std::uint8_t>& out) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

struct Entry {
  std::string name;
  Shape shape;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

std::uint64_t as_u64(const json& v, const std::string& what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw FormatError("safetensors header: " + what + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

}  // namespace

TensorMap parse_safetensors(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kLenBytes) {
    throw FormatError("safetensors: truncated file (" + std::to_string(bytes.size()) + " bytes, no header length)");
  }
  const std::uint64_t header_len = read_u64_le(bytes.data());
  if (header_len > bytes.size() - kLenBytes) {
    throw FormatError("safetensors: truncated header (declares " + std::to_string(header_len) + " bytes, " +
                      std::to_string(bytes.size() - kLenBytes) + " available)");
  }
  const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + kLenBytes);
  json header;
  try {
    header = json::parse(header_begin, header_begin + header_len);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("safetensors: bad header JSON: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("safetensors: header JSON is not an object");

  const std::uint8_t* payload = bytes.data() + kLenBytes + header_len;
  const std::uint64_t payload_len = bytes.size() - kLenBytes - header_len;

  std::vector<Entry> entries;
  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") continue;
    if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") || !info.contains("data_offsets")) {
      throw FormatError("safetensors header: entry '" + name + "' needs dtype, shape and data_offsets");
    }
    const auto& dtype = info["dtype"];
    if (!dtype.is_string()) throw FormatError("safetensors header: dtype of '" + name + "' is not a string");
    if (dtype.get<std::string>() != "F32") {
      throw FormatError("safetensors: unsupported dtype " + dtype.get<std::string>() + " for tensor '" + name +
                        "' (only F32 is supported)");
    }
    Entry e;
    e.name = name;
    if (!info["shape"].is_array()) throw FormatError("safetensors header: shape of '" + name + "' is not an array");
    for (const auto& d : info["shape"]) e.shape.push_back(as_u64(d, "shape of '" + name + "'"));
    const auto& off = info["data_offsets"];
    if (!off.is_array() || off.size() != 2) {
      throw FormatError("safetensors header: data_offsets of '" + name + "' must be [begin, end]");
    }
    e.begin = as_u64(off[0], "data_offsets of '" + name + "'");
    e.end = as_u64(off[1], "data_offsets of '" + name + "'");
    if (e.end < e.begin) throw FormatError("safetensors: data_offsets of '" + name + "' end before they begin");
    if (e.end - e.begin != shape_numel(e.shape) * sizeof(float)) {
      throw FormatError("safetensors: tensor '" + name + "' spans " + std::to_string(e.end - e.begin) +
                        " bytes but shape " + shape_to_string(e.shape) + " needs " +
                        std::to_string(shape_numel(e.shape) * sizeof(float)));
    }
    if (e.end > payload_len) {
      throw FormatError("safetensors: truncated payload, tensor '" + name + "' ends at byte " +
                        std::to_string(e.end) + " of " + std::to_string(payload_len));
    }
    entries.push_back(std::move(e));
  }

  // The payload must be covered exactly once: no overlaps and no holes.
  std::vector<const Entry*> order;
  for (const auto& e : entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const Entry* a, const Entry* b) {
    return a->begin != b->begin ? a->begin < b->begin : a->end < b->end;
  });
  std::uint64_t cursor = 0;
  for (const Entry* e : order) {
    if (e->begin < cursor) {
      throw FormatError("safetensors: overlapping data_offsets at tensor '" + e->name + "'");
    }
    if (e->begin > cursor) {
      throw FormatError("safetensors: unindexed gap before tensor '" + e->name + "'");
    }
    cursor = e->end;
  }
  if (cursor != payload_len) {
    throw FormatError("safetensors: " + std::to_string(payload_len - cursor) + " trailing payload bytes not indexed");
  }

  TensorMap out;
  for (const auto& e : entries) {
    std::vector<float> values(shape_numel(e.shape));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = read_f32_le(payload + e.begin + 4 * i);
    out.emplace(e.name, Tensor(e.shape, std::move(values)));
  }
  return out;
}

TensorMap load_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open safetensors file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_safetensors(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> serialize_safetensors(const TensorMap& tensors) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t bytes = t.numel() * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  while ((kLenBytes + text.size()) % 8 != 0) text.push_back(' ');

  std::vector<std::uint8_t> out;
  out.reserve(kLenBytes + text.size() + offset);
  write_u64_le(text.size(), out);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : tensors) {
    for (float v : t.data()) write_f32_le(v, out);
  }
  return out;
}

void save_safetensors(const std::filesystem::path& path, const TensorMap& tensors) {
  const auto bytes = serialize_safetensors(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write safetensors file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace patchlens
