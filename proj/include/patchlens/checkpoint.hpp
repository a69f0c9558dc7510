#pragma once

// Conversion between released BERT-family checkpoint tensors and the
// per-head encoder layout. The full name table is in docs/checkpoint_mapping.md.

#include <string>
#include <vector>

#include "patchlens/encoder.hpp"
#include "patchlens/safetensors.hpp"

namespace patchlens {

class MissingParameterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Leading model prefix ("bert.", "electra.", ...) used by `raw`, or "" when
/// the encoder tensors are stored unprefixed.
std::string detect_prefix(const TensorMap& raw);

/// Renames and reshapes checkpoint tensors into Weights. Linear layers are
/// stored as [out, in]; fused attention projections are split per head.
Weights map_checkpoint(const TensorMap& raw, const ModelConfig& config);

/// Inverse of map_checkpoint; emits unprefixed checkpoint names.
TensorMap unmap_checkpoint(const Weights& weights, const ModelConfig& config);

/// Checkpoint tensor names map_checkpoint reads, unprefixed, in table order.
std::vector<std::string> checkpoint_names(const ModelConfig& config);

/// fused [n_heads * d_head, d_model] (out, in) -> [n_heads, d_model, d_head]
Tensor split_heads_in(const Tensor& fused, std::size_t n_heads, std::size_t d_head);
/// fused [d_model, n_heads * d_head] (out, in) -> [n_heads, d_head, d_model]
Tensor split_heads_out(const Tensor& fused, std::size_t n_heads, std::size_t d_head);
Tensor fuse_heads_in(const Tensor& per_head);
Tensor fuse_heads_out(const Tensor& per_head);

Tensor transpose(const Tensor& m);

}  // namespace patchlens
