#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "patchlens/hooks.hpp"
#include "patchlens/numerics.hpp"
#include "patchlens/tensor.hpp"
#include "patchlens/tokenizer.hpp"

namespace patchlens {

enum class Pooling { cls, mean };

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t d_head = 8;
  std::size_t d_mlp = 64;
  std::size_t vocab_size = 32;
  std::size_t n_ctx = 32;
  std::size_t type_vocab_size = 2;
  float ln_eps = 1e-12f;
  GeluVariant gelu = GeluVariant::erf;
  Pooling pooling = Pooling::cls;
  /// Keys holding this id are masked out of attention.
  TokenId pad_id = 0;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
};

struct LayerWeights {
  Tensor w_q, w_k, w_v;  // [n_heads, d_model, d_head]
  Tensor b_q, b_k, b_v;  // [n_heads, d_head]
  Tensor w_o;            // [n_heads, d_head, d_model]
  Tensor b_o;            // [d_model]
  Tensor ln_attn_gamma, ln_attn_beta;
  Tensor w_in;   // [d_model, d_mlp]
  Tensor b_in;   // [d_mlp]
  Tensor w_out;  // [d_mlp, d_model]
  Tensor b_out;  // [d_model]
  Tensor ln_mlp_gamma, ln_mlp_beta;
};

struct Weights {
  Tensor token_embed;  // [vocab_size, d_model]
  Tensor pos_embed;    // [n_ctx, d_model]
  Tensor type_embed;   // [type_vocab_size, d_model]
  Tensor ln_embed_gamma, ln_embed_beta;
  std::vector<LayerWeights> layers;

  /// Throws ShapeError on the first tensor inconsistent with `config`.
  void validate(const ModelConfig& config) const;
};

/// Encoder parameters drawn from N(0, 0.02^2); layer-norm gains 1, shifts 0.
Weights random_init(const ModelConfig& config, std::uint64_t seed);

using HookEdit = std::function<void(Tensor&)>;

/// Overwrites or edits one hook's activation as soon as it is computed.
struct Intervention {
  HookName hook;
  std::variant<Tensor, HookEdit> action;

  static Intervention replace(HookName hook, Tensor value) { return {hook, std::move(value)}; }
  static Intervention edit(HookName hook, HookEdit fn) { return {hook, std::move(fn)}; }
};

/// Every hook's activation from one forward pass, keyed by hook.
struct ActivationCache {
  TokenSeq tokens;
  std::map<HookName, Tensor> activations;

  const Tensor& at(const HookName& hook) const;
  const Tensor& at(std::string_view name) const { return at(HookName::parse(name)); }
  bool contains(const HookName& hook) const { return activations.contains(hook); }
  std::size_t size() const noexcept { return activations.size(); }
};

/// Post-layer-norm BERT encoder pass returning final hidden states
/// [seq, d_model]. Interventions run at their site in list order and affect
/// everything downstream.
Tensor forward(const TokenSeq& tokens, const Weights& weights, const ModelConfig& config,
               std::span<const Intervention> interventions = {});

struct CachedRun {
  Tensor hidden;
  ActivationCache cache;
};

CachedRun run_with_cache(const TokenSeq& tokens, const Weights& weights, const ModelConfig& config,
                         std::span<const Intervention> interventions = {});

}  // namespace patchlens
