#include "patchlens/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "patchlens/kernels.hpp"

namespace patchlens {
namespace {

void expect_shape(const Tensor& t, const Shape& shape, const std::string& what) {
  if (t.shape() != shape) {
    throw ShapeError(what + ": expected " + shape_to_string(shape) + ", got " + shape_to_string(t.shape()));
  }
}

// Applies every intervention registered for `hook` and records the result.
class HookRunner {
 public:
  HookRunner(const ModelConfig& config, std::size_t seq, std::span<const Intervention> interventions,
             ActivationCache* cache)
      : config_(config), seq_(seq), interventions_(interventions), cache_(cache) {
    for (const auto& iv : interventions_) {
      if (iv.hook.site != Site::embed_out && iv.hook.layer >= config.n_layers) {
        throw std::invalid_argument("unknown hook name '" + iv.hook.str() + "' for a " +
                                    std::to_string(config.n_layers) + "-layer model");
      }
      if (const auto* t = std::get_if<Tensor>(&iv.action)) {
        expect_shape(*t, iv.hook.expected_shape(config, seq), "replacement for " + iv.hook.str());
      }
    }
  }

  void operator()(const HookName& hook, Tensor& value) const {
    for (const auto& iv : interventions_) {
      if (!(iv.hook == hook)) continue;
      if (const auto* t = std::get_if<Tensor>(&iv.action)) {
        value = *t;
      } else {
        std::get<HookEdit>(iv.action)(value);
        expect_shape(value, hook.expected_shape(config_, seq_), "edit of " + hook.str());
      }
    }
    if (cache_) cache_->activations.insert_or_assign(hook, value);
  }

 private:
  const ModelConfig& config_;
  std::size_t seq_;
  std::span<const Intervention> interventions_;
  ActivationCache* cache_;
};

// x[seq, d_model] -> [seq, n_heads, d_head] through per-head projections.
Tensor project_heads(const Tensor& x, const Tensor& w, const Tensor& b, const ModelConfig& c) {
  const std::size_t seq = x.dim(0);
  Tensor out({seq, c.n_heads, c.d_head});
  const auto& kt = kernels::active();
  for (std::size_t i = 0; i < seq; ++i) {
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      float* dst = &out.at(i, h, 0);
      const float* bias = b.data().data() + h * c.d_head;
      for (std::size_t e = 0; e < c.d_head; ++e) dst[e] = bias[e];
      const float* wh = w.data().data() + h * c.d_model * c.d_head;
      for (std::size_t t = 0; t < c.d_model; ++t) kt.axpy(x.at(i, t), wh + t * c.d_head, dst, c.d_head);
    }
  }
  return out;
}

Tensor attention_pattern(const Tensor& q, const Tensor& k, const TokenSeq& tokens, TokenId pad_id,
                         const ModelConfig& c) {
  const std::size_t seq = q.dim(0);
  const float scale = 1.0f / std::sqrt(static_cast<float>(c.d_head));
  const auto& kt = kernels::active();
  Tensor pattern({c.n_heads, seq, seq});
  std::vector<float> scores(seq);
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    for (std::size_t i = 0; i < seq; ++i) {
      std::size_t valid = 0;
      float m = -INFINITY;
      for (std::size_t j = 0; j < seq; ++j) {
        if (tokens.ids[j] == pad_id) continue;
        scores[j] = kt.dot(q.ptr(i, h, 0), k.ptr(j, h, 0), c.d_head) * scale;
        m = std::max(m, scores[j]);
        ++valid;
      }
      float* row = &pattern.at(h, i, 0);
      if (valid == 0) continue;  // no attendable keys: row stays zero
      float sum = 0.0f;
      for (std::size_t j = 0; j < seq; ++j) {
        if (tokens.ids[j] == pad_id) continue;
        row[j] = std::exp(scores[j] - m);
        sum += row[j];
      }
      kt.scale(1.0f / sum, row, seq);
    }
  }
  return pattern;
}

// z[i, h, :] = sum_j pattern[h, i, j] * v[j, h, :]
Tensor attend(const Tensor& pattern, const Tensor& v, const ModelConfig& c) {
  const std::size_t seq = v.dim(0);
  Tensor z({seq, c.n_heads, c.d_head});
  const auto& kt = kernels::active();
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    for (std::size_t i = 0; i < seq; ++i) {
      float* dst = &z.at(i, h, 0);
      for (std::size_t j = 0; j < seq; ++j) {
        const float p = pattern.at(h, i, j);
        if (p != 0.0f) kt.axpy(p, v.ptr(j, h, 0), dst, c.d_head);
      }
    }
  }
  return z;
}

Tensor run(const TokenSeq& tokens, const Weights& w, const ModelConfig& c, std::span<const Intervention> interventions,
           ActivationCache* cache) {
  const std::size_t seq = tokens.size();
  if (seq == 0) throw std::invalid_argument("forward: empty token sequence");
  if (seq > c.n_ctx) {
    throw std::invalid_argument("forward: sequence of " + std::to_string(seq) + " tokens exceeds n_ctx " +
                                std::to_string(c.n_ctx));
  }
  if (tokens.type_ids.size() != seq) throw std::invalid_argument("forward: ids and type_ids differ in length");
  if (w.layers.size() != c.n_layers) throw ShapeError("forward: weights have wrong layer count");
  if (cache) cache->tokens = tokens;
  const HookRunner hook(c, seq, interventions, cache);
  const auto& kt = kernels::active();

  Tensor x({seq, c.d_model});
  for (std::size_t i = 0; i < seq; ++i) {
    const auto id = tokens.ids[i];
    const auto type = tokens.type_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw std::out_of_range("forward: token id " + std::to_string(id) + " outside vocab of " +
                              std::to_string(c.vocab_size));
    }
    if (type < 0 || static_cast<std::size_t>(type) >= c.type_vocab_size) {
      throw std::out_of_range("forward: type id " + std::to_string(type) + " out of range");
    }
    auto dst = x.row(i);
    kt.add(w.token_embed.row(static_cast<std::size_t>(id)).data(), dst.data(), c.d_model);
    kt.add(w.pos_embed.row(i).data(), dst.data(), c.d_model);
    kt.add(w.type_embed.row(static_cast<std::size_t>(type)).data(), dst.data(), c.d_model);
  }
  x = layer_norm(x, w.ln_embed_gamma, w.ln_embed_beta, c.ln_eps);
  hook(HookName::embed(), x);

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    hook(HookName::block(l, Site::resid_pre), x);

    Tensor q = project_heads(x, lw.w_q, lw.b_q, c);
    hook(HookName::block(l, Site::attn_q), q);
    Tensor k = project_heads(x, lw.w_k, lw.b_k, c);
    hook(HookName::block(l, Site::attn_k), k);
    Tensor v = project_heads(x, lw.w_v, lw.b_v, c);
    hook(HookName::block(l, Site::attn_v), v);

    Tensor pattern = attention_pattern(q, k, tokens, c.pad_id, c);
    hook(HookName::block(l, Site::attn_pattern), pattern);
    Tensor z = attend(pattern, v, c);
    hook(HookName::block(l, Site::attn_z), z);

    Tensor attn_out = linear(z.reshaped({seq, c.n_heads * c.d_head}),
                             lw.w_o.reshaped({c.n_heads * c.d_head, c.d_model}), lw.b_o);
    hook(HookName::block(l, Site::attn_out), attn_out);

    Tensor mid = layer_norm(add(x, attn_out), lw.ln_attn_gamma, lw.ln_attn_beta, c.ln_eps);
    hook(HookName::block(l, Site::resid_mid), mid);

    Tensor mlp_out = linear(gelu(linear(mid, lw.w_in, lw.b_in), c.gelu), lw.w_out, lw.b_out);
    hook(HookName::block(l, Site::mlp_out), mlp_out);

    x = layer_norm(add(mid, mlp_out), lw.ln_mlp_gamma, lw.ln_mlp_beta, c.ln_eps);
    hook(HookName::block(l, Site::resid_post), x);
  }
  return x;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (n_layers == 0) fail("n_layers must be positive");
  if (n_heads == 0 || d_head == 0) fail("n_heads and d_head must be positive");
  if (n_heads * d_head != d_model) fail("n_heads * d_head must equal d_model");
  if (d_mlp == 0) fail("d_mlp must be positive");
  if (n_ctx < 2) fail("n_ctx must be at least 2");
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (type_vocab_size == 0) fail("type_vocab_size must be positive");
  if (!(ln_eps > 0.0f)) fail("ln_eps must be positive");
  if (pad_id < 0 || static_cast<std::size_t>(pad_id) >= vocab_size) fail("pad_id outside vocab");
}

void Weights::validate(const ModelConfig& c) const {
  const std::size_t d = c.d_model, h = c.n_heads, dh = c.d_head;
  expect_shape(token_embed, {c.vocab_size, d}, "token_embed");
  expect_shape(pos_embed, {c.n_ctx, d}, "pos_embed");
  expect_shape(type_embed, {c.type_vocab_size, d}, "type_embed");
  expect_shape(ln_embed_gamma, {d}, "ln_embed_gamma");
  expect_shape(ln_embed_beta, {d}, "ln_embed_beta");
  if (layers.size() != c.n_layers) {
    throw ShapeError("weights have " + std::to_string(layers.size()) + " layers, config says " +
                     std::to_string(c.n_layers));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lw = layers[l];
    const std::string p = "layer " + std::to_string(l) + " ";
    expect_shape(lw.w_q, {h, d, dh}, p + "w_q");
    expect_shape(lw.w_k, {h, d, dh}, p + "w_k");
    expect_shape(lw.w_v, {h, d, dh}, p + "w_v");
    expect_shape(lw.b_q, {h, dh}, p + "b_q");
    expect_shape(lw.b_k, {h, dh}, p + "b_k");
    expect_shape(lw.b_v, {h, dh}, p + "b_v");
    expect_shape(lw.w_o, {h, dh, d}, p + "w_o");
    expect_shape(lw.b_o, {d}, p + "b_o");
    expect_shape(lw.ln_attn_gamma, {d}, p + "ln_attn_gamma");
    expect_shape(lw.ln_attn_beta, {d}, p + "ln_attn_beta");
    expect_shape(lw.w_in, {d, c.d_mlp}, p + "w_in");
    expect_shape(lw.b_in, {c.d_mlp}, p + "b_in");
    expect_shape(lw.w_out, {c.d_mlp, d}, p + "w_out");
    expect_shape(lw.b_out, {d}, p + "b_out");
    expect_shape(lw.ln_mlp_gamma, {d}, p + "ln_mlp_gamma");
    expect_shape(lw.ln_mlp_beta, {d}, p + "ln_mlp_beta");
  }
}

Weights random_init(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  auto draw = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (float& v : t.data()) v = normal(rng);
    return t;
  };
  auto ones = [](std::size_t n) { return Tensor::full({n}, 1.0f); };
  auto zeros = [](std::size_t n) { return Tensor::zeros({n}); };

  const std::size_t d = c.d_model, h = c.n_heads, dh = c.d_head;
  Weights w;
  w.token_embed = draw({c.vocab_size, d});
  w.pos_embed = draw({c.n_ctx, d});
  w.type_embed = draw({c.type_vocab_size, d});
  w.ln_embed_gamma = ones(d);
  w.ln_embed_beta = zeros(d);
  w.layers.resize(c.n_layers);
  for (auto& lw : w.layers) {
    lw.w_q = draw({h, d, dh});
    lw.w_k = draw({h, d, dh});
    lw.w_v = draw({h, d, dh});
    lw.b_q = draw({h, dh});
    lw.b_k = draw({h, dh});
    lw.b_v = draw({h, dh});
    lw.w_o = draw({h, dh, d});
    lw.b_o = draw({d});
    lw.ln_attn_gamma = ones(d);
    lw.ln_attn_beta = zeros(d);
    lw.w_in = draw({d, c.d_mlp});
    lw.b_in = draw({c.d_mlp});
    lw.w_out = draw({c.d_mlp, d});
    lw.b_out = draw({d});
    lw.ln_mlp_gamma = ones(d);
    lw.ln_mlp_beta = zeros(d);
  }
  return w;
}

const Tensor& ActivationCache::at(const HookName& hook) const {
  auto it = activations.find(hook);
  if (it == activations.end()) throw std::out_of_range("activation cache has no entry for " + hook.str());
  return it->second;
}

Tensor forward(const TokenSeq& tokens, const Weights& weights, const ModelConfig& config,
               std::span<const Intervention> interventions) {
  return run(tokens, weights, config, interventions, nullptr);
}

CachedRun run_with_cache(const TokenSeq& tokens, const Weights& weights, const ModelConfig& config,
                         std::span<const Intervention> interventions) {
  CachedRun out;
  out.hidden = run(tokens, weights, config, interventions, &out.cache);
  return out;
}

}  // namespace patchlens
