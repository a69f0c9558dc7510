#include "patchlens/checkpoint.hpp"

namespace patchlens {
namespace {

std::string layer_prefix(std::size_t l) { return "encoder.layer." + std::to_string(l) + "."; }

class RawReader {
 public:
  RawReader(const TensorMap& raw, std::string prefix) : raw_(raw), prefix_(std::move(prefix)) {}

  const Tensor& get(const std::string& name, const Shape& shape) const {
    auto it = raw_.find(prefix_ + name);
    if (it == raw_.end()) throw MissingParameterError("checkpoint is missing parameter '" + prefix_ + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("checkpoint parameter '" + prefix_ + name + "' has shape " +
                       shape_to_string(it->second.shape()) + ", config expects " + shape_to_string(shape));
    }
    return it->second;
  }

 private:
  const TensorMap& raw_;
  std::string prefix_;
};

}  // namespace

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_to_string(m.shape()));
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) t.at(j, i) = m.at(i, j);
  }
  return t;
}

Tensor split_heads_in(const Tensor& fused, std::size_t n_heads, std::size_t d_head) {
  const std::size_t d_model = fused.dim(1);
  if (fused.dim(0) != n_heads * d_head) throw ShapeError("split_heads_in: " + shape_to_string(fused.shape()));
  Tensor out({n_heads, d_model, d_head});
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < d_model; ++i) {
      for (std::size_t e = 0; e < d_head; ++e) out.at(h, i, e) = fused.at(h * d_head + e, i);
    }
  }
  return out;
}

Tensor fuse_heads_in(const Tensor& per_head) {
  const std::size_t n_heads = per_head.dim(0), d_model = per_head.dim(1), d_head = per_head.dim(2);
  Tensor fused({n_heads * d_head, d_model});
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < d_model; ++i) {
      for (std::size_t e = 0; e < d_head; ++e) fused.at(h * d_head + e, i) = per_head.at(h, i, e);
    }
  }
  return fused;
}

Tensor split_heads_out(const Tensor& fused, std::size_t n_heads, std::size_t d_head) {
  const std::size_t d_model = fused.dim(0);
  if (fused.dim(1) != n_heads * d_head) throw ShapeError("split_heads_out: " + shape_to_string(fused.shape()));
  Tensor out({n_heads, d_head, d_model});
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t e = 0; e < d_head; ++e) {
      for (std::size_t o = 0; o < d_model; ++o) out.at(h, e, o) = fused.at(o, h * d_head + e);
    }
  }
  return out;
}

Tensor fuse_heads_out(const Tensor& per_head) {
  const std::size_t n_heads = per_head.dim(0), d_head = per_head.dim(1), d_model = per_head.dim(2);
  Tensor fused({d_model, n_heads * d_head});
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t e = 0; e < d_head; ++e) {
      for (std::size_t o = 0; o < d_model; ++o) fused.at(o, h * d_head + e) = per_head.at(h, e, o);
    }
  }
  return fused;
}

std::string detect_prefix(const TensorMap& raw) {
  constexpr std::string_view anchor = "embeddings.word_embeddings.weight";
  for (const auto& [name, t] : raw) {
    if (name.size() >= anchor.size() && name.ends_with(anchor)) return name.substr(0, name.size() - anchor.size());
  }
  throw MissingParameterError("checkpoint has no 'embeddings.word_embeddings.weight' tensor");
}

std::vector<std::string> checkpoint_names(const ModelConfig& c) {
  std::vector<std::string> names = {
      "embeddings.word_embeddings.weight", "embeddings.position_embeddings.weight",
      "embeddings.token_type_embeddings.weight", "embeddings.LayerNorm.weight", "embeddings.LayerNorm.bias"};
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* n : {"attention.self.query.weight", "attention.self.query.bias", "attention.self.key.weight",
                          "attention.self.key.bias", "attention.self.value.weight", "attention.self.value.bias",
                          "attention.output.dense.weight", "attention.output.dense.bias",
                          "attention.output.LayerNorm.weight", "attention.output.LayerNorm.bias",
                          "intermediate.dense.weight", "intermediate.dense.bias", "output.dense.weight",
                          "output.dense.bias", "output.LayerNorm.weight", "output.LayerNorm.bias"}) {
      names.push_back(p + n);
    }
  }
  return names;
}

Weights map_checkpoint(const TensorMap& raw, const ModelConfig& c) {
  c.validate();
  const RawReader r(raw, detect_prefix(raw));
  const std::size_t d = c.d_model, h = c.n_heads, dh = c.d_head;
  Weights w;
  w.token_embed = r.get("embeddings.word_embeddings.weight", {c.vocab_size, d});
  w.pos_embed = r.get("embeddings.position_embeddings.weight", {c.n_ctx, d});
  w.type_embed = r.get("embeddings.token_type_embeddings.weight", {c.type_vocab_size, d});
  w.ln_embed_gamma = r.get("embeddings.LayerNorm.weight", {d});
  w.ln_embed_beta = r.get("embeddings.LayerNorm.bias", {d});
  w.layers.resize(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    auto& lw = w.layers[l];
    lw.w_q = split_heads_in(r.get(p + "attention.self.query.weight", {d, d}), h, dh);
    lw.w_k = split_heads_in(r.get(p + "attention.self.key.weight", {d, d}), h, dh);
    lw.w_v = split_heads_in(r.get(p + "attention.self.value.weight", {d, d}), h, dh);
    lw.b_q = r.get(p + "attention.self.query.bias", {d}).reshaped({h, dh});
    lw.b_k = r.get(p + "attention.self.key.bias", {d}).reshaped({h, dh});
    lw.b_v = r.get(p + "attention.self.value.bias", {d}).reshaped({h, dh});
    lw.w_o = split_heads_out(r.get(p + "attention.output.dense.weight", {d, d}), h, dh);
    lw.b_o = r.get(p + "attention.output.dense.bias", {d});
    lw.ln_attn_gamma = r.get(p + "attention.output.LayerNorm.weight", {d});
    lw.ln_attn_beta = r.get(p + "attention.output.LayerNorm.bias", {d});
    lw.w_in = transpose(r.get(p + "intermediate.dense.weight", {c.d_mlp, d}));
    lw.b_in = r.get(p + "intermediate.dense.bias", {c.d_mlp});
    lw.w_out = transpose(r.get(p + "output.dense.weight", {d, c.d_mlp}));
    lw.b_out = r.get(p + "output.dense.bias", {d});
    lw.ln_mlp_gamma = r.get(p + "output.LayerNorm.weight", {d});
    lw.ln_mlp_beta = r.get(p + "output.LayerNorm.bias", {d});
  }
  return w;
}

TensorMap unmap_checkpoint(const Weights& w, const ModelConfig& c) {
  w.validate(c);
  const std::size_t d = c.d_model;
  TensorMap raw;
  raw["embeddings.word_embeddings.weight"] = w.token_embed;
  raw["embeddings.position_embeddings.weight"] = w.pos_embed;
  raw["embeddings.token_type_embeddings.weight"] = w.type_embed;
  raw["embeddings.LayerNorm.weight"] = w.ln_embed_gamma;
  raw["embeddings.LayerNorm.bias"] = w.ln_embed_beta;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    const auto& lw = w.layers[l];
    raw[p + "attention.self.query.weight"] = fuse_heads_in(lw.w_q);
    raw[p + "attention.self.key.weight"] = fuse_heads_in(lw.w_k);
    raw[p + "attention.self.value.weight"] = fuse_heads_in(lw.w_v);
    raw[p + "attention.self.query.bias"] = lw.b_q.reshaped({d});
    raw[p + "attention.self.key.bias"] = lw.b_k.reshaped({d});
    raw[p + "attention.self.value.bias"] = lw.b_v.reshaped({d});
    raw[p + "attention.output.dense.weight"] = fuse_heads_out(lw.w_o);
    raw[p + "attention.output.dense.bias"] = lw.b_o;
    raw[p + "attention.output.LayerNorm.weight"] = lw.ln_attn_gamma;
    raw[p + "attention.output.LayerNorm.bias"] = lw.ln_attn_beta;
    raw[p + "intermediate.dense.weight"] = transpose(lw.w_in);
    raw[p + "intermediate.dense.bias"] = lw.b_in;
    raw[p + "output.dense.weight"] = transpose(lw.w_out);
    raw[p + "output.dense.bias"] = lw.b_out;
    raw[p + "output.LayerNorm.weight"] = lw.ln_mlp_gamma;
    raw[p + "output.LayerNorm.bias"] = lw.ln_mlp_beta;
  }
  return raw;
}

}  // namespace patchlens
