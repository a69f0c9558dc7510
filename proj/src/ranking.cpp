#include "patchlens/ranking.hpp"

#include <cmath>
#include <random>

#include "patchlens/checkpoint.hpp"
#include "patchlens/kernels.hpp"

namespace patchlens {

void ClassifierHead::validate(std::size_t d_model) const {
  if (weight.rank() != 2 || weight.dim(0) != d_model) {
    throw ShapeError("classifier weight must be [d_model, n_classes], got " + shape_to_string(weight.shape()));
  }
  const std::size_t n = weight.dim(1);
  if (n != 1 && n != 2) throw std::invalid_argument("classifier must have 1 or 2 classes, got " + std::to_string(n));
  if (bias.shape() != Shape{n}) throw ShapeError("classifier bias must be [" + std::to_string(n) + "]");
  if (relevant_class >= n) throw std::invalid_argument("relevant class index out of range");
}

const ModelConfig& config_of(const RankingModel& model) {
  return std::visit([](const auto& m) -> const ModelConfig& { return m.config; }, model);
}

Tensor pool(const Tensor& hidden, const TokenSeq& tokens, Pooling mode, TokenId pad_id) {
  if (hidden.rank() != 2 || hidden.dim(0) == 0) {
    throw ShapeError("pool: expected non-empty [seq, d_model], got " + shape_to_string(hidden.shape()));
  }
  if (tokens.size() != hidden.dim(0)) throw ShapeError("pool: token count does not match hidden rows");
  const std::size_t d = hidden.dim(1);
  Tensor out({d});
  if (mode == Pooling::cls) {
    std::copy(hidden.row(0).begin(), hidden.row(0).end(), out.data().begin());
    return out;
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens.ids[i] == pad_id) continue;
    kernels::add(hidden.row(i), out.data());
    ++count;
  }
  if (count == 0) throw std::invalid_argument("pool: mean pooling over an all-pad sequence");
  kernels::scale(1.0f / static_cast<float>(count), out.data());
  return out;
}

float similarity(std::span<const float> a, std::span<const float> b, Similarity kind) {
  if (a.size() != b.size()) throw ShapeError("similarity: representation widths differ");
  const float d = kernels::dot(a, b);
  if (kind == Similarity::dot) return d;
  const float na = std::sqrt(kernels::dot(a, a));
  const float nb = std::sqrt(kernels::dot(b, b));
  return na > 0.0f && nb > 0.0f ? d / (na * nb) : 0.0f;
}

float classifier_score(const ClassifierHead& head, const Tensor& pooled) {
  const std::size_t n = head.n_classes();
  const std::size_t d = pooled.numel();
  float logits[2] = {head.bias[0], n > 1 ? head.bias[1] : 0.0f};
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < d; ++i) logits[c] += head.weight.at(i, c) * pooled[i];
  }
  if (n == 1) return logits[0];
  return logits[head.relevant_class] - logits[1 - head.relevant_class];
}

Tensor encode_query(const DotModel& model, const TokenSeq& query) {
  const Tensor hidden = forward(query, *model.weights, model.config);
  return pool(hidden, query, model.config.pooling, model.config.pad_id);
}

float score_dot(const DotModel& model, const TokenSeq& query, const TokenSeq& doc,
                std::span<const Intervention> doc_interventions) {
  const Tensor q = encode_query(model, query);
  return score_side(RankingModel{model}, &q, doc, doc_interventions);
}

float score_cat(const CatModel& model, const TokenSeq& pair, std::span<const Intervention> interventions) {
  return score_side(RankingModel{model}, nullptr, pair, interventions);
}

namespace {

float finish(const RankingModel& model, const Tensor* query_rep, const Tensor& hidden, const TokenSeq& side) {
  const ModelConfig& c = config_of(model);
  const Tensor pooled = pool(hidden, side, c.pooling, c.pad_id);
  if (const auto* dot = std::get_if<DotModel>(&model)) {
    if (!query_rep) throw std::invalid_argument("bi-encoder scoring needs a query representation");
    return similarity(query_rep->data(), pooled.data(), dot->similarity);
  }
  return classifier_score(std::get<CatModel>(model).head, pooled);
}

const Weights& weights_of(const RankingModel& model) {
  return std::visit([](const auto& m) -> const Weights& { return *m.weights; }, model);
}

}  // namespace

SideScore score_side_with_cache(const RankingModel& model, const Tensor* query_rep, const TokenSeq& side) {
  CachedRun run = run_with_cache(side, weights_of(model), config_of(model));
  return SideScore{finish(model, query_rep, run.hidden, side), std::move(run.cache)};
}

float score_side(const RankingModel& model, const Tensor* query_rep, const TokenSeq& side,
                 std::span<const Intervention> interventions) {
  const Tensor hidden = forward(side, weights_of(model), config_of(model), interventions);
  return finish(model, query_rep, hidden, side);
}

ClassifierHead random_classifier(std::size_t d_model, std::size_t n_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  ClassifierHead head;
  head.weight = Tensor({d_model, n_classes});
  head.bias = Tensor({n_classes});
  for (float& v : head.weight.data()) v = normal(rng);
  for (float& v : head.bias.data()) v = normal(rng);
  head.relevant_class = n_classes - 1;
  return head;
}

ClassifierHead map_classifier(const TensorMap& raw, std::size_t d_model, std::size_t relevant_class) {
  auto find = [&](const char* name) -> const Tensor& {
    auto it = raw.find(name);
    if (it == raw.end()) throw MissingParameterError(std::string("checkpoint is missing parameter '") + name + "'");
    return it->second;
  };
  ClassifierHead head;
  head.weight = transpose(find("classifier.weight"));
  head.bias = find("classifier.bias");
  head.relevant_class = relevant_class;
  head.validate(d_model);
  return head;
}

}  // namespace patchlens
