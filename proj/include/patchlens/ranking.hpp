#pragma once

#include <memory>
#include <span>
#include <variant>

#include "patchlens/encoder.hpp"
#include "patchlens/safetensors.hpp"

namespace patchlens {

enum class Similarity { dot, cosine };

/// Bi-encoder: query and document share one encoder; relevance is the
/// similarity of the pooled representations.
struct DotModel {
  std::shared_ptr<const Weights> weights;
  ModelConfig config;
  Similarity similarity = Similarity::dot;
};

/// Linear relevance head over the pooled joint representation.
struct ClassifierHead {
  Tensor weight;  // [d_model, n_classes]
  Tensor bias;    // [n_classes]
  std::size_t relevant_class = 0;

  std::size_t n_classes() const { return weight.rank() == 2 ? weight.dim(1) : 0; }
  /// n_classes in {1, 2}, relevant_class in range, shapes consistent.
  void validate(std::size_t d_model) const;
};

/// Cross-encoder over `[CLS] q [SEP] d [SEP]`.
struct CatModel {
  std::shared_ptr<const Weights> weights;
  ModelConfig config;
  ClassifierHead head;
};

using RankingModel = std::variant<DotModel, CatModel>;

const ModelConfig& config_of(const RankingModel& model);

/// cls: row 0; mean: average over non-pad rows.
Tensor pool(const Tensor& hidden, const TokenSeq& tokens, Pooling mode, TokenId pad_id);

float similarity(std::span<const float> a, std::span<const float> b, Similarity kind);

/// Single score: the logit for n_classes = 1, else logit[relevant] - logit[other].
float classifier_score(const ClassifierHead& head, const Tensor& pooled);

/// Pooled query representation; independent of any document-side patch.
Tensor encode_query(const DotModel& model, const TokenSeq& query);

float score_dot(const DotModel& model, const TokenSeq& query, const TokenSeq& doc,
                std::span<const Intervention> doc_interventions = {});
float score_cat(const CatModel& model, const TokenSeq& pair, std::span<const Intervention> interventions = {});

/// Scores one document-side input (the document for Dot, the joint sequence
/// for Cat). For Dot the query representation is supplied precomputed.
struct SideScore {
  float score = 0.0f;
  ActivationCache cache;
};
SideScore score_side_with_cache(const RankingModel& model, const Tensor* query_rep, const TokenSeq& side);
float score_side(const RankingModel& model, const Tensor* query_rep, const TokenSeq& side,
                 std::span<const Intervention> interventions);

ClassifierHead random_classifier(std::size_t d_model, std::size_t n_classes, std::uint64_t seed);

/// Reads `classifier.weight` [n_classes, d_model] and `classifier.bias`.
ClassifierHead map_classifier(const TensorMap& raw, std::size_t d_model, std::size_t relevant_class);

}  // namespace patchlens
