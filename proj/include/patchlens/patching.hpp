#pragma once

// Three-run activation patching over a baseline/perturbed pair:
//   1. baseline run, scored and cached
//   2. perturbed run, scored and cached
//   3. the lower-scoring input re-run with selected activations copied in
//      from the higher-scoring run's cache
// Effects are normalised so 0 means "no change" and 1 means "the re-run
// reaches the donor's score".

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "patchlens/encoder.hpp"
#include "patchlens/perturb.hpp"
#include "patchlens/ranking.hpp"

namespace patchlens {

/// |perturbed - baseline| at or below this marks a pair degenerate.
inline constexpr double kDegenerateTolerance = 1e-9;

enum class Side { baseline, perturbed };

std::string_view side_name(Side side);

/// Residual-stream or sub-layer output rows at the given positions.
struct BlockByPos {
  Site site = Site::resid_post;  // resid_pre | attn_out | mlp_out | resid_post
  std::size_t layer = 0;
  std::vector<std::size_t> positions;
};

/// One head's slice of a per-head site (`attn.hook_z` by default, or
/// q/k/v) at every position.
struct HeadAllPos {
  std::size_t layer = 0;
  std::size_t head = 0;
  Site site = Site::attn_z;
};

/// One head's slice at the given positions.
struct HeadByPos {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::vector<std::size_t> positions;
  Site site = Site::attn_z;
};

using PatchSpec = std::variant<BlockByPos, HeadAllPos, HeadByPos>;

std::vector<std::size_t> all_positions(std::size_t seq);

/// Normalised effect (patched - baseline) / (perturbed - baseline), or
/// nullopt when the pair is degenerate.
std::optional<double> effect(double baseline_score, double perturbed_score, double patched_score);

/// Scores and caches from the first two runs.
struct PairRun {
  float baseline_score = 0.0f;
  float perturbed_score = 0.0f;
  ActivationCache baseline_cache;
  ActivationCache perturbed_cache;
  std::optional<Tensor> query_rep;  // bi-encoder only

  /// The lower-scoring input; ties re-run the baseline.
  Side rerun() const { return perturbed_score < baseline_score ? Side::perturbed : Side::baseline; }
  Side donor() const { return rerun() == Side::baseline ? Side::perturbed : Side::baseline; }
  const ActivationCache& cache(Side side) const {
    return side == Side::baseline ? baseline_cache : perturbed_cache;
  }
  float score(Side side) const { return side == Side::baseline ? baseline_score : perturbed_score; }
  bool degenerate() const;
  /// Effect oriented so the re-run input is 0 and the donor is 1.
  std::optional<double> normalized(double patched_score) const;
};

struct RunTriple {
  float baseline_score = 0.0f;
  float perturbed_score = 0.0f;
  float patched_score = 0.0f;
  Side rerun = Side::baseline;
};

const TokenSeq& side_tokens(const PairedInput& pair, Side side);

PairRun run_pair(const RankingModel& model, const PairedInput& pair);

/// Interventions that copy the spec'd slices from `donor` into a run of
/// length `seq`. Throws std::out_of_range on layer/head/position overflow
/// and std::invalid_argument on a donor recorded on a different length.
std::vector<Intervention> patch_interventions(const PatchSpec& spec, const ActivationCache& donor,
                                              const ModelConfig& config, std::size_t seq);

/// Re-runs `rerun` with activations overwritten from `donor`. For Dot the
/// query representation is recomputed when `query_rep` is null.
float run_patched(const RankingModel& model, const PairedInput& pair, const PatchSpec& spec,
                  const ActivationCache& donor, Side rerun, const Tensor* query_rep = nullptr);

/// Convenience: all three runs for one spec, donor/re-run chosen by score.
RunTriple run_three(const RankingModel& model, const PairedInput& pair, const PatchSpec& spec);

/// Grid of normalised effects plus raw patched scores.
struct EffectMatrix {
  std::string row_axis = "layer";
  std::string col_axis = "head";
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<double> values;          // rows * cols, row-major
  std::vector<double> patched_scores;  // rows * cols, row-major
  std::vector<std::size_t> counts;     // pairs contributing per cell
  std::size_t degenerate_count = 0;

  std::size_t rows() const noexcept { return row_labels.size(); }
  std::size_t cols() const noexcept { return col_labels.size(); }
  double value(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

struct PairPatchResult {
  std::string qid;
  std::string docid;
  float baseline_score = 0.0f;
  float perturbed_score = 0.0f;
  Side rerun = Side::baseline;
  bool degenerate = false;
  std::size_t patched_runs = 0;
  EffectMatrix matrix;  // empty when degenerate
};

/// One HeadAllPos run per (layer, head). `workers` > 1 runs cells on threads.
PairPatchResult patch_heads(const RankingModel& model, const PairedInput& pair, std::size_t workers = 1,
                            Site head_site = Site::attn_z);

/// One BlockByPos run per (layer, position) for a residual/sub-layer site.
PairPatchResult patch_blocks(const RankingModel& model, const PairedInput& pair, Site site,
                             std::size_t workers = 1);

/// Elementwise mean. Position axes are truncated to the shortest matrix.
EffectMatrix aggregate(std::span<const EffectMatrix> matrices);

}  // namespace patchlens
