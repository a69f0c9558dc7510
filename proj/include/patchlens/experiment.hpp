#pragma once

// Config-driven experiment runner behind the `patchlens` CLI. The JSON
// schema is documented in docs/config.md; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "patchlens/patching.hpp"
#include "patchlens/perturb.hpp"
#include "patchlens/ranking.hpp"

namespace patchlens {

/// Invalid or missing configuration; the message starts with the field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelSpec {
  Arch arch = Arch::cat;
  std::optional<std::filesystem::path> weights;
  std::uint64_t seed = 0;
  ModelConfig config;
  bool vocab_size_given = false;
  Similarity similarity = Similarity::dot;
  std::optional<std::size_t> n_classes;       // random heads default to 1; checkpoints decide
  std::optional<std::size_t> relevant_class;  // default: last class
};

struct DatasetSpec {
  std::filesystem::path queries;
  std::filesystem::path docs;
  std::filesystem::path qrels;
};

struct PerturbationSpec {
  std::string kind;  // identity | append | prepend | tfc1 | tdc
  std::string text;
  std::size_t n_terms = 1;
  std::set<std::string> stopwords;
  std::uint64_t seed = 0;
  std::string filler = "[PAD]";
};

struct SamplingSpec {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::optional<std::set<int>> grades;
};

enum class PatchTarget { heads, blocks };

struct PatchSpecConfig {
  PatchTarget target = PatchTarget::heads;
  Site site = Site::resid_post;   // blocks
  Site head_site = Site::attn_z;  // heads
  std::size_t workers = 1;        // patched runs inside one pair
};

struct ExperimentConfig {
  ModelSpec model;
  std::optional<std::filesystem::path> vocab;
  std::optional<DatasetSpec> dataset;
  std::optional<PerturbationSpec> perturbation;
  SamplingSpec sampling;
  PatchSpecConfig patch;
  std::optional<std::size_t> max_len;
  std::filesystem::path output_dir = "out";
  std::size_t workers = 1;  // pairs processed concurrently
  nlohmann::json source;    // as read, for hashing

  /// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Everything a scoring or patching run needs, loaded and validated.
struct Experiment {
  ExperimentConfig config;
  Vocab vocab;
  Dataset dataset;
  IdfTable idf;
  Perturbation perturbation;
  RankingModel model;
  std::size_t max_len = 0;
  std::vector<Qrel> sample;
};

/// Throws ConfigError for missing files or fields, other exceptions for
/// malformed inputs.
Experiment prepare_experiment(const ExperimentConfig& config);

RankingModel build_model(const ModelSpec& spec, const Vocab* vocab);

/// Pairs in sample order; entry i is empty with `error` set when the pair
/// could not be built.
struct PairSlot {
  std::optional<PairedInput> pair;
  std::string error;
};
std::vector<PairSlot> build_pair_slots(const Experiment& exp);

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

/// Writes scores.tsv (`qid docid baseline_score perturbed_score`) and
/// score_manifest.json.
int cmd_score(const ExperimentConfig& config, std::ostream& log);

/// Writes pair_<qid>_<docid>.json, aggregate.csv, aggregate.json and
/// manifest.json into the output directory.
int cmd_patch(const ExperimentConfig& config, std::ostream& log);

/// Renders a matrix JSON file to an SVG heatmap.
int cmd_plot(const std::filesystem::path& matrix, const std::filesystem::path& svg, std::ostream& log);

/// Prints every hook name, one per line.
int cmd_hooks(const ExperimentConfig& config, std::ostream& out);

std::string sanitize_id(std::string_view id);

/// For checks on real checkpoints: layers whose mean |effect| across the
/// columns is largest, and whether that layer falls in the final third.
struct LayerDominance {
  std::size_t strongest_layer = 0;
  std::size_t final_third_start = 0;
  bool in_final_third = false;
  std::vector<double> layer_means;
};
LayerDominance late_layer_dominance(const EffectMatrix& m);

}  // namespace patchlens
