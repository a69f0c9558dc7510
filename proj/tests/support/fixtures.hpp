#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "patchlens/encoder.hpp"
#include "patchlens/perturb.hpp"
#include "patchlens/ranking.hpp"

namespace fx {

/// Specials, a few dozen whole words, and some "##" continuations.
const std::vector<std::string>& toy_tokens();
patchlens::Vocab toy_vocab();
const std::vector<std::string>& toy_words();  // whole-word entries only

patchlens::ModelConfig tiny_config(std::size_t vocab_size, std::size_t layers = 2, std::size_t heads = 2,
                                   std::size_t d_model = 16);
/// n_layers <= 3, d_model <= 32, n_ctx >= 16.
patchlens::ModelConfig random_config(std::mt19937_64& rng, std::size_t vocab_size);

/// [CLS] w... [SEP] with optional trailing pads, random segment split.
patchlens::TokenSeq random_tokens(std::mt19937_64& rng, const patchlens::ModelConfig& c, std::size_t seq,
                                  std::size_t pads = 0);

std::string random_text(std::mt19937_64& rng, std::size_t words);

patchlens::DotModel dot_model(const patchlens::ModelConfig& c, std::uint64_t seed,
                              patchlens::Similarity sim = patchlens::Similarity::dot);
patchlens::CatModel cat_model(const patchlens::ModelConfig& c, std::uint64_t seed, std::size_t n_classes = 1);

/// Random query/doc pair run through make_pair with the given perturbation.
patchlens::PairedInput random_pair(std::mt19937_64& rng, const patchlens::Perturbation& p, patchlens::Arch arch,
                                   const patchlens::Vocab& vocab, std::size_t max_len,
                                   const patchlens::IdfTable* idf = nullptr);

/// safetensors bytes assembled by hand: 8-byte length, header, raw f32
/// payload, then `extra_bytes` zeros.
std::vector<std::uint8_t> safetensors_bytes(const std::string& header, const std::vector<float>& payload,
                                            std::size_t extra_bytes = 0);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

/// Writes vocab.txt, queries.tsv, docs.tsv, qrels.txt into `dir`: `n_queries`
/// queries with `docs_per_query` judged docs each, grades 0..3.
void write_corpus(const std::filesystem::path& dir, std::size_t n_queries, std::size_t docs_per_query,
                  std::uint64_t seed);

}  // namespace fx
