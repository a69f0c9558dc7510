#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "patchlens/tokenizer.hpp"

namespace patchlens {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Qrel {
  std::string qid;
  std::string docid;
  int grade = 0;
  friend bool operator==(const Qrel&, const Qrel&) = default;
};

struct Dataset {
  std::map<std::string, std::string> queries;
  std::map<std::string, std::string> docs;
  std::vector<Qrel> qrels;
};

/// queries/docs: `id \t text`; qrels: TREC `qid 0 docid grade`.
Dataset load_dataset(const std::filesystem::path& queries, const std::filesystem::path& docs,
                     const std::filesystem::path& qrels);

/// Lowercased basic_split words with punctuation-only words dropped.
std::vector<std::string> split_terms(std::string_view text);

/// Distinct query terms in first-occurrence order, minus stopwords.
std::vector<std::string> query_terms(std::string_view query, const std::set<std::string>& stopwords = {});

/// Smoothed inverse document frequency: ln((N + 1) / (df + 1)) + 1.
class IdfTable {
 public:
  IdfTable() = default;
  IdfTable(std::unordered_map<std::string, std::size_t> df, std::size_t n_docs);

  /// Unseen terms take the df = 0 value.
  double idf(std::string_view term) const;
  std::size_t n_docs() const noexcept { return n_docs_; }
  std::size_t df(std::string_view term) const;
  std::size_t size() const noexcept { return df_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> df_;
  std::size_t n_docs_ = 0;
};

IdfTable compute_idf(std::span<const std::string> docs);
IdfTable compute_idf(const std::map<std::string, std::string>& docs);

/// A perturbed document plus the document-token positions of what was
/// inserted. Positions index `wordpiece(text)`.
struct PerturbResult {
  std::string text;
  std::vector<std::size_t> positions;
};

enum class InsertAt { start, end };

PerturbResult perturb_append(std::string_view doc, std::string_view text, const Vocab& vocab,
                             InsertAt where = InsertAt::end);

/// Uniformly random query term(s).
std::vector<std::string> tfc1_choose(std::string_view query, std::mt19937_64& rng,
                                     const std::set<std::string>& stopwords = {}, std::size_t n_terms = 1);
PerturbResult tfc1_append(std::string_view query, std::string_view doc, std::mt19937_64& rng, const Vocab& vocab,
                          const std::set<std::string>& stopwords = {}, std::size_t n_terms = 1);

/// Highest-idf query term; ties go to the lexicographically smallest term.
std::string tdc_choose(std::string_view query, const IdfTable& idf, const std::set<std::string>& stopwords = {});
PerturbResult tdc_append(std::string_view query, std::string_view doc, const IdfTable& idf, const Vocab& vocab,
                         const std::set<std::string>& stopwords = {});

/// What a perturbation may consult. `seed` is already specific to the pair.
struct PerturbContext {
  const Vocab* vocab = nullptr;
  const IdfTable* idf = nullptr;
  std::uint64_t seed = 0;
  /// Baseline token at insertion positions; -1 means the vocab's [PAD].
  TokenId filler = -1;
};

struct Perturbation {
  std::string name;
  std::function<PerturbResult(std::string_view query, std::string_view doc, const PerturbContext&)> transform;
};

Perturbation identity_perturbation();
Perturbation append_perturbation(std::string text, InsertAt where = InsertAt::end);
Perturbation tfc1_perturbation(std::set<std::string> stopwords = {}, std::size_t n_terms = 1);
Perturbation tdc_perturbation(std::set<std::string> stopwords = {});

/// Per-pair seed so results do not depend on processing order.
std::uint64_t pair_seed(std::uint64_t seed, std::string_view qid, std::string_view docid);

/// Grade-balanced sample: one slot per grade per round, highest grades
/// first, until n pairs are taken or every grade is exhausted. Within a
/// grade, items are chosen uniformly without replacement. Output keeps the
/// input order.
std::vector<Qrel> stratified_subsample(std::span<const Qrel> qrels, std::size_t n, std::uint64_t seed);

std::vector<Qrel> filter_grades(std::span<const Qrel> qrels, const std::set<int>& grades);

enum class Arch { dot, cat };

/// Baseline and perturbed inputs of equal length. Off the insertion
/// positions the two carry identical tokens; the baseline holds [PAD] at
/// each insertion position.
struct PairedInput {
  std::string qid;
  std::string docid;
  std::optional<TokenSeq> query;  // bi-encoder only
  TokenSeq baseline;
  TokenSeq perturbed;
  std::vector<std::size_t> insert_positions;
};

PairedInput make_pair(std::string qid, std::string docid, std::string_view query, std::string_view doc,
                      const Perturbation& perturbation, Arch arch, const Vocab& vocab, std::size_t max_len,
                      const PerturbContext& context);

std::vector<PairedInput> build_pairs(const Dataset& dataset, const Perturbation& perturbation, Arch arch,
                                     const Vocab& vocab, std::span<const Qrel> sample, std::size_t max_len,
                                     std::uint64_t seed, const IdfTable* idf = nullptr);

}  // namespace patchlens
