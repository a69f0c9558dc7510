#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace patchlens {

using TokenId = std::int32_t;

class VocabError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Token table with resolved special ids. Ids are dense line numbers.
class Vocab {
 public:
  /// Builds from tokens in id order. Throws VocabError on duplicates or a
  /// missing special token.
  explicit Vocab(std::vector<std::string> tokens, std::string continuation_prefix = "##");

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  TokenId find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token) >= 0; }

  TokenId cls() const noexcept { return cls_; }
  TokenId sep() const noexcept { return sep_; }
  TokenId pad() const noexcept { return pad_; }
  TokenId unk() const noexcept { return unk_; }
  TokenId mask() const noexcept { return mask_; }
  const std::string& continuation_prefix() const noexcept { return prefix_; }
  std::size_t max_token_bytes() const noexcept { return max_token_bytes_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::string prefix_;
  std::size_t max_token_bytes_ = 0;
  TokenId cls_ = -1, sep_ = -1, pad_ = -1, unk_ = -1, mask_ = -1;
};

/// One token per line, id = zero-based line number.
Vocab load_vocab(const std::filesystem::path& path);

/// Encoder input: token ids plus segment ids. Attention validity is implied
/// by the pad id.
struct TokenSeq {
  std::vector<TokenId> ids;
  std::vector<TokenId> type_ids;

  std::size_t size() const noexcept { return ids.size(); }
  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

/// Lowercase, split on whitespace, and split ASCII punctuation off as
/// single-character words. Bytes >= 0x80 pass through unchanged.
std::vector<std::string> basic_split(std::string_view text);

/// Greedy longest-match subword pieces for one pre-split word. A word with
/// any unmatched remainder becomes a single [UNK].
std::vector<TokenId> wordpiece_word(std::string_view word, const Vocab& vocab);

/// basic_split followed by wordpiece_word on every word.
std::vector<TokenId> wordpiece(std::string_view text, const Vocab& vocab);

/// [CLS] q [SEP] d [SEP] from already-tokenised segments. The document is
/// truncated from the tail first; throws when the query alone cannot fit.
TokenSeq assemble_cat(std::span<const TokenId> query, std::span<const TokenId> doc, const Vocab& vocab,
                      std::size_t max_len);
/// [CLS] t [SEP], tail-truncated.
TokenSeq assemble_single(std::span<const TokenId> tokens, const Vocab& vocab, std::size_t max_len);

TokenSeq encode_cat(std::string_view query, std::string_view doc, const Vocab& vocab, std::size_t max_len);
TokenSeq encode_single(std::string_view text, const Vocab& vocab, std::size_t max_len);

/// Inserts `pad_id` into `baseline` at each of `insert_positions` (given in
/// the coordinates of the longer, perturbed sequence). Every other token
/// keeps the position it has in the perturbed sequence. Pads take the
/// segment id of the token that follows them (or precedes, at the end).
TokenSeq pad_align(const TokenSeq& baseline, std::span<const std::size_t> insert_positions, TokenId pad_id);

}  // namespace patchlens
