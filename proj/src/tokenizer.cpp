#include "patchlens/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace patchlens {
namespace {

// BERT-style limit: longer words are mapped straight to [UNK].
constexpr std::size_t kMaxWordBytes = 100;

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
bool is_ascii_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens, std::string continuation_prefix)
    : tokens_(std::move(tokens)), prefix_(std::move(continuation_prefix)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw VocabError("duplicate vocab token '" + tokens_[i] + "' at ids " + std::to_string(it->second) + " and " +
                       std::to_string(i));
    }
    max_token_bytes_ = std::max(max_token_bytes_, tokens_[i].size());
  }
  auto special = [&](const char* name) {
    const TokenId id = find(name);
    if (id < 0) throw VocabError(std::string("vocab is missing special token ") + name);
    return id;
  };
  cls_ = special("[CLS]");
  sep_ = special("[SEP]");
  pad_ = special("[PAD]");
  unk_ = special("[UNK]");
  mask_ = special("[MASK]");
}

TokenId Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabError("cannot open vocab file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(std::move(line));
  }
  return Vocab(std::move(tokens));
}

std::vector<std::string> basic_split(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_ascii_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      words.emplace_back(1, ch);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return words;
}

std::vector<TokenId> wordpiece_word(std::string_view word, const Vocab& vocab) {
  if (word.empty()) return {};
  if (word.size() > kMaxWordBytes) return {vocab.unk()};
  std::vector<TokenId> pieces;
  std::string candidate;
  std::size_t start = 0;
  while (start < word.size()) {
    const std::string_view prefix = start > 0 ? std::string_view(vocab.continuation_prefix()) : std::string_view();
    const std::size_t budget = vocab.max_token_bytes() > prefix.size() ? vocab.max_token_bytes() - prefix.size() : 0;
    std::size_t end = std::min(word.size(), start + budget);
    TokenId match = -1;
    for (; end > start; --end) {
      candidate.assign(prefix);
      candidate.append(word.substr(start, end - start));
      match = vocab.find(candidate);
      if (match >= 0) break;
    }
    if (match < 0) return {vocab.unk()};
    pieces.push_back(match);
    start = end;
  }
  return pieces;
}

std::vector<TokenId> wordpiece(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  for (const auto& word : basic_split(text)) {
    const auto pieces = wordpiece_word(word, vocab);
    ids.insert(ids.end(), pieces.begin(), pieces.end());
  }
  return ids;
}

TokenSeq assemble_cat(std::span<const TokenId> query, std::span<const TokenId> doc, const Vocab& vocab,
                      std::size_t max_len) {
  if (max_len < 4) throw std::invalid_argument("encode_cat: max_len must be at least 4");
  if (query.size() + 3 > max_len) {
    throw std::invalid_argument("encode_cat: query of " + std::to_string(query.size()) +
                                " tokens does not fit max_len " + std::to_string(max_len));
  }
  const std::size_t doc_len = std::min(doc.size(), max_len - query.size() - 3);
  TokenSeq seq;
  seq.ids.reserve(query.size() + doc_len + 3);
  seq.ids.push_back(vocab.cls());
  seq.ids.insert(seq.ids.end(), query.begin(), query.end());
  seq.ids.push_back(vocab.sep());
  seq.type_ids.assign(seq.ids.size(), 0);
  seq.ids.insert(seq.ids.end(), doc.begin(), doc.begin() + static_cast<std::ptrdiff_t>(doc_len));
  seq.ids.push_back(vocab.sep());
  seq.type_ids.resize(seq.ids.size(), 1);
  return seq;
}

TokenSeq assemble_single(std::span<const TokenId> tokens, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("encode_single: max_len must be at least 2");
  const std::size_t len = std::min(tokens.size(), max_len - 2);
  TokenSeq seq;
  seq.ids.reserve(len + 2);
  seq.ids.push_back(vocab.cls());
  seq.ids.insert(seq.ids.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(len));
  seq.ids.push_back(vocab.sep());
  seq.type_ids.assign(seq.ids.size(), 0);
  return seq;
}

TokenSeq encode_cat(std::string_view query, std::string_view doc, const Vocab& vocab, std::size_t max_len) {
  return assemble_cat(wordpiece(query, vocab), wordpiece(doc, vocab), vocab, max_len);
}

TokenSeq encode_single(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  return assemble_single(wordpiece(text, vocab), vocab, max_len);
}

TokenSeq pad_align(const TokenSeq& baseline, std::span<const std::size_t> insert_positions, TokenId pad_id) {
  std::vector<std::size_t> positions(insert_positions.begin(), insert_positions.end());
  std::sort(positions.begin(), positions.end());
  if (std::adjacent_find(positions.begin(), positions.end()) != positions.end()) {
    throw std::invalid_argument("pad_align: duplicate insertion position");
  }
  const std::size_t out_len = baseline.size() + positions.size();
  if (!positions.empty() && positions.back() >= out_len) {
    throw std::out_of_range("pad_align: insertion position " + std::to_string(positions.back()) +
                            " out of range for aligned length " + std::to_string(out_len));
  }
  TokenSeq out;
  out.ids.reserve(out_len);
  out.type_ids.reserve(out_len);
  std::size_t src = 0;
  std::size_t next = 0;
  for (std::size_t pos = 0; pos < out_len; ++pos) {
    if (next < positions.size() && positions[next] == pos) {
      ++next;
      out.ids.push_back(pad_id);
      // Segment of the following baseline token, else of the preceding one.
      TokenId type = 0;
      if (src < baseline.size()) {
        type = baseline.type_ids[src];
      } else if (src > 0) {
        type = baseline.type_ids[src - 1];
      }
      out.type_ids.push_back(type);
    } else {
      out.ids.push_back(baseline.ids[src]);
      out.type_ids.push_back(baseline.type_ids[src]);
      ++src;
    }
  }
  return out;
}

}  // namespace patchlens
