#include "patchlens/perturb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace patchlens {
namespace {

bool is_punct_word(const std::string& w) {
  return std::all_of(w.begin(), w.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u);
  });
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return in;
}

std::map<std::string, std::string> load_id_text(const std::filesystem::path& path, const char* kind) {
  auto in = open_input(path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": malformed " + kind +
                         " line, expected 'id<TAB>text'");
    }
    std::string id = line.substr(0, tab);
    if (!out.emplace(id, line.substr(tab + 1)).second) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": duplicate " + kind + " id '" + id + "'");
    }
  }
  return out;
}

std::vector<Qrel> load_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<Qrel> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::vector<std::string> parts;
    for (std::string f; fields >> f;) parts.push_back(std::move(f));
    if (parts.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": malformed qrels line, " + why);
    };
    if (parts.size() != 4) fail("expected 'qid 0 docid grade'");
    Qrel q{parts[0], parts[2], 0};
    const auto& g = parts[3];
    auto [ptr, ec] = std::from_chars(g.data(), g.data() + g.size(), q.grade);
    if (ec != std::errc() || ptr != g.data() + g.size()) fail("grade '" + g + "' is not an integer");
    out.push_back(std::move(q));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string join_words(std::string_view a, std::string_view b) {
  if (a.empty()) return std::string(b);
  if (b.empty()) return std::string(a);
  std::string out(a);
  out.push_back(' ');
  out.append(b);
  return out;
}

std::string join_terms(const std::vector<std::string>& terms) {
  std::string out;
  for (const auto& t : terms) out = join_words(out, t);
  return out;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& queries, const std::filesystem::path& docs,
                     const std::filesystem::path& qrels) {
  Dataset ds;
  ds.queries = load_id_text(queries, "query");
  ds.docs = load_id_text(docs, "document");
  ds.qrels = load_qrels(qrels);
  for (const auto& q : ds.qrels) {
    if (!ds.queries.contains(q.qid)) throw DatasetError("qrels reference unknown qid '" + q.qid + "'");
    if (!ds.docs.contains(q.docid)) throw DatasetError("qrels reference unknown docid '" + q.docid + "'");
  }
  return ds;
}

std::vector<std::string> split_terms(std::string_view text) {
  auto words = basic_split(text);
  std::erase_if(words, is_punct_word);
  return words;
}

std::vector<std::string> query_terms(std::string_view query, const std::set<std::string>& stopwords) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& t : split_terms(query)) {
    if (stopwords.contains(t) || !seen.insert(t).second) continue;
    out.push_back(std::move(t));
  }
  return out;
}

IdfTable::IdfTable(std::unordered_map<std::string, std::size_t> df, std::size_t n_docs)
    : df_(std::move(df)), n_docs_(n_docs) {}

std::size_t IdfTable::df(std::string_view term) const {
  auto it = df_.find(std::string(term));
  return it == df_.end() ? 0 : it->second;
}

double IdfTable::idf(std::string_view term) const {
  const double n = static_cast<double>(n_docs_);
  return std::log((n + 1.0) / (static_cast<double>(df(term)) + 1.0)) + 1.0;
}

IdfTable compute_idf(std::span<const std::string> docs) {
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : docs) {
    auto terms = split_terms(doc);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto& t : terms) ++df[std::move(t)];
  }
  return IdfTable(std::move(df), docs.size());
}

IdfTable compute_idf(const std::map<std::string, std::string>& docs) {
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& [id, text] : docs) texts.push_back(text);
  return compute_idf(texts);
}

PerturbResult perturb_append(std::string_view doc, std::string_view text, const Vocab& vocab, InsertAt where) {
  const std::size_t inserted = wordpiece(text, vocab).size();
  if (inserted == 0) return {std::string(doc), {}};
  PerturbResult r;
  std::size_t first = 0;
  if (where == InsertAt::end) {
    first = wordpiece(doc, vocab).size();
    r.text = join_words(doc, text);
  } else {
    r.text = join_words(text, doc);
  }
  for (std::size_t i = 0; i < inserted; ++i) r.positions.push_back(first + i);
  return r;
}

std::vector<std::string> tfc1_choose(std::string_view query, std::mt19937_64& rng,
                                     const std::set<std::string>& stopwords, std::size_t n_terms) {
  const auto terms = query_terms(query, stopwords);
  if (terms.empty()) throw std::invalid_argument("tfc1: query has no usable terms");
  std::uniform_int_distribution<std::size_t> pick(0, terms.size() - 1);
  std::vector<std::string> chosen;
  for (std::size_t i = 0; i < n_terms; ++i) chosen.push_back(terms[pick(rng)]);
  return chosen;
}

PerturbResult tfc1_append(std::string_view query, std::string_view doc, std::mt19937_64& rng, const Vocab& vocab,
                          const std::set<std::string>& stopwords, std::size_t n_terms) {
  return perturb_append(doc, join_terms(tfc1_choose(query, rng, stopwords, n_terms)), vocab, InsertAt::end);
}

std::string tdc_choose(std::string_view query, const IdfTable& idf, const std::set<std::string>& stopwords) {
  const auto terms = query_terms(query, stopwords);
  if (terms.empty()) throw std::invalid_argument("tdc: query has no usable terms");
  const std::string* best = nullptr;
  double best_idf = 0.0;
  for (const auto& t : terms) {
    const double v = idf.idf(t);
    if (!best || v > best_idf || (v == best_idf && t < *best)) {
      best = &t;
      best_idf = v;
    }
  }
  return *best;
}

PerturbResult tdc_append(std::string_view query, std::string_view doc, const IdfTable& idf, const Vocab& vocab,
                         const std::set<std::string>& stopwords) {
  return perturb_append(doc, tdc_choose(query, idf, stopwords), vocab, InsertAt::end);
}

Perturbation identity_perturbation() {
  return {"identity", [](std::string_view, std::string_view doc, const PerturbContext&) {
            return PerturbResult{std::string(doc), {}};
          }};
}

Perturbation append_perturbation(std::string text, InsertAt where) {
  return {where == InsertAt::end ? "append" : "prepend",
          [text = std::move(text), where](std::string_view, std::string_view doc, const PerturbContext& ctx) {
            return perturb_append(doc, text, *ctx.vocab, where);
          }};
}

Perturbation tfc1_perturbation(std::set<std::string> stopwords, std::size_t n_terms) {
  return {"tfc1", [stopwords = std::move(stopwords), n_terms](std::string_view query, std::string_view doc,
                                                               const PerturbContext& ctx) {
            std::mt19937_64 rng(ctx.seed);
            return tfc1_append(query, doc, rng, *ctx.vocab, stopwords, n_terms);
          }};
}

Perturbation tdc_perturbation(std::set<std::string> stopwords) {
  return {"tdc", [stopwords = std::move(stopwords)](std::string_view query, std::string_view doc,
                                                    const PerturbContext& ctx) {
            if (!ctx.idf) throw std::invalid_argument("tdc perturbation needs an idf table");
            return tdc_append(query, doc, *ctx.idf, *ctx.vocab, stopwords);
          }};
}

std::uint64_t pair_seed(std::uint64_t seed, std::string_view qid, std::string_view docid) {
  std::uint64_t h = fnv1a(qid, 1469598103934665603ull ^ (seed * 0x9E3779B97F4A7C15ull));
  h = fnv1a("\x1f", h);
  return fnv1a(docid, h);
}

std::vector<Qrel> stratified_subsample(std::span<const Qrel> qrels, std::size_t n, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>, std::greater<>> by_grade;
  for (std::size_t i = 0; i < qrels.size(); ++i) by_grade[qrels[i].grade].push_back(i);

  std::mt19937_64 rng(seed);
  for (auto& [grade, idx] : by_grade) std::shuffle(idx.begin(), idx.end(), rng);

  std::map<int, std::size_t, std::greater<>> quota;
  std::size_t remaining = std::min(n, qrels.size());
  while (remaining > 0) {
    for (const auto& [grade, idx] : by_grade) {
      if (remaining == 0) break;
      if (quota[grade] < idx.size()) {
        ++quota[grade];
        --remaining;
      }
    }
  }

  std::vector<std::size_t> picked;
  for (const auto& [grade, idx] : by_grade) {
    picked.insert(picked.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[grade]));
  }
  std::sort(picked.begin(), picked.end());
  std::vector<Qrel> out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(qrels[i]);
  return out;
}

std::vector<Qrel> filter_grades(std::span<const Qrel> qrels, const std::set<int>& grades) {
  std::vector<Qrel> out;
  for (const auto& q : qrels) {
    if (grades.contains(q.grade)) out.push_back(q);
  }
  return out;
}

PairedInput make_pair(std::string qid, std::string docid, std::string_view query, std::string_view doc,
                      const Perturbation& perturbation, Arch arch, const Vocab& vocab, std::size_t max_len,
                      const PerturbContext& context) {
  PerturbContext ctx = context;
  ctx.vocab = &vocab;
  const PerturbResult pr = perturbation.transform(query, doc, ctx);

  const auto doc_ids = wordpiece(doc, vocab);
  const auto pert_ids = wordpiece(pr.text, vocab);
  std::vector<bool> inserted(pert_ids.size(), false);
  for (std::size_t p : pr.positions) {
    if (p >= pert_ids.size() || inserted[p]) {
      throw std::logic_error("perturbation '" + perturbation.name + "' declared an invalid insertion position");
    }
    inserted[p] = true;
  }
  {
    std::vector<TokenId> rest;
    for (std::size_t i = 0; i < pert_ids.size(); ++i) {
      if (!inserted[i]) rest.push_back(pert_ids[i]);
    }
    if (rest != doc_ids) {
      throw std::logic_error("perturbation '" + perturbation.name +
                             "' changed document tokens outside its declared insertion positions");
    }
  }

  const std::vector<TokenId> query_ids = wordpiece(query, vocab);
  std::size_t budget = 0;
  std::size_t offset = 1;
  if (arch == Arch::cat) {
    if (max_len < 4 || query_ids.size() + 3 > max_len) {
      throw std::invalid_argument("encode_cat: query of " + std::to_string(query_ids.size()) +
                                  " tokens does not fit max_len " + std::to_string(max_len));
    }
    budget = max_len - query_ids.size() - 3;
    offset = query_ids.size() + 2;
  } else {
    if (max_len < 2) throw std::invalid_argument("encode_single: max_len must be at least 2");
    budget = max_len - 2;
  }

  // Fit the document segment: inserted tokens first, then as many original
  // tokens (from the front) as remain, preserving relative order.
  const std::size_t n_inserted = pr.positions.size();
  const std::size_t keep_inserted = std::min(n_inserted, budget);
  const std::size_t keep_original = std::min(doc_ids.size(), budget - keep_inserted);
  std::vector<TokenId> fit_pert, fit_base;
  std::vector<std::size_t> positions;
  std::size_t seen_ins = 0, seen_orig = 0;
  for (std::size_t i = 0; i < pert_ids.size(); ++i) {
    if (inserted[i]) {
      if (seen_ins++ < keep_inserted) {
        positions.push_back(offset + fit_pert.size());
        fit_pert.push_back(pert_ids[i]);
      }
    } else if (seen_orig++ < keep_original) {
      fit_pert.push_back(pert_ids[i]);
      fit_base.push_back(pert_ids[i]);
    }
  }

  const TokenId filler = ctx.filler >= 0 ? ctx.filler : vocab.pad();
  PairedInput pair;
  pair.qid = std::move(qid);
  pair.docid = std::move(docid);
  if (arch == Arch::cat) {
    pair.perturbed = assemble_cat(query_ids, fit_pert, vocab, max_len);
    pair.baseline = pad_align(assemble_cat(query_ids, fit_base, vocab, max_len), positions, filler);
  } else {
    pair.query = assemble_single(query_ids, vocab, max_len);
    pair.perturbed = assemble_single(fit_pert, vocab, max_len);
    pair.baseline = pad_align(assemble_single(fit_base, vocab, max_len), positions, filler);
  }
  pair.insert_positions = std::move(positions);
  return pair;
}

std::vector<PairedInput> build_pairs(const Dataset& dataset, const Perturbation& perturbation, Arch arch,
                                     const Vocab& vocab, std::span<const Qrel> sample, std::size_t max_len,
                                     std::uint64_t seed, const IdfTable* idf) {
  std::vector<PairedInput> out;
  out.reserve(sample.size());
  for (const auto& q : sample) {
    PerturbContext ctx{&vocab, idf, pair_seed(seed, q.qid, q.docid)};
    out.push_back(make_pair(q.qid, q.docid, dataset.queries.at(q.qid), dataset.docs.at(q.docid), perturbation, arch,
                            vocab, max_len, ctx));
  }
  return out;
}

}  // namespace patchlens
