#include "fixtures.hpp"

#include <fstream>
#include <sstream>

namespace fx {

using namespace patchlens;

const std::vector<std::string>& toy_words() {
  static const std::vector<std::string> words = {
      "the",   "a",      "cat",   "dog",   "sat",    "on",    "mat",   "ran",    "fast",  "blue",  "sky",
      "river", "bank",   "money", "water", "stream", "loan",  "rate",  "green",  "tree",  "leaf",  "sun",
      "moon",  "star",   "light", "dark",  "night",  "day",   "play",  "run",    "jump",  "house", "home",
      "car",   "road",   "city",  "town",  "music",  "song",  "paper", "model",  "rank",  "query", "search",
      "un",    "believ", "able",  "re",    "turn",   "ing",   "ed",    "er",     "est",   "ly",    "mech",
      "ir",    "q",      "z",     "x",     "b",      "c",     "t",     "s",      "e"};
  return words;
}

const std::vector<std::string>& toy_tokens() {
  static const std::vector<std::string> tokens = [] {
    std::vector<std::string> t = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", ".", ",", "!", "?"};
    for (const auto& w : toy_words()) t.push_back(w);
    for (const char* c : {"##s", "##ed", "##ing", "##er", "##est", "##ly", "##able", "##ir", "##e", "##t", "##a",
                          "##n", "##un", "##re", "##turn", "##believ", "##x", "##z"}) {
      t.push_back(c);
    }
    return t;
  }();
  return tokens;
}

Vocab toy_vocab() { return Vocab(toy_tokens()); }

ModelConfig tiny_config(std::size_t vocab_size, std::size_t layers, std::size_t heads, std::size_t d_model) {
  ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_model = d_model;
  c.d_head = d_model / heads;
  c.d_mlp = 4 * d_model;
  c.vocab_size = vocab_size;
  c.n_ctx = 48;
  c.pad_id = 0;
  return c;
}

ModelConfig random_config(std::mt19937_64& rng, std::size_t vocab_size) {
  std::uniform_int_distribution<std::size_t> layers(1, 3), head_pick(0, 2), dh_pick(1, 8), ctx(16, 24);
  const std::size_t heads = std::size_t{1} << head_pick(rng);
  std::size_t d_head = dh_pick(rng);
  while (heads * d_head > 32) --d_head;
  ModelConfig c;
  c.n_layers = layers(rng);
  c.n_heads = heads;
  c.d_head = d_head;
  c.d_model = heads * d_head;
  c.d_mlp = std::uniform_int_distribution<std::size_t>(4, 48)(rng);
  c.vocab_size = vocab_size;
  c.n_ctx = ctx(rng);
  c.gelu = rng() % 4 == 0 ? GeluVariant::tanh : GeluVariant::erf;
  c.pooling = rng() % 3 == 0 ? Pooling::mean : Pooling::cls;
  return c;
}

TokenSeq random_tokens(std::mt19937_64& rng, const ModelConfig& c, std::size_t seq, std::size_t pads) {
  // ids 0..4 are specials in the toy vocab; content ids are drawn above them
  std::uniform_int_distribution<TokenId> word(5, static_cast<TokenId>(c.vocab_size) - 1);
  TokenSeq t;
  const std::size_t body = seq - pads;
  const std::size_t split = body > 2 ? std::uniform_int_distribution<std::size_t>(1, body - 1)(rng) : body;
  for (std::size_t i = 0; i < body; ++i) {
    TokenId id = i == 0 ? 2 : (i + 1 == body ? 3 : word(rng));
    t.ids.push_back(id);
    t.type_ids.push_back(i >= split ? 1 : 0);
  }
  for (std::size_t i = 0; i < pads; ++i) {
    t.ids.push_back(c.pad_id);
    t.type_ids.push_back(t.type_ids.empty() ? 0 : t.type_ids.back());
  }
  return t;
}

std::string random_text(std::mt19937_64& rng, std::size_t words) {
  const auto& w = toy_words();
  std::uniform_int_distribution<std::size_t> pick(0, 45);
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += w[pick(rng)];
  }
  return s;
}

DotModel dot_model(const ModelConfig& c, std::uint64_t seed, Similarity sim) {
  return DotModel{std::make_shared<const Weights>(random_init(c, seed)), c, sim};
}

CatModel cat_model(const ModelConfig& c, std::uint64_t seed, std::size_t n_classes) {
  return CatModel{std::make_shared<const Weights>(random_init(c, seed)), c,
                  random_classifier(c.d_model, n_classes, seed + 1)};
}

PairedInput random_pair(std::mt19937_64& rng, const Perturbation& p, Arch arch, const Vocab& vocab,
                        std::size_t max_len, const IdfTable* idf) {
  const std::string qid = "q" + std::to_string(rng() % 100000);
  const std::string docid = "d" + std::to_string(rng() % 100000);
  const std::string query = random_text(rng, 1 + rng() % 3);
  const std::string doc = random_text(rng, 3 + rng() % 10);
  PerturbContext ctx{&vocab, idf, rng()};
  return make_pair(qid, docid, query, doc, p, arch, vocab, max_len, ctx);
}

TempDir::TempDir() {
  static std::mt19937_64 rng{std::random_device{}()};
  path_ = std::filesystem::temp_directory_path() / ("patchlens_test_" + std::to_string(rng()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<std::uint8_t> safetensors_bytes(const std::string& header, const std::vector<float>& payload,
                                            std::size_t extra_bytes) {
  std::vector<std::uint8_t> out(8);
  const std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(n >> (8 * i));
  out.insert(out.end(), header.begin(), header.end());
  const auto* p = reinterpret_cast<const std::uint8_t*>(payload.data());
  out.insert(out.end(), p, p + payload.size() * sizeof(float));
  out.resize(out.size() + extra_bytes, 0);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_corpus(const std::filesystem::path& dir, std::size_t n_queries, std::size_t docs_per_query,
                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::string vocab;
  for (const auto& t : toy_tokens()) vocab += t + "\n";
  write_file(dir / "vocab.txt", vocab);
  std::string queries, docs, qrels;
  std::size_t doc_no = 0;
  for (std::size_t q = 0; q < n_queries; ++q) {
    queries += "q" + std::to_string(q) + "\t" + random_text(rng, 2 + rng() % 2) + "\n";
    for (std::size_t k = 0; k < docs_per_query; ++k, ++doc_no) {
      const std::string id = "d" + std::to_string(doc_no);
      docs += id + "\t" + random_text(rng, 4 + rng() % 8) + "\n";
      qrels += "q" + std::to_string(q) + " 0 " + id + " " + std::to_string(rng() % 4) + "\n";
    }
  }
  write_file(dir / "queries.tsv", queries);
  write_file(dir / "docs.tsv", docs);
  write_file(dir / "qrels.txt", qrels);
}

}  // namespace fx
