#include "patchlens/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "patchlens/checkpoint.hpp"
#include "patchlens/effect_io.hpp"
#include "patchlens/heatmap.hpp"
#include "patchlens/kernels.hpp"

namespace patchlens {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError((path.empty() ? std::string("config") : path) + ": " + what);
}

template <typename T>
T convert(const json& v, const std::string& path) {
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) fail(path, "expected true or false");
    return v.get<bool>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<T>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(path, "expected a non-negative integer");
    }
    return v.get<T>();
  } else {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<T>();
  }
}

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json& at(const std::string& key) {
    if (!has(key)) fail(child(key), "required");
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    return has(key) ? convert<T>(j_.at(key), child(key)) : fallback;
  }

  template <typename T>
  T require(const std::string& key) {
    return convert<T>(at(key), child(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) fail(child(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename E>
E pick(const std::string& value, const std::string& path, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, e] : options) {
    if (value == name) return e;
    names += names.empty() ? "" : ", ";
    names += name;
  }
  fail(path, "'" + value + "' is not one of " + names);
}

ModelConfig parse_model_config(Fields& f, bool& vocab_size_given) {
  ModelConfig c;
  c.n_layers = f.get<std::size_t>("n_layers", c.n_layers);
  c.d_model = f.get<std::size_t>("d_model", c.d_model);
  c.n_heads = f.get<std::size_t>("n_heads", c.n_heads);
  if (c.n_heads == 0) fail(f.child("n_heads"), "must be positive");
  c.d_head = f.get<std::size_t>("d_head", c.d_model / c.n_heads);
  c.d_mlp = f.get<std::size_t>("d_mlp", 4 * c.d_model);
  vocab_size_given = f.has("vocab_size");
  c.vocab_size = f.get<std::size_t>("vocab_size", c.vocab_size);
  c.n_ctx = f.get<std::size_t>("n_ctx", c.n_ctx);
  c.type_vocab_size = f.get<std::size_t>("type_vocab_size", c.type_vocab_size);
  c.ln_eps = static_cast<float>(f.get<double>("ln_eps", c.ln_eps));
  c.gelu = pick<GeluVariant>(f.get<std::string>("gelu", "erf"), f.child("gelu"),
                             {{"erf", GeluVariant::erf}, {"tanh", GeluVariant::tanh}});
  c.pooling = pick<Pooling>(f.get<std::string>("pooling", "cls"), f.child("pooling"),
                            {{"cls", Pooling::cls}, {"mean", Pooling::mean}});
  f.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    fail(f.child(""), e.what());
  }
  return c;
}

ModelSpec parse_model(Fields& f, const fs::path& base) {
  ModelSpec m;
  m.arch = pick<Arch>(f.require<std::string>("arch"), f.child("arch"), {{"dot", Arch::dot}, {"cat", Arch::cat}});
  if (f.has("weights")) m.weights = resolve(base, f.require<std::string>("weights"));
  m.seed = f.get<std::uint64_t>("seed", 0);
  if (f.has("config")) {
    Fields cf(f.at("config"), f.child("config"));
    m.config = parse_model_config(cf, m.vocab_size_given);
  } else {
    m.config.d_mlp = 4 * m.config.d_model;
  }
  m.similarity = pick<Similarity>(f.get<std::string>("similarity", "dot"), f.child("similarity"),
                                  {{"dot", Similarity::dot}, {"cosine", Similarity::cosine}});
  if (f.has("n_classes")) {
    m.n_classes = f.require<std::size_t>("n_classes");
    if (*m.n_classes != 1 && *m.n_classes != 2) fail(f.child("n_classes"), "must be 1 or 2");
  }
  if (f.has("relevant_class")) {
    m.relevant_class = f.require<std::size_t>("relevant_class");
    if (*m.relevant_class >= m.n_classes.value_or(2)) fail(f.child("relevant_class"), "must be below n_classes");
  }
  if (m.arch == Arch::dot && (f.has("n_classes") || f.has("relevant_class"))) {
    fail(f.child("n_classes"), "only meaningful for arch \"cat\"");
  }
  f.finish();
  return m;
}

std::string fnv_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void require_file(const fs::path& path, const std::string& field) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) fail(field, "file not found: " + path.string());
}

Perturbation make_perturbation(const PerturbationSpec& p) {
  if (p.kind == "identity") return identity_perturbation();
  if (p.kind == "append") return append_perturbation(p.text, InsertAt::end);
  if (p.kind == "prepend") return append_perturbation(p.text, InsertAt::start);
  if (p.kind == "tfc1") return tfc1_perturbation(p.stopwords, p.n_terms);
  return tdc_perturbation(p.stopwords);
}

// Runs fn(i) for i in [0, n) on `workers` threads; each index once.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct Manifest {
  std::string command;
  std::string config_hash;
  std::string started_at;
  std::size_t workers = 1;
  json pairs = json::array();
  std::vector<std::string> outputs;
  std::size_t ok = 0, degenerate = 0, error = 0;
  json aggregate;

  void add_pair(const std::string& qid, const std::string& docid, const char* status, const std::string& file,
                const std::string& message) {
    json p{{"qid", qid}, {"docid", docid}, {"status", status}};
    if (!file.empty()) p["file"] = file;
    if (!message.empty()) p["error"] = message;
    pairs.push_back(std::move(p));
    if (std::string_view(status) == "ok") ++ok;
    else if (std::string_view(status) == "degenerate") ++degenerate;
    else ++error;
  }

  json to_json() const {
    json j{
        {"schema_version", 1},
        {"command", command},
        {"config_hash", config_hash},
        {"started_at", started_at},
        {"finished_at", utc_now()},
        {"kernel_isa", std::string(kernels::isa_name(kernels::active_isa()))},
        {"workers", workers},
        {"counts", {{"sampled", pairs.size()}, {"ok", ok}, {"degenerate", degenerate}, {"error", error}}},
        {"pairs", pairs},
        {"outputs", outputs},
    };
    j["aggregate"] = aggregate.is_null() ? json(nullptr) : aggregate;
    return j;
  }
};

void write_manifest(const fs::path& dir, Manifest& m, const std::string& name = "manifest.json") {
  m.outputs.push_back(name);
  write_text_file(dir / name, m.to_json().dump(2) + "\n");
}

fs::path prepare_output_dir(const ExperimentConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + config.output_dir.string() + ": " + ec.message());
  return config.output_dir;
}

std::string fmt_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string ExperimentConfig::hash() const { return fnv_hex(source.dump()); }

ExperimentConfig parse_config(const json& j, const fs::path& base) {
  ExperimentConfig cfg;
  cfg.source = j;
  Fields root(j, "");

  {
    Fields f(root.at("model"), "model");
    cfg.model = parse_model(f, base);
  }
  if (root.has("vocab")) cfg.vocab = resolve(base, root.require<std::string>("vocab"));
  if (root.has("dataset")) {
    Fields f(root.at("dataset"), "dataset");
    cfg.dataset = DatasetSpec{resolve(base, f.require<std::string>("queries")),
                              resolve(base, f.require<std::string>("docs")),
                              resolve(base, f.require<std::string>("qrels"))};
    f.finish();
  }
  if (root.has("perturbation")) {
    const json& pj = root.at("perturbation");
    if (pj.is_array()) fail("perturbation", "exactly one perturbation is allowed");
    Fields f(pj, "perturbation");
    PerturbationSpec p;
    p.kind = f.require<std::string>("kind");
    pick<int>(p.kind, f.child("kind"), {{"identity", 0}, {"append", 0}, {"prepend", 0}, {"tfc1", 0}, {"tdc", 0}});
    const bool textual = p.kind == "append" || p.kind == "prepend";
    if (textual) {
      p.text = f.require<std::string>("text");
      if (p.text.empty()) fail(f.child("text"), "must not be empty");
    } else if (f.has("text")) {
      fail(f.child("text"), "only used by append and prepend");
    }
    p.n_terms = f.get<std::size_t>("n_terms", 1);
    if (p.n_terms == 0) fail(f.child("n_terms"), "must be at least 1");
    if (p.n_terms != 1 && p.kind != "tfc1") fail(f.child("n_terms"), "only used by tfc1");
    if (f.has("stopwords")) {
      const json& sw = f.at("stopwords");
      if (!sw.is_array()) fail(f.child("stopwords"), "expected an array of strings");
      for (std::size_t i = 0; i < sw.size(); ++i) {
        p.stopwords.insert(convert<std::string>(sw[i], f.child("stopwords") + "[" + std::to_string(i) + "]"));
      }
    }
    p.seed = f.get<std::uint64_t>("seed", 0);
    p.filler = f.get<std::string>("filler", p.filler);
    f.finish();
    cfg.perturbation = std::move(p);
  }
  if (root.has("sampling")) {
    Fields f(root.at("sampling"), "sampling");
    cfg.sampling.n = f.get<std::size_t>("n", cfg.sampling.n);
    if (cfg.sampling.n == 0) fail(f.child("n"), "must be at least 1");
    cfg.sampling.seed = f.get<std::uint64_t>("seed", 0);
    if (f.has("grades")) {
      const json& g = f.at("grades");
      if (!g.is_array() || g.empty()) fail(f.child("grades"), "expected a non-empty array of integers");
      std::set<int> grades;
      for (std::size_t i = 0; i < g.size(); ++i) {
        grades.insert(convert<int>(g[i], f.child("grades") + "[" + std::to_string(i) + "]"));
      }
      cfg.sampling.grades = std::move(grades);
    }
    f.finish();
  }
  if (root.has("patch")) {
    Fields f(root.at("patch"), "patch");
    cfg.patch.target = pick<PatchTarget>(f.get<std::string>("target", "heads"), f.child("target"),
                                         {{"heads", PatchTarget::heads}, {"blocks", PatchTarget::blocks}});
    if (cfg.patch.target == PatchTarget::blocks) {
      cfg.patch.site = pick<Site>(f.get<std::string>("site", "resid_post"), f.child("site"),
                                  {{"resid_pre", Site::resid_pre},
                                   {"attn_out", Site::attn_out},
                                   {"mlp_out", Site::mlp_out},
                                   {"resid_post", Site::resid_post}});
    } else {
      cfg.patch.head_site = pick<Site>(f.get<std::string>("site", "z"), f.child("site"),
                                       {{"z", Site::attn_z}, {"q", Site::attn_q}, {"k", Site::attn_k}, {"v", Site::attn_v}});
    }
    cfg.patch.workers = f.get<std::size_t>("workers", 1);
    if (cfg.patch.workers == 0) fail(f.child("workers"), "must be at least 1");
    f.finish();
  }
  if (root.has("max_len")) {
    cfg.max_len = root.require<std::size_t>("max_len");
    if (*cfg.max_len < 4) fail("max_len", "must be at least 4");
    if (*cfg.max_len > cfg.model.config.n_ctx) fail("max_len", "exceeds model.config.n_ctx");
  }
  cfg.output_dir = resolve(base, root.get<std::string>("output_dir", "out"));
  cfg.workers = root.get<std::size_t>("workers", 1);
  if (cfg.workers == 0) fail("workers", "must be at least 1");
  root.finish();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

RankingModel build_model(const ModelSpec& spec, const Vocab* vocab) {
  ModelConfig c = spec.config;
  if (vocab) {
    if (!spec.vocab_size_given) c.vocab_size = vocab->size();
    if (c.vocab_size < vocab->size()) {
      fail("model.config.vocab_size",
           std::to_string(c.vocab_size) + " is smaller than the vocab (" + std::to_string(vocab->size()) + " tokens)");
    }
    c.pad_id = vocab->pad();
  }

  std::shared_ptr<const Weights> weights;
  TensorMap raw;
  try {
    if (spec.weights) {
      require_file(*spec.weights, "model.weights");
      raw = load_safetensors(*spec.weights);
      weights = std::make_shared<const Weights>(map_checkpoint(raw, c));
    } else {
      weights = std::make_shared<const Weights>(random_init(c, spec.seed));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    fail("model.weights", e.what());
  }

  if (spec.arch == Arch::dot) return DotModel{weights, c, spec.similarity};
  ClassifierHead head;
  try {
    head = spec.weights ? map_classifier(raw, c.d_model, 0)
                        : random_classifier(c.d_model, spec.n_classes.value_or(1), spec.seed ^ 0x9e3779b97f4a7c15ULL);
  } catch (const std::exception& e) {
    fail("model.weights", std::string("classifier head: ") + e.what());
  }
  const std::size_t n = head.n_classes();
  if (spec.n_classes && *spec.n_classes != n) {
    fail("model.n_classes", std::to_string(*spec.n_classes) + " does not match the checkpoint head (" +
                                std::to_string(n) + " classes)");
  }
  head.relevant_class = spec.relevant_class.value_or(n - 1);
  if (head.relevant_class >= n) fail("model.relevant_class", "must be below the head's " + std::to_string(n) + " classes");
  return CatModel{weights, c, std::move(head)};
}

Experiment prepare_experiment(const ExperimentConfig& config) {
  if (!config.vocab) fail("vocab", "required");
  if (!config.dataset) fail("dataset", "required");
  if (!config.perturbation) fail("perturbation", "required");

  require_file(*config.vocab, "vocab");
  require_file(config.dataset->queries, "dataset.queries");
  require_file(config.dataset->docs, "dataset.docs");
  require_file(config.dataset->qrels, "dataset.qrels");

  auto load = [](const char* field, auto fn) {
    try {
      return fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(field, e.what());
    }
  };

  Vocab vocab = load("vocab", [&] { return load_vocab(*config.vocab); });
  Dataset dataset = load("dataset", [&] {
    return load_dataset(config.dataset->queries, config.dataset->docs, config.dataset->qrels);
  });
  if (!vocab.contains(config.perturbation->filler)) {
    fail("perturbation.filler", "'" + config.perturbation->filler + "' is not in the vocab");
  }
  RankingModel model = build_model(config.model, &vocab);
  const std::size_t max_len = config.max_len.value_or(config_of(model).n_ctx);

  Experiment exp{config, std::move(vocab), std::move(dataset), IdfTable{},
                 make_perturbation(*config.perturbation), std::move(model), max_len, {}};
  if (config.perturbation->kind == "tdc") exp.idf = compute_idf(exp.dataset.docs);

  std::vector<Qrel> pool = exp.dataset.qrels;
  if (config.sampling.grades) pool = filter_grades(pool, *config.sampling.grades);
  if (pool.empty()) fail("sampling.grades", "no qrels match the grade filter");
  exp.sample = stratified_subsample(pool, config.sampling.n, config.sampling.seed);
  return exp;
}

std::vector<PairSlot> build_pair_slots(const Experiment& exp) {
  const Arch arch = std::holds_alternative<DotModel>(exp.model) ? Arch::dot : Arch::cat;
  std::vector<PairSlot> slots(exp.sample.size());
  const TokenId filler = exp.vocab.find(exp.config.perturbation->filler);
  for (std::size_t i = 0; i < exp.sample.size(); ++i) {
    const Qrel& q = exp.sample[i];
    try {
      PerturbContext ctx{&exp.vocab, &exp.idf, pair_seed(exp.config.perturbation->seed, q.qid, q.docid), filler};
      slots[i].pair = make_pair(q.qid, q.docid, exp.dataset.queries.at(q.qid), exp.dataset.docs.at(q.docid),
                                exp.perturbation, arch, exp.vocab, exp.max_len, ctx);
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  }
  return slots;
}

std::string sanitize_id(std::string_view id) {
  std::string out;
  out.reserve(id.size());
  for (char c : id) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                      c == '.' || c == '_';
    out.push_back(keep ? c : '_');
  }
  if (out.empty()) out = "_";
  return out;
}

int cmd_score(const ExperimentConfig& config, std::ostream& log) {
  Manifest manifest;
  manifest.command = "score";
  manifest.config_hash = config.hash();
  manifest.started_at = utc_now();
  manifest.workers = config.workers;

  const Experiment exp = prepare_experiment(config);
  const fs::path dir = prepare_output_dir(config);
  const auto slots = build_pair_slots(exp);

  struct Row {
    float baseline = 0, perturbed = 0;
    std::string error;
  };
  std::vector<Row> rows(slots.size());
  parallel_for(slots.size(), config.workers, [&](std::size_t i) {
    if (!slots[i].pair) {
      rows[i].error = slots[i].error;
      return;
    }
    try {
      const PairRun run = run_pair(exp.model, *slots[i].pair);
      rows[i].baseline = run.baseline_score;
      rows[i].perturbed = run.perturbed_score;
    } catch (const std::exception& e) {
      rows[i].error = e.what();
    }
  });

  std::ostringstream tsv;
  tsv << "qid\tdocid\tbaseline_score\tperturbed_score\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Qrel& q = exp.sample[i];
    if (!rows[i].error.empty()) {
      log << "pair " << q.qid << ' ' << q.docid << ": " << rows[i].error << '\n';
      manifest.add_pair(q.qid, q.docid, "error", "", rows[i].error);
      continue;
    }
    tsv << q.qid << '\t' << q.docid << '\t' << fmt_score(rows[i].baseline) << '\t' << fmt_score(rows[i].perturbed)
        << '\n';
    const bool degenerate = std::fabs(double(rows[i].perturbed) - rows[i].baseline) <= kDegenerateTolerance;
    manifest.add_pair(q.qid, q.docid, degenerate ? "degenerate" : "ok", "", "");
  }
  write_text_file(dir / "scores.tsv", tsv.str());
  manifest.outputs.push_back("scores.tsv");
  write_manifest(dir, manifest, "score_manifest.json");
  log << "scored " << manifest.ok + manifest.degenerate << " of " << rows.size() << " pairs -> "
      << (dir / "scores.tsv").string() << '\n';
  return manifest.error ? kExitRuntime : kExitOk;
}

int cmd_patch(const ExperimentConfig& config, std::ostream& log) {
  Manifest manifest;
  manifest.command = "patch";
  manifest.config_hash = config.hash();
  manifest.started_at = utc_now();
  manifest.workers = config.workers;

  const Experiment exp = prepare_experiment(config);
  const fs::path dir = prepare_output_dir(config);
  const auto slots = build_pair_slots(exp);

  struct Outcome {
    std::optional<PairPatchResult> result;
    std::string error;
  };
  std::vector<Outcome> outcomes(slots.size());
  parallel_for(slots.size(), config.workers, [&](std::size_t i) {
    if (!slots[i].pair) {
      outcomes[i].error = slots[i].error;
      return;
    }
    try {
      const PairedInput& pair = *slots[i].pair;
      outcomes[i].result = config.patch.target == PatchTarget::heads
                               ? patch_heads(exp.model, pair, config.patch.workers, config.patch.head_site)
                               : patch_blocks(exp.model, pair, config.patch.site, config.patch.workers);
    } catch (const std::exception& e) {
      outcomes[i].error = e.what();
    }
  });

  std::vector<EffectMatrix> usable;
  std::set<std::string> used_names;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const Qrel& q = exp.sample[i];
    if (!outcomes[i].result) {
      log << "pair " << q.qid << ' ' << q.docid << ": " << outcomes[i].error << '\n';
      manifest.add_pair(q.qid, q.docid, "error", "", outcomes[i].error);
      continue;
    }
    const PairPatchResult& r = *outcomes[i].result;
    const std::string stem = "pair_" + sanitize_id(q.qid) + "_" + sanitize_id(q.docid);
    std::string name = stem + ".json";
    for (int k = 2; used_names.contains(name); ++k) name = stem + "_" + std::to_string(k) + ".json";
    used_names.insert(name);
    write_text_file(dir / name, pair_result_json(r).dump(2) + "\n");
    manifest.outputs.push_back(name);
    manifest.add_pair(q.qid, q.docid, r.degenerate ? "degenerate" : "ok", name, "");
    if (!r.degenerate) usable.push_back(r.matrix);
  }

  if (usable.empty()) {
    log << "no pair produced an effect matrix (" << manifest.degenerate << " degenerate, " << manifest.error
        << " failed)\n";
    write_manifest(dir, manifest);
    return kExitRuntime;
  }
  EffectMatrix agg = aggregate(usable);
  agg.degenerate_count = manifest.degenerate;
  write_text_file(dir / "aggregate.csv", effect_matrix_csv(agg));
  write_text_file(dir / "aggregate.json", effect_matrix_json(agg).dump(2) + "\n");
  manifest.outputs.push_back("aggregate.csv");
  manifest.outputs.push_back("aggregate.json");
  manifest.aggregate = json{{"pairs_used", usable.size()}, {"degenerate_excluded", manifest.degenerate}};
  write_manifest(dir, manifest);

  log << "patched " << manifest.ok << " pairs (" << manifest.degenerate << " degenerate excluded, " << manifest.error
      << " failed) -> " << (dir / "aggregate.csv").string() << '\n';
  return manifest.error ? kExitRuntime : kExitOk;
}

int cmd_plot(const fs::path& matrix, const fs::path& svg, std::ostream& log) {
  const EffectMatrix m = read_effect_matrix(matrix);
  std::string title = "mean normalised effect";
  if (m.degenerate_count) title += " (" + std::to_string(m.degenerate_count) + " degenerate pairs excluded)";
  if (svg.has_parent_path()) fs::create_directories(svg.parent_path());
  write_text_file(svg, render_heatmap_svg(m, title));
  log << "wrote " << svg.string() << '\n';
  return kExitOk;
}

int cmd_hooks(const ExperimentConfig& config, std::ostream& out) {
  for (const HookName& h : list_hooks(config.model.config)) out << h.str() << '\n';
  return kExitOk;
}

LayerDominance late_layer_dominance(const EffectMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("late_layer_dominance: empty matrix");
  LayerDominance d;
  d.layer_means.resize(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) d.layer_means[r] += std::fabs(m.value(r, c));
    d.layer_means[r] /= static_cast<double>(m.cols());
    if (d.layer_means[r] > d.layer_means[d.strongest_layer]) d.strongest_layer = r;
  }
  const std::size_t n = m.rows();
  d.final_third_start = n - (n + 2) / 3;
  d.in_final_third = d.strongest_layer >= d.final_third_start;
  return d;
}

}  // namespace patchlens
