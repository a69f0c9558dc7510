#include <doctest.h>

#include <cmath>
#include <random>

#include "patchlens/patching.hpp"
#include "fixtures.hpp"
#include "reference.hpp"

using namespace patchlens;

namespace {

struct Setup {
  Vocab vocab = fx::toy_vocab();
  ModelConfig config = fx::tiny_config(vocab.size(), 2, 2, 16);
};

// Same length, same pad layout, one content token swapped.
PairedInput substitution_pair(const Vocab& vocab, std::mt19937_64& rng) {
  PairedInput p;
  p.qid = "q";
  p.docid = "d";
  p.baseline = encode_cat(fx::random_text(rng, 2), fx::random_text(rng, 5), vocab, 32);
  p.perturbed = p.baseline;
  const std::size_t pos = p.baseline.size() - 2;
  p.perturbed.ids[pos] = p.baseline.ids[pos] == vocab.find("sky") ? vocab.find("sun") : vocab.find("sky");
  p.insert_positions = {pos};
  return p;
}

std::vector<PatchSpec> every_spec(const ModelConfig& c, std::size_t seq) {
  std::vector<PatchSpec> specs;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    for (Site s : {Site::resid_pre, Site::attn_out, Site::mlp_out, Site::resid_post}) {
      specs.push_back(BlockByPos{s, l, all_positions(seq)});
      specs.push_back(BlockByPos{s, l, {seq - 1}});
    }
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      for (Site s : {Site::attn_z, Site::attn_q, Site::attn_k, Site::attn_v}) specs.push_back(HeadAllPos{l, h, s});
      specs.push_back(HeadByPos{l, h, {0, seq / 2}});
    }
  }
  return specs;
}

}  // namespace

TEST_CASE("effect endpoints") {
  CHECK(*effect(1, 3, 1) == doctest::Approx(0.0));
  CHECK(*effect(1, 3, 3) == doctest::Approx(1.0));
  CHECK(*effect(1, 3, 2) == doctest::Approx(0.5));
  CHECK_FALSE(effect(2, 2, 5).has_value());
  CHECK_FALSE(effect(2, 2 + 1e-10, 5).has_value());
}

TEST_CASE("rerun is the lower-scoring side, ties re-run the baseline") {
  PairRun r;
  r.baseline_score = 1.0f;
  r.perturbed_score = 3.0f;
  CHECK(r.rerun() == Side::baseline);
  CHECK(r.donor() == Side::perturbed);
  CHECK(*r.normalized(3.0) == doctest::Approx(1.0));
  r.perturbed_score = -1.0f;
  CHECK(r.rerun() == Side::perturbed);
  CHECK(r.donor() == Side::baseline);
  CHECK(*r.normalized(-1.0) == doctest::Approx(0.0));
  CHECK(*r.normalized(1.0) == doctest::Approx(1.0));
  r.perturbed_score = 1.0f;
  CHECK(r.rerun() == Side::baseline);
  CHECK(r.degenerate());
}

TEST_CASE("run_pair") {
  Setup s;
  const CatModel model = fx::cat_model(s.config, 3);
  std::mt19937_64 rng(61);
  const PairedInput same = fx::random_pair(rng, identity_perturbation(), Arch::cat, s.vocab, 24);
  const PairRun a = run_pair(model, same);
  CHECK(a.baseline_score == a.perturbed_score);
  CHECK(a.baseline_cache.size() == list_hooks(s.config).size());
  const PairedInput pair = fx::random_pair(rng, append_perturbation("sky"), Arch::cat, s.vocab, 24);
  const PairRun b = run_pair(model, pair), c = run_pair(model, pair);
  CHECK(b.baseline_score == c.baseline_score);
  CHECK(b.perturbed_score == c.perturbed_score);
  CHECK(b.baseline_cache.tokens == pair.baseline);
  CHECK(b.perturbed_cache.tokens == pair.perturbed);
  CHECK(b.baseline_score == doctest::Approx(ref::cat_score(model, pair.baseline)).epsilon(1e-5).scale(1.0));
}

TEST_CASE("self-patching any spec leaves the score unchanged") {
  Setup s;
  std::mt19937_64 rng(62);
  const RankingModel models[] = {fx::dot_model(s.config, 4), fx::cat_model(s.config, 5, 2)};
  for (const RankingModel& model : models) {
    const Arch arch = std::holds_alternative<DotModel>(model) ? Arch::dot : Arch::cat;
    for (int i = 0; i < 3; ++i) {
      const PairedInput pair = fx::random_pair(rng, tfc1_perturbation(), arch, s.vocab, 24);
      const PairRun runs = run_pair(model, pair);
      const std::size_t seq = pair.perturbed.size();
      for (Side side : {Side::baseline, Side::perturbed}) {
        for (const PatchSpec& spec : every_spec(s.config, seq)) {
          const float patched = run_patched(model, pair, spec, runs.cache(side), side);
          CHECK(std::fabs(patched - runs.score(side)) <= 1e-6);
        }
      }
    }
  }
}

TEST_CASE("patching the final resid_post recovers the donor score") {
  Setup s;
  std::mt19937_64 rng(63);
  const RankingModel models[] = {fx::dot_model(s.config, 6), fx::cat_model(s.config, 7),
                                 fx::dot_model(s.config, 8, Similarity::cosine), fx::cat_model(s.config, 9, 2)};
  for (const RankingModel& model : models) {
    const Arch arch = std::holds_alternative<DotModel>(model) ? Arch::dot : Arch::cat;
    for (int i = 0; i < 5; ++i) {
      const PairedInput pair = fx::random_pair(rng, append_perturbation("blue sky"), arch, s.vocab, 24);
      const BlockByPos spec{Site::resid_post, s.config.n_layers - 1, all_positions(pair.perturbed.size())};
      const RunTriple t = run_three(model, pair, spec);
      const auto e = effect(t.rerun == Side::baseline ? t.baseline_score : t.perturbed_score,
                            t.rerun == Side::baseline ? t.perturbed_score : t.baseline_score, t.patched_score);
      REQUIRE(e.has_value());
      CHECK(std::fabs(*e - 1.0) <= 1e-4);
    }
  }
}

TEST_CASE("resid_pre at layer 0 recovers the donor when both inputs share a pad layout") {
  Setup s;
  std::mt19937_64 rng(64);
  const CatModel model = fx::cat_model(s.config, 10);
  for (int i = 0; i < 5; ++i) {
    const PairedInput pair = substitution_pair(s.vocab, rng);
    const PairRun runs = run_pair(model, pair);
    if (runs.degenerate()) continue;
    const BlockByPos spec{Site::resid_pre, 0, all_positions(pair.perturbed.size())};
    const float patched = run_patched(model, pair, spec, runs.cache(runs.donor()), runs.rerun());
    CHECK(std::fabs(*runs.normalized(patched) - 1.0) <= 1e-4);
  }
}

TEST_CASE("resid_pre of layer l and resid_post of layer l-1 are the same patch") {
  Setup s;
  ModelConfig c = fx::tiny_config(s.vocab.size(), 3, 2, 16);
  std::mt19937_64 rng(65);
  const CatModel model = fx::cat_model(c, 11);
  for (int i = 0; i < 5; ++i) {
    const PairedInput pair = fx::random_pair(rng, tfc1_perturbation(), Arch::cat, s.vocab, 24);
    const PairRun runs = run_pair(model, pair);
    const auto pos = all_positions(pair.perturbed.size());
    for (std::size_t l = 1; l < c.n_layers; ++l) {
      const float pre = run_patched(model, pair, BlockByPos{Site::resid_pre, l, pos}, runs.cache(runs.donor()),
                                    runs.rerun());
      const float post = run_patched(model, pair, BlockByPos{Site::resid_post, l - 1, pos}, runs.cache(runs.donor()),
                                     runs.rerun());
      CHECK(pre == post);
    }
  }
}

TEST_CASE("head patch at a masked pad position has no effect") {
  Setup s;
  std::mt19937_64 rng(66);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 5 && seed < 50; ++seed) {
    const CatModel model = fx::cat_model(s.config, 100 + seed);
    const PairedInput pair = fx::random_pair(rng, append_perturbation("sky"), Arch::cat, s.vocab, 24);
    const PairRun runs = run_pair(model, pair);
    if (runs.degenerate() || runs.rerun() != Side::baseline) continue;
    const std::size_t pad_pos = pair.insert_positions.front();
    REQUIRE(pair.baseline.ids[pad_pos] == s.vocab.pad());
    for (std::size_t l = 0; l < s.config.n_layers; ++l)
      for (std::size_t h = 0; h < s.config.n_heads; ++h) {
        const float patched =
            run_patched(model, pair, HeadByPos{l, h, {pad_pos}}, runs.cache(runs.donor()), runs.rerun());
        CHECK(std::fabs(*runs.normalized(patched)) <= 1e-6);
      }
    ++checked;
  }
  CHECK(checked == 5);
}

TEST_CASE("patch_heads and patch_blocks shapes and accounting") {
  Setup s;
  std::mt19937_64 rng(67);
  const CatModel model = fx::cat_model(s.config, 12);
  PairedInput pair = fx::random_pair(rng, append_perturbation("sky"), Arch::cat, s.vocab, 24);
  const PairPatchResult heads = patch_heads(model, pair);
  REQUIRE_FALSE(heads.degenerate);
  CHECK(heads.matrix.rows() == 2);
  CHECK(heads.matrix.cols() == 2);
  CHECK(heads.patched_runs == 4);
  CHECK(heads.matrix.col_axis == "head");
  const PairPatchResult blocks = patch_blocks(model, pair, Site::attn_out);
  CHECK(blocks.matrix.rows() == 2);
  CHECK(blocks.matrix.cols() == pair.perturbed.size());
  CHECK(blocks.patched_runs == 2 * pair.perturbed.size());
  CHECK_THROWS_AS(patch_blocks(model, pair, Site::attn_z), std::invalid_argument);

  const PairedInput same = fx::random_pair(rng, identity_perturbation(), Arch::cat, s.vocab, 24);
  const PairPatchResult d = patch_heads(model, same);
  CHECK(d.degenerate);
  CHECK(d.patched_runs == 0);
  CHECK(d.matrix.values.empty());
}

TEST_CASE("threaded sweeps match sequential ones") {
  Setup s;
  std::mt19937_64 rng(68);
  const DotModel model = fx::dot_model(s.config, 13);
  const PairedInput pair = fx::random_pair(rng, append_perturbation("blue sky"), Arch::dot, s.vocab, 24);
  const auto a = patch_blocks(model, pair, Site::resid_post, 1), b = patch_blocks(model, pair, Site::resid_post, 4);
  CHECK(a.matrix.values == b.matrix.values);
  CHECK(a.matrix.patched_scores == b.matrix.patched_scores);
}

TEST_CASE("spec range errors") {
  Setup s;
  std::mt19937_64 rng(69);
  const CatModel model = fx::cat_model(s.config, 14);
  const PairedInput pair = fx::random_pair(rng, append_perturbation("sky"), Arch::cat, s.vocab, 24);
  const PairRun runs = run_pair(model, pair);
  const auto& donor = runs.cache(Side::perturbed);
  CHECK_THROWS_AS(run_patched(model, pair, HeadAllPos{5, 0}, donor, Side::baseline), std::out_of_range);
  CHECK_THROWS_AS(run_patched(model, pair, HeadAllPos{0, 9}, donor, Side::baseline), std::out_of_range);
  CHECK_THROWS_AS(run_patched(model, pair, HeadByPos{0, 0, {999}}, donor, Side::baseline), std::out_of_range);
  CHECK_THROWS_AS(run_patched(model, pair, BlockByPos{Site::mlp_out, 0, {999}}, donor, Side::baseline),
                  std::out_of_range);
  const PairedInput other = fx::random_pair(rng, append_perturbation("sky"), Arch::cat, s.vocab, 24);
  const PairRun other_runs = run_pair(model, other);
  if (other.perturbed.size() != pair.perturbed.size()) {
    CHECK_THROWS_AS(run_patched(model, pair, HeadAllPos{0, 0}, other_runs.cache(Side::perturbed), Side::baseline),
                    std::invalid_argument);
  }
}

TEST_CASE("planted model: insertion column dominates late-layer block patching") {
  Setup s;
  Weights w = random_init(s.config, 15);
  // layer 0 moves nothing between positions
  w.layers[0].w_v = Tensor(w.layers[0].w_v.shape());
  w.layers[0].b_v = Tensor(w.layers[0].b_v.shape());
  auto weights = std::make_shared<const Weights>(w);
  CatModel model{weights, s.config, random_classifier(s.config.d_model, 1, 16)};

  std::mt19937_64 rng(70);
  PairedInput pair = fx::random_pair(rng, append_perturbation("sky"), Arch::cat, s.vocab, 24);
  PairRun runs = run_pair(model, pair);
  if (runs.perturbed_score > runs.baseline_score) {
    for (float& v : model.head.weight.data()) v = -v;
    for (float& v : model.head.bias.data()) v = -v;
    runs = run_pair(model, pair);
  }
  REQUIRE(runs.rerun() == Side::perturbed);
  const std::size_t ins = pair.insert_positions.front();
  const PairPatchResult r = patch_blocks(model, pair, Site::resid_pre);
  const EffectMatrix& m = r.matrix;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    if (c == ins) continue;
    CHECK(m.value(1, c) == 0.0);
    CHECK(std::fabs(m.value(1, ins)) > 1e-3);
  }
}

TEST_CASE("aggregate") {
  EffectMatrix a;
  a.row_labels = {"0", "1"};
  a.col_labels = {"0", "1"};
  a.values = {0, 0, 0, 0};
  a.patched_scores = {1, 1, 1, 1};
  a.counts = {1, 1, 1, 1};
  EffectMatrix b = a;
  b.values = {1, 1, 1, 1};
  b.patched_scores = {3, 3, 3, 3};
  const EffectMatrix one = aggregate(std::vector<EffectMatrix>{a});
  CHECK(one.values == a.values);
  const EffectMatrix two = aggregate(std::vector<EffectMatrix>{a, b});
  CHECK(two.values == std::vector<double>{0.5, 0.5, 0.5, 0.5});
  CHECK(two.patched_scores == std::vector<double>{2, 2, 2, 2});
  CHECK(two.counts == std::vector<std::size_t>{2, 2, 2, 2});
  CHECK_THROWS(aggregate(std::vector<EffectMatrix>{}));

  EffectMatrix p = a, q = a;
  p.col_axis = q.col_axis = "position";
  q.col_labels = {"0", "1", "2"};
  q.values = {1, 1, 1, 1, 1, 1};
  q.patched_scores = q.values;
  q.counts = {1, 1, 1, 1, 1, 1};
  const EffectMatrix t = aggregate(std::vector<EffectMatrix>{p, q});
  CHECK(t.cols() == 2);
  CHECK(t.values == std::vector<double>{0.5, 0.5, 0.5, 0.5});
  EffectMatrix wrong = a;
  wrong.col_labels = {"0", "1", "2"};
  wrong.values.resize(6);
  wrong.patched_scores.resize(6);
  wrong.counts.assign(6, 1);
  CHECK_THROWS(aggregate(std::vector<EffectMatrix>{a, wrong}));
}
