#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "patchlens/perturb.hpp"
#include "fixtures.hpp"

using namespace patchlens;

namespace {

Dataset write_and_load(const fx::TempDir& dir, const std::string& q, const std::string& d, const std::string& r) {
  fx::write_file(dir / "q.tsv", q);
  fx::write_file(dir / "d.tsv", d);
  fx::write_file(dir / "r.txt", r);
  return load_dataset(dir / "q.tsv", dir / "d.tsv", dir / "r.txt");
}

std::map<int, std::size_t> grade_counts(const std::vector<Qrel>& qrels) {
  std::map<int, std::size_t> out;
  for (const auto& q : qrels) ++out[q.grade];
  return out;
}

std::vector<Qrel> graded(std::map<int, std::size_t> counts) {
  std::vector<Qrel> out;
  for (auto [g, n] : counts)
    for (std::size_t i = 0; i < n; ++i) out.push_back({"q" + std::to_string(g), "d" + std::to_string(i), g});
  return out;
}

void check_pair(const PairedInput& p, const Vocab& vocab) {
  REQUIRE(p.baseline.size() == p.perturbed.size());
  std::vector<bool> ins(p.perturbed.size(), false);
  for (std::size_t pos : p.insert_positions) {
    REQUIRE(pos < ins.size());
    ins[pos] = true;
    CHECK(p.baseline.ids[pos] == vocab.pad());
  }
  for (std::size_t i = 0; i < ins.size(); ++i) {
    if (!ins[i]) {
      CHECK(p.baseline.ids[i] == p.perturbed.ids[i]);
      CHECK(p.baseline.type_ids[i] == p.perturbed.type_ids[i]);
    }
  }
}

}  // namespace

TEST_CASE("load_dataset") {
  fx::TempDir dir;
  const Dataset ds = write_and_load(dir, "q1\tcat\nq2\tdog sky\n", "d1\ta\nd2\tb\nd3\tc c\n",
                                    "q1 0 d1 2\nq1 0 d2 0\nq2\t0\td3\t1\nq2 0 d1 3\n");
  CHECK(ds.queries.size() == 2);
  CHECK(ds.docs.size() == 3);
  CHECK(ds.qrels.size() == 4);
  CHECK(ds.qrels[2] == Qrel{"q2", "d3", 1});

  CHECK(write_and_load(dir, "q1\tcat\n", "d1\ta\n", "").qrels.empty());

  try {
    write_and_load(dir, "q1\tcat\n", "d1\ta\n", "q1 0 d9 1\n");
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("d9") != std::string::npos);
  }
  try {
    write_and_load(dir, "q1\tcat\nbroken line\n", "d1\ta\n", "");
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(write_and_load(dir, "q1\tcat\n", "d1\ta\n", "q1 0 d1 x\n"), DatasetError);
  CHECK_THROWS_AS(write_and_load(dir, "q1\tcat\nq1\tdog\n", "d1\ta\n", ""), DatasetError);
}

TEST_CASE("compute_idf formula") {
  const std::vector<std::string> docs{"apple banana", "apple cherry"};
  const IdfTable idf = compute_idf(docs);
  CHECK(idf.n_docs() == 2);
  CHECK(idf.idf("apple") == doctest::Approx(1.0));
  CHECK(idf.idf("banana") == doctest::Approx(std::log(1.5) + 1.0));
  CHECK(idf.idf("durian") == doctest::Approx(std::log(3.0) + 1.0));
  CHECK(compute_idf(std::vector<std::string>{"Apple, APPLE apple."}).df("apple") == 1);
}

TEST_CASE("compute_idf is permutation invariant and positive") {
  std::mt19937_64 rng(51);
  std::vector<std::string> docs;
  for (int i = 0; i < 30; ++i) docs.push_back(fx::random_text(rng, 1 + rng() % 10));
  const IdfTable a = compute_idf(docs);
  std::shuffle(docs.begin(), docs.end(), rng);
  const IdfTable b = compute_idf(docs);
  for (const auto& w : fx::toy_words()) {
    CHECK(a.idf(w) == b.idf(w));
    CHECK(a.idf(w) > 0.0);
  }
}

TEST_CASE("perturb_append") {
  const Vocab vocab = fx::toy_vocab();
  const PerturbResult r = perturb_append("cat sat", "dog", vocab);
  CHECK(r.text == "cat sat dog");
  CHECK(r.positions == std::vector<std::size_t>{2});
  const PerturbResult p = perturb_append("cat sat", "mechir!", vocab, InsertAt::start);
  CHECK(p.text == "mechir! cat sat");
  CHECK(p.positions == std::vector<std::size_t>{0, 1, 2});
  const PerturbResult e = perturb_append("cat sat", "", vocab);
  CHECK(e.text == "cat sat");
  CHECK(e.positions.empty());
}

TEST_CASE("tfc1") {
  const Vocab vocab = fx::toy_vocab();
  std::mt19937_64 rng(1);
  const PerturbResult r = tfc1_append("river", "the bank", rng, vocab);
  CHECK(r.text == "the bank river");
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    const auto chosen = tfc1_choose("cat dog, sky!", a);
    REQUIRE(chosen.size() == 1);
    CHECK((chosen[0] == "cat" || chosen[0] == "dog" || chosen[0] == "sky"));
    CHECK(tfc1_choose("cat dog, sky!", b) == chosen);
  }
  std::mt19937_64 g(3);
  CHECK_THROWS(tfc1_choose("", g));
  CHECK_THROWS(tfc1_choose("the", g, {"the"}));
  CHECK(tfc1_choose("the cat", g, {"the"}) == std::vector<std::string>{"cat"});
  CHECK(tfc1_choose("a b c d", g, {}, 3).size() == 3);
}

TEST_CASE("tfc1 picks terms roughly uniformly") {
  std::map<std::string, int> counts;
  for (std::uint64_t seed = 0; seed < 3000; ++seed) {
    std::mt19937_64 rng(seed);
    ++counts[tfc1_choose("cat dog sky", rng)[0]];
  }
  for (const auto& [term, n] : counts) CHECK(std::abs(n - 1000) < 150);
}

TEST_CASE("tdc") {
  const Vocab vocab = fx::toy_vocab();
  const IdfTable idf({{"a", 10}, {"b", 1}}, 20);
  CHECK(tdc_choose("a b", idf) == "b");
  const IdfTable flat({{"x", 3}, {"y", 3}}, 10);
  CHECK(tdc_choose("y x", flat) == "x");
  CHECK(tdc_choose("sky", flat) == "sky");
  CHECK(tdc_append("a b", "cat", idf, vocab).text == "cat b");
  CHECK_THROWS(tdc_choose("", idf));
  CHECK_THROWS(tdc_choose("...", idf));
}

TEST_CASE("stratified subsample counts") {
  const auto even = graded({{0, 10}, {1, 10}, {2, 10}});
  CHECK(grade_counts(stratified_subsample(even, 6, 1)) == std::map<int, std::size_t>{{0, 2}, {1, 2}, {2, 2}});
  CHECK(grade_counts(stratified_subsample(even, 7, 1)) == std::map<int, std::size_t>{{0, 2}, {1, 2}, {2, 3}});
  CHECK(grade_counts(stratified_subsample(even, 8, 1)) == std::map<int, std::size_t>{{0, 2}, {1, 3}, {2, 3}});
  const auto skewed = graded({{0, 1}, {1, 10}});
  CHECK(grade_counts(stratified_subsample(skewed, 6, 1)) == std::map<int, std::size_t>{{0, 1}, {1, 5}});
  CHECK(stratified_subsample(even, 100, 1) == even);
  CHECK(stratified_subsample(even, 30, 9) == even);
}

TEST_CASE("stratified subsample is seeded, order-preserving and without replacement") {
  const auto all = graded({{0, 20}, {1, 15}, {3, 5}});
  const auto a = stratified_subsample(all, 12, 42), b = stratified_subsample(all, 12, 42);
  CHECK(a == b);
  CHECK(a.size() == 12);
  std::size_t cursor = 0;
  for (const auto& q : a) {
    auto it = std::find(all.begin() + cursor, all.end(), q);
    REQUIRE(it != all.end());
    cursor = static_cast<std::size_t>(it - all.begin()) + 1;
  }
  bool any_differs = false;
  for (std::uint64_t s = 0; s < 10 && !any_differs; ++s) any_differs = stratified_subsample(all, 12, s) != a;
  CHECK(any_differs);
}

TEST_CASE("grade filter") {
  const auto all = graded({{0, 3}, {1, 2}, {3, 4}});
  CHECK(grade_counts(filter_grades(all, {3})) == std::map<int, std::size_t>{{3, 4}});
  CHECK(filter_grades(all, {7}).empty());
}

TEST_CASE("pair_seed") {
  CHECK(pair_seed(1, "q", "d") == pair_seed(1, "q", "d"));
  CHECK(pair_seed(1, "q", "d") != pair_seed(2, "q", "d"));
  CHECK(pair_seed(1, "q1", "d") != pair_seed(1, "q", "1d"));
}

TEST_CASE("make_pair structure") {
  const Vocab vocab = fx::toy_vocab();
  PerturbContext ctx{&vocab, nullptr, 0};
  const PairedInput p = make_pair("q", "d", "cat", "the dog ran", append_perturbation("blue sky"), Arch::cat,
                                  vocab, 32, ctx);
  check_pair(p, vocab);
  CHECK(p.insert_positions == std::vector<std::size_t>{6, 7});
  CHECK(p.perturbed.ids.front() == vocab.cls());
  CHECK(std::count(p.perturbed.ids.begin(), p.perturbed.ids.end(), vocab.sep()) == 2);
  CHECK(std::count(p.baseline.ids.begin(), p.baseline.ids.end(), vocab.sep()) == 2);
  CHECK_FALSE(p.query.has_value());

  const PairedInput same = make_pair("q", "d", "cat", "the dog ran", identity_perturbation(), Arch::dot, vocab, 32,
                                     ctx);
  CHECK(same.baseline == same.perturbed);
  REQUIRE(same.query.has_value());
  CHECK(same.query->ids.front() == vocab.cls());
}

TEST_CASE("make_pair keeps inserted tokens under truncation") {
  const Vocab vocab = fx::toy_vocab();
  PerturbContext ctx{&vocab, nullptr, 0};
  const PairedInput p = make_pair("q", "d", "cat", "the dog ran fast on the mat", append_perturbation("sky"),
                                  Arch::cat, vocab, 8, ctx);
  check_pair(p, vocab);
  CHECK(p.perturbed.size() == 8);
  REQUIRE(p.insert_positions.size() == 1);
  CHECK(p.perturbed.ids[p.insert_positions[0]] == vocab.find("sky"));
}

TEST_CASE("configurable filler token") {
  const Vocab vocab = fx::toy_vocab();
  PerturbContext ctx{&vocab, nullptr, 0, vocab.mask()};
  const PairedInput p = make_pair("q", "d", "cat", "dog", append_perturbation("sky"), Arch::cat, vocab, 16, ctx);
  CHECK(p.baseline.ids[p.insert_positions[0]] == vocab.mask());
}

TEST_CASE("generated pairs satisfy the alignment invariants") {
  const Vocab vocab = fx::toy_vocab();
  std::mt19937_64 rng(55);
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back(fx::random_text(rng, 5));
  const IdfTable idf = compute_idf(corpus);
  const std::vector<Perturbation> perts = {append_perturbation("mechir!"), append_perturbation("blue sky", InsertAt::start),
                                           tfc1_perturbation(), tdc_perturbation()};
  for (int i = 0; i < 200; ++i) {
    const Perturbation& p = perts[i % perts.size()];
    const Arch arch = i % 2 ? Arch::dot : Arch::cat;
    const PairedInput pair = fx::random_pair(rng, p, arch, vocab, 8 + rng() % 16, &idf);
    check_pair(pair, vocab);
    for (std::size_t pos : pair.insert_positions) CHECK(pair.perturbed.ids[pos] != vocab.pad());
  }
}

TEST_CASE("build_pairs over a dataset") {
  fx::TempDir dir;
  fx::write_corpus(dir.path(), 4, 3, 5);
  const Vocab vocab = load_vocab(dir / "vocab.txt");
  const Dataset ds = load_dataset(dir / "queries.tsv", dir / "docs.tsv", dir / "qrels.txt");
  const IdfTable idf = compute_idf(ds.docs);
  const auto pairs = build_pairs(ds, tdc_perturbation(), Arch::cat, vocab, ds.qrels, 32, 7, &idf);
  CHECK(pairs.size() == ds.qrels.size());
  for (const auto& p : pairs) check_pair(p, vocab);
  const auto again = build_pairs(ds, tfc1_perturbation(), Arch::dot, vocab, ds.qrels, 32, 7);
  const auto again2 = build_pairs(ds, tfc1_perturbation(), Arch::dot, vocab, ds.qrels, 32, 7);
  for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i].perturbed == again2[i].perturbed);
}
