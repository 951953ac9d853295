#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "page/metrics.hpp"
#include "page/rng.hpp"

using namespace page;

namespace {

EmbeddingTable unit_axes() {
  EmbeddingTable t;
  t.dim = 3;
  t.vectors["a"] = {1.0, 0.0, 0.0};
  t.vectors["b"] = {0.0, 1.0, 0.0};
  t.vectors["c"] = {0.0, 0.0, 1.0};
  return t;
}

Sentence words(std::initializer_list<const char*> ws) {
  Sentence s;
  for (const char* w : ws) s.emplace_back(w);
  return s;
}

}  // namespace

TEST_CASE("rouge on identical sentences is one for every variant") {
  Sentence s = words({"the", "tv", "zooms", "well"});
  CHECK(rouge_f1(s, s, RougeVariant::kRouge1) == 1.0);
  CHECK(rouge_f1(s, s, RougeVariant::kRouge2) == 1.0);
  CHECK(rouge_f1(s, s, RougeVariant::kRougeL) == 1.0);
}

TEST_CASE("rouge hand counts") {
  Sentence cand = words({"a", "b", "c"});
  Sentence ref = words({"a", "d", "c"});
  CHECK(rouge_f1(cand, ref, RougeVariant::kRouge1) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rouge_f1(cand, ref, RougeVariant::kRouge2) == 0.0);

  // LCS of "a b c" vs "a c" is 2: P=2/3, R=1, F1=0.8
  CHECK(rouge_f1(cand, words({"a", "c"}), RougeVariant::kRougeL) ==
        doctest::Approx(0.8).epsilon(1e-12));

  // repeated candidate tokens are clipped by the reference count
  CHECK(rouge_f1(words({"a", "a", "a"}), words({"a"}),
                 RougeVariant::kRouge1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("rouge empty edge cases") {
  Sentence s = words({"a"});
  for (RougeVariant v :
       {RougeVariant::kRouge1, RougeVariant::kRouge2, RougeVariant::kRougeL}) {
    CHECK(rouge_f1({}, s, v) == 0.0);
    CHECK(rouge_f1(s, {}, v) == 0.0);
    CHECK(rouge_f1({}, {}, v) == 0.0);
  }
  // single-token sentences have no bigrams
  CHECK(rouge_f1(s, s, RougeVariant::kRouge2) == 0.0);
}

TEST_CASE("rouge f1 is symmetric in candidate and reference") {
  Rng rng(11);
  const char* pool[] = {"u", "v", "w", "x", "y", "z"};
  for (int trial = 0; trial < 50; ++trial) {
    Sentence a, b;
    for (std::uint64_t i = 0, n = 1 + rng.below(6); i < n; ++i)
      a.emplace_back(pool[rng.below(6)]);
    for (std::uint64_t i = 0, n = 1 + rng.below(6); i < n; ++i)
      b.emplace_back(pool[rng.below(6)]);
    for (RougeVariant v : {RougeVariant::kRouge1, RougeVariant::kRouge2,
                           RougeVariant::kRougeL})
      CHECK(rouge_f1(a, b, v) == rouge_f1(b, a, v));
  }
}

TEST_CASE("embedding similarity goldens") {
  EmbeddingTable t = unit_axes();
  Sentence ab = words({"a", "b"});

  for (EsMode m : {EsMode::kExtreme, EsMode::kGreedy, EsMode::kAverage}) {
    CHECK(embedding_similarity(ab, ab, t, m) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(embedding_similarity(words({"a"}), words({"b"}), t, m) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }

  // greedy on ("a b", "a"): forward (1+0)/2, backward 1, mean 0.75
  CHECK(embedding_similarity(ab, words({"a"}), t, EsMode::kGreedy) ==
        doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("extreme pooling keeps the sign of the largest magnitude") {
  EmbeddingTable t;
  t.dim = 2;
  t.vectors["p"] = {1.0, -3.0};
  t.vectors["q"] = {2.0, 1.0};
  // pooled candidate = (2, -3); reference pools to (1, -3)
  const double want =
      (2.0 * 1.0 + 9.0) / (std::sqrt(4.0 + 9.0) * std::sqrt(1.0 + 9.0));
  CHECK(embedding_similarity(words({"p", "q"}), words({"p"}), t,
                             EsMode::kExtreme) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("unknown tokens are skipped and fully unknown sides score zero") {
  EmbeddingTable t = unit_axes();
  CHECK(embedding_similarity(words({"a", "zzz"}), words({"a"}), t,
                             EsMode::kAverage) ==
        doctest::Approx(1.0).epsilon(1e-12));
  for (EsMode m : {EsMode::kExtreme, EsMode::kGreedy, EsMode::kAverage}) {
    CHECK(embedding_similarity(words({"zzz"}), words({"a"}), t, m) == 0.0);
    CHECK(embedding_similarity({}, words({"a"}), t, m) == 0.0);
  }
}

TEST_CASE("embedding file loads tokens and rejects ragged rows") {
  const std::string path = "/tmp/page_emb_test.txt";
  {
    std::ofstream out(path, std::ios::trunc);
    out << "alpha 1.0 0.0\n";
    out << "bravo 0.5 -0.25\n";
    out << "\n";
  }
  EmbeddingTable t = load_embeddings(path);
  CHECK(t.dim == 2);
  CHECK(t.vectors.size() == 2);
  CHECK(t.vectors.at("bravo")[1] == -0.25);

  {
    std::ofstream out(path, std::ios::trunc);
    out << "alpha 1.0 0.0\n";
    out << "bravo 0.5\n";
  }
  CHECK_THROWS_AS(load_embeddings(path), std::runtime_error);
  CHECK_THROWS_AS(load_embeddings("/tmp/page_emb_missing.txt"),
                  std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("idf follows ln(N over 1 plus df)") {
  std::vector<Sentence> answers = {
      words({"zoom", "lens"}),
      words({"zoom", "zoom", "tv"}),  // repeats count once per answer
      words({"tv"}),
      words({"stand"}),
  };
  IdfTable idf = build_idf(answers);
  CHECK(idf.at("zoom") == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
  CHECK(idf.at("tv") == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
  CHECK(idf.at("lens") == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(idf.at("never-seen") ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("persona coverage closed forms") {
  IdfTable idf;
  idf.values = {{"w", 2.0}, {"u", 0.5}, {"v", 1.5}};
  idf.fallback = 1.0;

  // one example, one snippet, shared set {w} with idf 2
  CHECK(persona_coverage({words({"w", "x"})}, {{words({"w", "y"})}}, idf) ==
        doctest::Approx(2.0).epsilon(1e-12));

  // max over snippets: S=0.5 for {u}, S=1.5 for {v}
  CHECK(persona_coverage({words({"u", "v"})},
                         {{words({"u"}), words({"v"})}}, idf) ==
        doctest::Approx(1.5).epsilon(1e-12));

  // nothing shared anywhere
  CHECK(persona_coverage({words({"x"})}, {{words({"y"})}}, idf) == 0.0);

  // shared set averages idf over distinct shared words
  CHECK(persona_overlap(words({"w", "u", "u"}), words({"u", "w", "z"}), idf) ==
        doctest::Approx((2.0 + 0.5) / 2.0).epsilon(1e-12));
}

TEST_CASE("persona coverage never drops when a snippet is added") {
  IdfTable idf;
  idf.fallback = 0.7;
  idf.values = {{"m", 1.3}, {"n", 0.2}};
  Rng rng(13);
  const char* pool[] = {"m", "n", "o", "p"};
  for (int trial = 0; trial < 30; ++trial) {
    Sentence answer;
    for (std::uint64_t i = 0, n = 1 + rng.below(4); i < n; ++i)
      answer.emplace_back(pool[rng.below(4)]);
    std::vector<Sentence> snippets;
    double prev = 0.0;
    for (int s = 0; s < 4; ++s) {
      Sentence snip;
      for (std::uint64_t i = 0, n = 1 + rng.below(3); i < n; ++i)
        snip.emplace_back(pool[rng.below(4)]);
      snippets.push_back(snip);
      const double cur = persona_coverage({answer}, {snippets}, idf);
      CHECK(cur >= prev);
      prev = cur;
    }
  }
}

TEST_CASE("users distinct pools ngrams over the group") {
  // two identical 3-token answers: 3 distinct of 6 total unigrams
  std::vector<Sentence> twins = {words({"a", "b", "c"}), words({"a", "b", "c"})};
  CHECK(users_distinct(twins, 1) == doctest::Approx(0.5).epsilon(1e-12));

  // token-disjoint answers stay fully distinct
  std::vector<Sentence> disjoint = {words({"a", "b"}), words({"c", "d"})};
  CHECK(users_distinct(disjoint, 1) == 1.0);
  CHECK(users_distinct(disjoint, 2) == 1.0);

  // a single answer with unique tokens
  CHECK(users_distinct({words({"p", "q", "r"})}, 1) == 1.0);

  // answers shorter than n contribute nothing
  std::vector<Sentence> shorts = {words({"a"}), words({"b", "c"})};
  CHECK(users_distinct(shorts, 2) == 1.0);
  CHECK(users_distinct({words({"a"})}, 2) == 0.0);

  // dataset score averages over groups
  std::vector<std::vector<Sentence>> groups = {twins, disjoint};
  CHECK(users_distinct(groups, 1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("users distinct ignores answer order inside a group") {
  Rng rng(17);
  const char* pool[] = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Sentence> group;
    for (int k = 0; k < 4; ++k) {
      Sentence s;
      for (std::uint64_t i = 0, n = 1 + rng.below(4); i < n; ++i)
        s.emplace_back(pool[rng.below(4)]);
      group.push_back(s);
    }
    std::vector<Sentence> shuffled = group;
    rng.shuffle(shuffled);
    for (int n = 1; n <= 2; ++n)
      CHECK(users_distinct(group, n) == users_distinct(shuffled, n));
  }
}

TEST_CASE("bigram probabilities sum to one for any context") {
  BigramLM lm = fit_user_lm({words({"x", "y"}), words({"y", "x"})},
                            {words({"x", "x"})}, 0.5);
  for (const std::string& ctx :
       {std::string("x"), std::string("y"), BigramLM::kBos,
        std::string("unseen")}) {
    double total = lm.prob(ctx, "x") + lm.prob(ctx, "y");
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("mix zero reproduces the global model exactly") {
  std::vector<Sentence> corpus = {words({"x", "y", "x"}), words({"y"})};
  BigramLM global = fit_user_lm(corpus, {}, 0.0);
  BigramLM mixed = fit_user_lm(corpus, {words({"x", "x", "x"})}, 0.0);
  for (const std::string& ctx : {std::string("x"), BigramLM::kBos})
    for (const std::string& w : {std::string("x"), std::string("y")})
      CHECK(global.prob(ctx, w) == mixed.prob(ctx, w));
}

TEST_CASE("mix one makes a drilled bigram dominant") {
  std::vector<Sentence> corpus = {words({"x", "y"}), words({"y", "z"}),
                                  words({"z", "x"})};
  BigramLM lm = fit_user_lm(
      corpus, {words({"x", "z", "x", "z", "x", "z"})}, 1.0);
  CHECK(lm.prob("x", "z") > lm.prob("x", "y"));
  CHECK(lm.prob("x", "z") > lm.prob("x", "x"));
  CHECK(lm.prob("x", "z") > 0.9);
}

TEST_CASE("uniform model scores perplexity equal to vocabulary size") {
  BigramLM lm(0.01);
  for (int i = 0; i < 390; ++i) lm.add_vocab("w" + std::to_string(i));
  CHECK(user_perplexity(words({"w1", "w2", "w3"}), lm) == 390.0);
  CHECK(user_perplexity(words({"not-in-vocab", "w5"}), lm) == 390.0);
}

TEST_CASE("deterministic model scores perplexity one") {
  BigramLM lm(0.01);
  lm.add_vocab("a");
  lm.observe_global(words({"a", "a", "a"}));
  CHECK(user_perplexity(words({"a", "a"}), lm) == doctest::Approx(1.0));
}

TEST_CASE("perplexity hand computation with bos context") {
  // vocab {x, y}; single observation "x y" gives counts
  // (bos→x)=1, (x→y)=1 with context totals 1 each, V=2, k=0.01
  BigramLM lm = fit_user_lm({words({"x", "y"})}, {}, 0.0);
  const double p = 1.01 / 1.02;
  CHECK(lm.prob(BigramLM::kBos, "x") == doctest::Approx(p).epsilon(1e-15));
  CHECK(lm.prob("x", "y") == doctest::Approx(p).epsilon(1e-15));
  CHECK(user_perplexity(words({"x", "y"}), lm) ==
        doctest::Approx(1.02 / 1.01).epsilon(1e-12));
  // halving every step probability doubles the perplexity
  CHECK(user_perplexity({}, lm) == 1.0);
}

TEST_CASE("metrics are pure functions") {
  Sentence a = words({"a", "b", "c"});
  Sentence b = words({"a", "c"});
  CHECK(rouge_f1(a, b, RougeVariant::kRougeL) ==
        rouge_f1(a, b, RougeVariant::kRougeL));
  EmbeddingTable t = unit_axes();
  CHECK(embedding_similarity(a, b, t, EsMode::kGreedy) ==
        embedding_similarity(a, b, t, EsMode::kGreedy));
}
