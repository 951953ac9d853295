#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "doctest.h"
#include "page/topic.hpp"

using namespace page;
using namespace page::ad;

namespace {

TopicConfig small_cfg(int k = 3, int bow = 12, int d_h = 8) {
  TopicConfig cfg;
  cfg.clusters = k;
  cfg.bow_size = bow;
  cfg.hidden = 6;
  cfg.d_h = d_h;
  cfg.top_n = 5;
  return cfg;
}

}  // namespace

TEST_CASE("zero counts with zero biases give a zero gaussian") {
  ParamStore store;
  Rng rng(1);
  TopicModel tm(store, small_cfg(), rng);
  Tensor d = Tensor::zeros({12});
  auto [mu, logvar] = tm.infer_gaussian(d);
  CHECK(mu.shape() == Shape{3});
  CHECK(logvar.shape() == Shape{3});
  for (double v : mu.values()) CHECK(v == 0.0);
  for (double v : logvar.values()) CHECK(v == 0.0);
}

TEST_CASE("evaluation mode is deterministic with x = mu") {
  ParamStore store;
  Rng rng(2);
  TopicModel tm(store, small_cfg(), rng);
  std::vector<double> counts(12, 0.0);
  counts[3] = 2;
  counts[7] = 1;
  TopicState a = tm.forward(counts, {});
  TopicState b = tm.forward(counts, {});
  for (int i = 0; i < 3; ++i) {
    CHECK(a.x.values()[i] == a.mu.values()[i]);
    CHECK(a.theta.values()[i] == b.theta.values()[i]);
  }
}

TEST_CASE("theta is a distribution and epsilon shifts it") {
  ParamStore store;
  Rng rng(3);
  TopicModel tm(store, small_cfg(), rng);
  std::vector<double> counts(12, 1.0);
  TopicState eval = tm.forward(counts, {});
  double s = 0.0;
  for (double v : eval.theta.values()) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::fabs(s - 1.0) < 1e-6);

  TopicState sampled = tm.forward(counts, {1.5, -0.5, 0.25});
  bool moved = false;
  for (int i = 0; i < 3; ++i)
    moved |= sampled.theta.values()[i] != eval.theta.values()[i];
  CHECK(moved);
}

TEST_CASE("topic-word matrix rows are distributions") {
  ParamStore store;
  Rng rng(4);
  TopicModel tm(store, small_cfg(), rng);
  Tensor beta = tm.topic_word_matrix();
  CHECK(beta.shape() == Shape{3, 12});
  for (int r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int c = 0; c < 12; ++c) s += beta.values()[r * 12 + c];
    CHECK(std::fabs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("zero preference row gives a uniform topic-word row") {
  ParamStore store;
  Rng rng(5);
  TopicModel tm(store, small_cfg(), rng);
  Tensor t = store.get("ppm.t");
  for (int j = 0; j < 8; ++j) t.values()[0 * 8 + j] = 0.0;  // row orthogonal to V
  Tensor beta = tm.topic_word_matrix();
  for (int c = 0; c < 12; ++c)
    CHECK(beta.values()[c] == doctest::Approx(1.0 / 12).epsilon(1e-9));
}

TEST_CASE("reconstruction is a convex combination of beta rows") {
  ParamStore store;
  Rng rng(6);
  TopicModel tm(store, small_cfg(), rng);
  Tensor beta = tm.topic_word_matrix();

  SUBCASE("one-hot theta picks its beta row") {
    Tensor theta = Tensor::from({3}, {0.0, 1.0, 0.0});
    Tensor d_prime = tm.reconstruct(theta, beta);
    for (int c = 0; c < 12; ++c)
      CHECK(d_prime.values()[c] ==
            doctest::Approx(beta.values()[12 + c]).epsilon(1e-12));
  }
  SUBCASE("uniform theta gives column means") {
    Tensor theta = Tensor::full({3}, 1.0 / 3);
    Tensor d_prime = tm.reconstruct(theta, beta);
    double s = 0.0;
    for (int c = 0; c < 12; ++c) {
      const double want =
          (beta.values()[c] + beta.values()[12 + c] + beta.values()[24 + c]) / 3;
      CHECK(d_prime.values()[c] == doctest::Approx(want).epsilon(1e-9));
      s += d_prime.values()[c];
    }
    CHECK(std::fabs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("persona memories follow theta and descending d-prime") {
  ParamStore store;
  Rng rng(7);
  TopicModel tm(store, small_cfg(), rng);
  Tensor theta = Tensor::from({3}, {0.0, 0.0, 1.0});
  std::vector<double> dp(12, 0.0);
  dp[5] = 0.5;
  dp[2] = 0.3;
  dp[9] = 0.2;
  Tensor d_prime = Tensor::from({12}, dp);
  Tensor m_t, m_p;
  std::vector<int> sel;
  tm.persona_memories(theta, d_prime, 5, m_t, m_p, sel);

  CHECK(m_t.shape() == Shape{3, 8});
  // one-hot theta: only row 2 nonzero and equal to T row 2
  const auto& tvals = store.get("ppm.t").values();
  for (int j = 0; j < 8; ++j) {
    CHECK(m_t.values()[0 * 8 + j] == 0.0);
    CHECK(m_t.values()[1 * 8 + j] == 0.0);
    CHECK(m_t.values()[2 * 8 + j] == doctest::Approx(tvals[2 * 8 + j]));
  }

  REQUIRE(sel.size() == 5);
  CHECK(sel[0] == 5);
  CHECK(sel[1] == 2);
  CHECK(sel[2] == 9);
  // remaining ties at 0.0 keep ascending id order (stable sort)
  CHECK(sel[3] == 0);
  CHECK(sel[4] == 1);
  CHECK(m_p.shape() == Shape{5, 8});
  const auto& vvals = store.get("ppm.v").values();
  for (int j = 0; j < 8; ++j)
    CHECK(m_p.values()[j] == doctest::Approx(0.5 * vvals[5 * 8 + j]));
}

TEST_CASE("literal memory variant pools to single rows") {
  ParamStore store;
  Rng rng(8);
  TopicConfig cfg = small_cfg();
  cfg.literal_memories = true;
  TopicModel tm(store, cfg, rng);
  std::vector<double> counts(12, 1.0);
  TopicState s = tm.forward(counts, {});
  CHECK(s.m_t.shape() == Shape{1, 8});
  CHECK(s.m_p.shape() == Shape{1, 8});
  CHECK(s.selected.empty());
}

TEST_CASE("ppm loss closed forms") {
  ParamStore store;
  Rng rng(9);
  TopicModel tm(store, small_cfg(2, 3, 4), rng);

  SUBCASE("standard normal posterior has zero KL") {
    Tensor d = Tensor::zeros({3});
    Tensor theta = Tensor::from({2}, {0.5, 0.5});
    Tensor beta = Tensor::from({2, 3}, {0.2, 0.3, 0.5, 0.4, 0.4, 0.2});
    Tensor mu = Tensor::zeros({2});
    Tensor logvar = Tensor::zeros({2});
    Tensor loss = tm.ppm_loss(d, theta, beta, mu, logvar);
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("unit mean unit variance contributes one half per dim") {
    Tensor d = Tensor::zeros({3});
    Tensor theta = Tensor::from({2}, {0.5, 0.5});
    Tensor beta = Tensor::from({2, 3}, {0.2, 0.3, 0.5, 0.4, 0.4, 0.2});
    Tensor mu = Tensor::from({2}, {1.0, 0.0});
    Tensor logvar = Tensor::zeros({2});
    CHECK(tm.ppm_loss(d, theta, beta, mu, logvar).item() ==
          doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("single observed word costs its negative log reconstruction") {
    Tensor d = Tensor::from({3}, {0.0, 1.0, 0.0});
    Tensor theta = Tensor::from({2}, {1.0, 0.0});
    Tensor beta = Tensor::from({2, 3}, {0.2, 0.3, 0.5, 0.4, 0.4, 0.2});
    Tensor mu = Tensor::zeros({2});
    Tensor logvar = Tensor::zeros({2});
    CHECK(tm.ppm_loss(d, theta, beta, mu, logvar).item() ==
          doctest::Approx(-std::log(0.3)).epsilon(1e-12));
  }
  SUBCASE("zero reconstruction probability is clamped, not infinite") {
    Tensor d = Tensor::from({3}, {1.0, 0.0, 0.0});
    Tensor theta = Tensor::from({2}, {1.0, 0.0});
    Tensor beta = Tensor::from({2, 3}, {0.0, 0.5, 0.5, 0.4, 0.4, 0.2});
    Tensor mu = Tensor::zeros({2});
    Tensor logvar = Tensor::zeros({2});
    const double loss = tm.ppm_loss(d, theta, beta, mu, logvar).item();
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(1e-10)));
  }
}

TEST_CASE("full ppm gradient passes finite differences") {
  ParamStore store;
  Rng rng(10);
  TopicModel tm(store, small_cfg(3, 8, 6), rng);
  std::vector<double> counts{0, 2, 1, 0, 0, 3, 0, 1};
  std::vector<double> eps{0.3, -0.8, 0.5};  // frozen draw
  const double err = grad_check(
      [&]() {
        Tensor d = Tensor::from({8}, counts);
        auto [mu, logvar] = tm.infer_gaussian(d);
        auto [x, theta] = tm.sample_theta(mu, logvar, eps);
        (void)x;
        return tm.ppm_loss(d, theta, tm.topic_word_matrix(), mu, logvar);
      },
      store, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("top words rank by weight then token") {
  BowVocab vocab;
  for (const char* w : {"delta", "alpha", "echo", "bravo"}) vocab.add(w);
  SUBCASE("weights dominate") {
    Tensor beta = Tensor::from({1, 4}, {0.1, 0.2, 0.4, 0.3});
    auto words = top_words(beta, 0, 3, vocab);
    CHECK(words == std::vector<std::string>{"echo", "bravo", "alpha"});
  }
  SUBCASE("uniform row falls back to lexicographic order") {
    Tensor beta = Tensor::from({1, 4}, {0.25, 0.25, 0.25, 0.25});
    auto words = top_words(beta, 0, 4, vocab);
    CHECK(words ==
          std::vector<std::string>{"alpha", "bravo", "delta", "echo"});
  }
  SUBCASE("k of vocab size is a permutation") {
    Tensor beta = Tensor::from({1, 4}, {0.4, 0.1, 0.3, 0.2});
    auto words = top_words(beta, 0, 4, vocab);
    std::set<std::string> uniq(words.begin(), words.end());
    CHECK(uniq.size() == 4);
  }
}

TEST_CASE("gsm learns to separate two disjoint word blocks") {
  ParamStore store;
  Rng rng(11);
  TopicConfig cfg = small_cfg(2, 10, 6);
  cfg.top_n = 10;
  TopicModel tm(store, cfg, rng);
  // users 0..3 use words 0..4, users 4..7 use words 5..9
  std::vector<std::vector<double>> users;
  for (int u = 0; u < 8; ++u) {
    std::vector<double> c(10, 0.0);
    const int base = u < 4 ? 0 : 5;
    for (int t = 0; t < 20; ++t) c[base + rng.below(5)] += 1.0;
    users.push_back(c);
  }
  AdamConfig adam;
  adam.lr = 5e-3;
  double first = 0.0, last = 0.0;
  for (int epoch = 0; epoch < 120; ++epoch) {
    double total = 0.0;
    for (const auto& counts : users) {
      std::vector<double> eps(2);
      for (auto& e : eps) e = rng.normal();
      Tensor d = Tensor::from({10}, counts);
      auto [mu, logvar] = tm.infer_gaussian(d);
      auto [x, theta] = tm.sample_theta(mu, logvar, eps);
      (void)x;
      Tensor loss = tm.ppm_loss(d, theta, tm.topic_word_matrix(), mu, logvar);
      total += loss.item();
      backward(loss);
      store.adam_step(adam);
    }
    if (epoch == 0) first = total;
    last = total;
  }
  CHECK(last < 0.8 * first);

  // clusters lean toward different blocks
  Tensor beta = tm.topic_word_matrix();
  auto mass = [&](int row, int lo) {
    double s = 0.0;
    for (int c = lo; c < lo + 5; ++c) s += beta.values()[row * 10 + c];
    return s;
  };
  const double r0_low = mass(0, 0), r1_low = mass(1, 0);
  CHECK(std::fabs(r0_low - r1_low) > 0.2);
}
