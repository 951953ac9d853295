#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "page/optim.hpp"

using namespace page::ad;
using page::Rng;

namespace {

std::string tmp_path(const char* stem) {
  return std::string("/tmp/page_optim_test_") + stem + ".ckpt";
}

}  // namespace

TEST_CASE("adam first step moves a unit-gradient scalar by about lr") {
  Rng rng(1);
  ParamStore store;
  Tensor w = store.create("w", {1}, Init::Zeros, rng);
  w.grad()[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  store.adam_step(cfg);
  // mhat = 1, vhat = 1 after bias correction, so the step is lr/(1+eps)
  CHECK(w.values()[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(w.grad()[0] == 0.0);
  CHECK(store.step_count() == 1);
}

TEST_CASE("gradient clipping rescales the global norm") {
  Rng rng(1);
  ParamStore store;
  Tensor a = store.create("a", {2}, Init::Zeros, rng);
  Tensor b = store.create("b", {1}, Init::Zeros, rng);
  a.grad() = {3.0, 0.0};
  b.grad() = {4.0};
  CHECK(store.grad_norm() == doctest::Approx(5.0));
  AdamConfig cfg;
  cfg.lr = 1.0;
  cfg.clip = 1.0;
  // after rescale by 1/5: grads (0.6, 0, 0.8); each step ~ lr in magnitude
  // direction-wise but sizes equalized by adam; just check finiteness and
  // that the zero-grad coordinate stays put
  store.adam_step(cfg);
  CHECK(a.values()[1] == 0.0);
  CHECK(a.values()[0] < 0.0);
  CHECK(b.values()[0] < 0.0);
}

TEST_CASE("non-finite gradient reports the parameter name") {
  Rng rng(1);
  ParamStore store;
  store.create("fine", {2}, Init::Zeros, rng);
  Tensor bad = store.create("enc.w_q", {2}, Init::Zeros, rng);
  bad.grad()[1] = std::nan("");
  bool threw = false;
  try {
    store.adam_step(AdamConfig{});
  } catch (const std::exception& e) {
    threw = true;
    CHECK(std::string(e.what()).find("enc.w_q") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("adam converges on a quadratic") {
  Rng rng(2);
  ParamStore store;
  Tensor w = store.create("w", {3}, Init::Normal, rng);
  AdamConfig cfg;
  cfg.lr = 0.05;
  const Tensor target = Tensor::from({3}, {1.0, -2.0, 0.5});
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 400; ++it) {
    Tensor d = sub(w, target);
    Tensor loss = sum(mul(d, d));
    if (it == 0) first = loss.item();
    last = loss.item();
    backward(loss);
    store.adam_step(cfg);
  }
  CHECK(last < first * 1e-4);
}

TEST_CASE("checkpoint roundtrip is exact for f64") {
  Rng rng(7);
  ParamStore store;
  store.create("alpha", {2, 3}, Init::Normal, rng);
  store.create("beta", {4}, Init::XavierUniform, rng);
  nlohmann::json meta;
  meta["d_h"] = 512;
  meta["note"] = "roundtrip";
  const std::string path = tmp_path("f64");
  store.save(path, meta);

  ParamStore other;
  Rng rng2(99);
  other.create("alpha", {2, 3}, Init::Normal, rng2);
  other.create("beta", {4}, Init::Normal, rng2);
  nlohmann::json got = other.load(path);
  CHECK(got["d_h"] == 512);
  CHECK(got["note"] == "roundtrip");
  for (const auto& name : {"alpha", "beta"}) {
    const auto& a = store.get(name).values();
    const auto& b = other.get(name).values();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  CHECK(ParamStore::read_meta(path)["d_h"] == 512);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint stores f32 stores at float width") {
  Rng rng(7);
  ParamStore store(Precision::f32);
  store.create("w", {3}, Init::Normal, rng);
  const std::string path = tmp_path("f32");
  store.save(path, nlohmann::json::object());
  ParamStore other(Precision::f32);
  Rng rng2(1);
  other.create("w", {3}, Init::Zeros, rng2);
  other.load(path);
  for (int i = 0; i < 3; ++i) {
    CHECK(other.get("w").values()[i] == store.get("w").values()[i]);
    // value is representable as a float by construction
    const double v = other.get("w").values()[i];
    CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint header and integrity failures are loud") {
  const std::string path = tmp_path("bad");
  {
    std::ofstream out(path);
    out << "NOT-A-CKPT\n{}\n";
  }
  Rng rng(1);
  ParamStore store;
  store.create("w", {1}, Init::Zeros, rng);
  CHECK_THROWS(store.load(path));
  CHECK_THROWS(ParamStore::read_meta(path));
  CHECK_THROWS(store.load("/tmp/definitely_missing_page_ckpt"));
  std::remove(path.c_str());

  // shape mismatch
  const std::string p2 = tmp_path("shape");
  store.save(p2, nlohmann::json::object());
  ParamStore other;
  Rng rng2(1);
  other.create("w", {2}, Init::Zeros, rng2);
  CHECK_THROWS(other.load(p2));
  std::remove(p2.c_str());
}

TEST_CASE("duplicate and missing parameter names throw") {
  Rng rng(1);
  ParamStore store;
  store.create("w", {1}, Init::Zeros, rng);
  CHECK_THROWS(store.create("w", {2}, Init::Zeros, rng));
  CHECK_THROWS(store.get("missing"));
}

TEST_CASE("grad_check accepts a correct graph and flags a broken one") {
  Rng rng(11);
  ParamStore store;
  store.create("w", {4}, Init::Normal, rng);
  store.create("b", {1}, Init::Normal, rng);
  const double good = grad_check(
      [&]() {
        Tensor h = page::ad::tanh(add(store.get("w"), store.get("b")));
        return sum(mul(h, h));
      },
      store, 1e-5);
  CHECK(good < 1e-6);

  // a deliberately wrong "gradient": compare f against a perturbed twin
  const double bad = grad_check(
      [&]() {
        // value depends on w, but we scalarize through a constant detour
        // that backward sees differently: emulate by scaling only values
        Tensor w = store.get("w");
        Tensor frozen = Tensor::from(w.shape(), w.values());  // constant copy
        return sum(mul(w, frozen));  // analytic grad misses half the product
      },
      store, 1e-5);
  CHECK(bad > 1e-2);
}
