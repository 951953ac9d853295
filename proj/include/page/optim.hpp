#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "page/rng.hpp"
#include "page/tensor.hpp"

namespace page::ad {

enum class Init { Zeros, Ones, XavierUniform, Normal };

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 1.0;  // global gradient norm ceiling; <= 0 disables clipping
};

// Owns every trainable tensor, in registration order, which fixes the
// iteration order of the optimizer and the checkpoint layout.
class ParamStore {
 public:
  explicit ParamStore(Precision precision = Precision::f64)
      : precision_(precision) {}

  Precision precision() const { return precision_; }

  Tensor create(const std::string& name, Shape shape, Init init, Rng& rng,
                double init_scale = 1.0);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t size() const { return slots_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::string>& names() const { return order_; }

  void zero_grads();
  double grad_norm() const;
  std::int64_t step_count() const { return step_; }

  // clip by global norm, apply Adam with bias correction, then zero grads;
  // throws naming the parameter on any non-finite gradient
  void adam_step(const AdamConfig& cfg);

  void save(const std::string& path, const nlohmann::json& meta) const;
  nlohmann::json load(const std::string& path);
  static nlohmann::json read_meta(const std::string& path);

 private:
  struct Slot {
    Tensor t;
    std::vector<double> m, v;
  };
  Precision precision_;
  std::vector<Slot> slots_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

// Max relative error between reverse-mode gradients of f() and central
// finite differences over every parameter in the store. f must be a pure
// function of the store's values (freeze any sampling outside it).
double grad_check(const std::function<Tensor()>& f, ParamStore& store,
                  double eps = 1e-5);

}  // namespace page::ad
