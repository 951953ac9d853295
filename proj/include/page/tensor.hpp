#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "page/rng.hpp"

namespace page::ad {

using Shape = std::vector<int>;

int numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Precision { f64, f32 };

// Arguments to log() below this floor are clamped before taking the log.
inline constexpr double kLogFloor = 1e-10;

// Thread-local execution context. Ops consult it for the active precision
// and, when an audit is open, report every softmax row they emit.
struct ExecContext {
  Precision precision = Precision::f64;
  std::vector<std::vector<double>>* softmax_rows = nullptr;
};
ExecContext& ctx();

class PrecisionGuard {
 public:
  explicit PrecisionGuard(Precision p);
  ~PrecisionGuard();
  PrecisionGuard(const PrecisionGuard&) = delete;
  PrecisionGuard& operator=(const PrecisionGuard&) = delete;

 private:
  Precision prev_;
};

// RAII collector: while alive, every (masked_)softmax in this thread appends
// its output rows here. Rows with no valid key are not emitted (their output
// is all zeros by design, not a distribution).
class SoftmaxAudit {
 public:
  SoftmaxAudit();
  ~SoftmaxAudit();
  SoftmaxAudit(const SoftmaxAudit&) = delete;
  SoftmaxAudit& operator=(const SoftmaxAudit&) = delete;
  const std::vector<std::vector<double>>& rows() const { return rows_; }

 private:
  std::vector<std::vector<double>> rows_;
  std::vector<std::vector<double>>* prev_;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // same size as values, zero-initialized
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void()> backward_fn;  // accumulates this->grad into parents
};

// Shared handle to a node of the computation DAG. Values are stored as
// doubles; under Precision::f32 every op result (and every parameter update)
// is rounded through IEEE float, so the arithmetic matches a float build.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor eye(int n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int size() const { return static_cast<int>(impl_->values.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }

  const std::vector<double>& values() const { return impl_->values; }
  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& grad() const { return impl_->grad; }
  std::vector<double>& grad() { return impl_->grad; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  const std::string& name() const { return impl_->name; }
  void set_name(const std::string& n) { impl_->name = n; }
  bool is_leaf() const { return impl_->parents.empty(); }
  void zero_grad();

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode sweep from `root` (d root / d root = seed). Non-leaf grads are
// recomputed from zero on every call; leaf grads accumulate additively across
// calls until explicitly zeroed.
void backward(const Tensor& root, double seed = 1.0);

// ---- ops ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice_rows(const Tensor& a, int start, int len);
Tensor reshape(const Tensor& a, Shape shape);
Tensor softmax(const Tensor& a, int axis);
// `valid` has one flag per entry of `a`; invalid keys get exactly zero weight
// and rows with no valid key come out all zero.
Tensor masked_softmax(const Tensor& a, const std::vector<std::uint8_t>& valid,
                      int axis);
Tensor log(const Tensor& a);  // clamps inputs at kLogFloor
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gather_rows(const Tensor& a, const std::vector<int>& ids);
Tensor scatter_sum(const Tensor& weights, const std::vector<int>& ids,
                   int size);
Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& fill,
                   double value);
Tensor dropout(const Tensor& a, double p, Rng& rng, bool training);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reduce_max_axis0(const Tensor& a);

}  // namespace page::ad
