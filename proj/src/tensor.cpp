#include "page/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace page::ad {

int numel(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

ExecContext& ctx() {
  thread_local ExecContext c;
  return c;
}

PrecisionGuard::PrecisionGuard(Precision p) : prev_(ctx().precision) {
  ctx().precision = p;
}
PrecisionGuard::~PrecisionGuard() { ctx().precision = prev_; }

SoftmaxAudit::SoftmaxAudit() : prev_(ctx().softmax_rows) {
  ctx().softmax_rows = &rows_;
}
SoftmaxAudit::~SoftmaxAudit() { ctx().softmax_rows = prev_; }

namespace {

void quantize(std::vector<double>& v) {
  if (ctx().precision == Precision::f32) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  }
}

using ImplPtr = std::shared_ptr<TensorImpl>;

Tensor make_node(Shape shape, std::vector<double> vals,
                 std::vector<ImplPtr> parents, std::function<void()> bfn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(vals);
  quantize(impl->values);
  impl->grad.assign(impl->values.size(), 0.0);
  for (const auto& p : parents) {
    if (p->requires_grad) {
      impl->requires_grad = true;
      break;
    }
  }
  impl->parents = std::move(parents);
  if (impl->requires_grad) impl->backward_fn = std::move(bfn);
  return Tensor(impl);
}

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error("tensor: " + msg);
}

void check_rank12(const Tensor& t, const char* who) {
  if (!t.defined()) fail(std::string(who) + ": undefined tensor");
  if (t.rank() < 1 || t.rank() > 2) fail(std::string(who) + ": rank must be 1 or 2");
}

// plain kernels, all accumulate into C
void mm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      if (a == 0.0) continue;
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}

// C[m,n] * B[k,n]^T -> out[m,k]
void mm_nt(const double* C, const double* B, double* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double acc = 0.0;
      const double* crow = C + i * n;
      const double* brow = B + p * n;
      for (int j = 0; j < n; ++j) acc += crow[j] * brow[j];
      out[i * k + p] += acc;
    }
}

// A[m,k]^T * C[m,n] -> out[k,n]
void mm_tn(const double* A, const double* C, double* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      if (a == 0.0) continue;
      const double* crow = C + i * n;
      double* orow = out + p * n;
      for (int j = 0; j < n; ++j) orow[j] += a * crow[j];
    }
}

enum class Bc { Same, ScalarA, ScalarB, RowA, RowB, ColA, ColB };

// Broadcast rules: identical shapes; either side a scalar; against a 2-D
// [m,n] operand the other side may be a row ([n] or [1,n]) or a column
// ([m,1]). Row wins the m==n ambiguity for 1-D operands.
Bc bcast_kind(const Shape& sa, const Shape& sb) {
  if (sa == sb) return Bc::Same;
  if (numel(sb) == 1) return Bc::ScalarB;
  if (numel(sa) == 1) return Bc::ScalarA;
  auto row_of = [](const Shape& big, const Shape& small) {
    if (big.size() != 2) return false;
    if (small.size() == 1) return small[0] == big[1];
    return small.size() == 2 && small[0] == 1 && small[1] == big[1];
  };
  auto col_of = [](const Shape& big, const Shape& small) {
    return big.size() == 2 && small.size() == 2 && small[0] == big[0] &&
           small[1] == 1;
  };
  if (row_of(sa, sb)) return Bc::RowB;
  if (col_of(sa, sb)) return Bc::ColB;
  if (row_of(sb, sa)) return Bc::RowA;
  if (col_of(sb, sa)) return Bc::ColA;
  fail("incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
}

struct BcastPlan {
  Shape out;
  int n = 0;        // numel of out
  int cols = 0;     // out cols when 2-D, else n
  Bc kind;
  bool a_small = false;  // true when a is the broadcast (smaller) side
};

BcastPlan plan_bcast(const Shape& sa, const Shape& sb) {
  BcastPlan p;
  p.kind = bcast_kind(sa, sb);
  p.a_small = (p.kind == Bc::ScalarA || p.kind == Bc::RowA || p.kind == Bc::ColA);
  p.out = p.a_small ? sb : sa;
  p.n = numel(p.out);
  p.cols = p.out.size() == 2 ? p.out[1] : p.n;
  return p;
}

inline int small_index(const BcastPlan& p, int i) {
  switch (p.kind) {
    case Bc::ScalarA:
    case Bc::ScalarB:
      return 0;
    case Bc::RowA:
    case Bc::RowB:
      return i % p.cols;
    case Bc::ColA:
    case Bc::ColB:
      return i / p.cols;
    default:
      return i;
  }
}

struct Line {
  int base, stride, len;
};

// iterate a 1-D or 2-D tensor as lines along `axis`
std::vector<Line> lines_of(const Shape& s, int axis) {
  std::vector<Line> out;
  if (s.size() == 1) {
    if (axis != 0) fail("axis out of range for 1-D tensor");
    out.push_back({0, 1, s[0]});
    return out;
  }
  const int m = s[0], n = s[1];
  if (axis == 1) {
    out.reserve(m);
    for (int i = 0; i < m; ++i) out.push_back({i * n, 1, n});
  } else if (axis == 0) {
    out.reserve(n);
    for (int j = 0; j < n; ++j) out.push_back({j, n, m});
  } else {
    fail("axis out of range");
  }
  return out;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values.assign(numel(impl->shape), 0.0);
  impl->grad.assign(impl->values.size(), 0.0);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::full(Shape shape, double v) {
  auto t = zeros(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), v);
  quantize(t.values());
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (numel(shape) != static_cast<int>(values.size()))
    fail("from: size mismatch");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  quantize(impl->values);
  impl->grad.assign(impl->values.size(), 0.0);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::eye(int n) {
  auto t = zeros({n, n});
  for (int i = 0; i < n; ++i) t.values()[i * n + i] = 1.0;
  return t;
}

double Tensor::item() const {
  if (size() != 1) fail("item: tensor has " + std::to_string(size()) + " elements");
  return impl_->values[0];
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void backward(const Tensor& root, double seed) {
  if (!root.defined()) fail("backward: undefined root");
  if (!root.requires_grad()) return;

  // post-order DFS over grad-requiring ancestors
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.push_back({root.impl().get(), 0});
  seen.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
        descended = true;
        break;
      }
    }
    if (!descended && (stack.empty() || stack.back().first == node)) {
      if (next >= node->parents.size()) {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  // non-leaf grads are transient: reset them, keep leaf accumulation
  for (TensorImpl* n : order) {
    if (!n->parents.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  for (double& g : root.impl()->grad) g += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank12(a, "matmul");
  check_rank12(b, "matmul");
  // view 1-D a as [1,k], 1-D b as [k,1]
  const int m = a.rank() == 2 ? a.dim(0) : 1;
  const int k = a.rank() == 2 ? a.dim(1) : a.dim(0);
  const int kb = b.dim(0);
  const int n = b.rank() == 2 ? b.dim(1) : 1;
  if (k != kb)
    fail("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) out_shape = {m, n};
  else if (a.rank() == 2) out_shape = {m};
  else if (b.rank() == 2) out_shape = {n};
  else out_shape = {1};

  std::vector<double> vals(static_cast<std::size_t>(m) * n, 0.0);
  mm_nn(a.values().data(), b.values().data(), vals.data(), m, k, n);

  auto ai = a.impl(), bi = b.impl();
  Tensor out = make_node(out_shape, std::move(vals), {ai, bi}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), pb = bi.get(), m, k, n]() {
      mm_nt(self->grad.data(), pb->values.data(), pa->grad.data(), m, k, n);
      mm_tn(pa->values.data(), self->grad.data(), pb->grad.data(), m, k, n);
    };
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  check_rank12(a, "transpose");
  const int m = a.rank() == 2 ? a.dim(0) : 1;
  const int n = a.rank() == 2 ? a.dim(1) : a.dim(0);
  std::vector<double> vals(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) vals[j * m + i] = a.values()[i * n + j];
  auto ai = a.impl();
  Tensor out = make_node({n, m}, std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    TensorImpl* pa = ai.get();
    out.impl()->backward_fn = [self, pa, m, n]() {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          pa->grad[i * n + j] += self->grad[j * m + i];
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_rank12(a, "add");
  check_rank12(b, "add");
  BcastPlan p = plan_bcast(a.shape(), b.shape());
  std::vector<double> vals(p.n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < p.n; ++i) {
    const int s = small_index(p, i);
    vals[i] = p.a_small ? av[s] + bv[i] : av[i] + bv[s];
  }
  auto ai = a.impl(), bi = b.impl();
  Tensor out = make_node(p.out, std::move(vals), {ai, bi}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), pb = bi.get(), p]() {
      for (int i = 0; i < p.n; ++i) {
        const int s = small_index(p, i);
        if (p.a_small) {
          pa->grad[s] += self->grad[i];
          pb->grad[i] += self->grad[i];
        } else {
          pa->grad[i] += self->grad[i];
          pb->grad[s] += self->grad[i];
        }
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_rank12(a, "sub");
  check_rank12(b, "sub");
  BcastPlan p = plan_bcast(a.shape(), b.shape());
  std::vector<double> vals(p.n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < p.n; ++i) {
    const int s = small_index(p, i);
    vals[i] = p.a_small ? av[s] - bv[i] : av[i] - bv[s];
  }
  auto ai = a.impl(), bi = b.impl();
  Tensor out = make_node(p.out, std::move(vals), {ai, bi}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), pb = bi.get(), p]() {
      for (int i = 0; i < p.n; ++i) {
        const int s = small_index(p, i);
        if (p.a_small) {
          pa->grad[s] += self->grad[i];
          pb->grad[i] -= self->grad[i];
        } else {
          pa->grad[i] += self->grad[i];
          pb->grad[s] -= self->grad[i];
        }
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_rank12(a, "mul");
  check_rank12(b, "mul");
  BcastPlan p = plan_bcast(a.shape(), b.shape());
  std::vector<double> vals(p.n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < p.n; ++i) {
    const int s = small_index(p, i);
    vals[i] = p.a_small ? av[s] * bv[i] : av[i] * bv[s];
  }
  auto ai = a.impl(), bi = b.impl();
  Tensor out = make_node(p.out, std::move(vals), {ai, bi}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), pb = bi.get(), p]() {
      for (int i = 0; i < p.n; ++i) {
        const int s = small_index(p, i);
        if (p.a_small) {
          pa->grad[s] += self->grad[i] * pb->values[i];
          pb->grad[i] += self->grad[i] * pa->values[s];
        } else {
          pa->grad[i] += self->grad[i] * pb->values[s];
          pb->grad[s] += self->grad[i] * pa->values[i];
        }
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  check_rank12(a, "scale");
  std::vector<double> vals(a.values());
  for (double& v : vals) v *= c;
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), c]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i] * c;
    };
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  check_rank12(a, "add_scalar");
  std::vector<double> vals(a.values());
  for (double& v : vals) v += c;
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get()]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i];
    };
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail("concat: no parts");
  for (const auto& t : parts) check_rank12(t, "concat");
  const int rank = parts[0].rank();
  for (const auto& t : parts)
    if (t.rank() != rank) fail("concat: mixed ranks");

  Shape out_shape;
  std::vector<double> vals;
  // per-part (dst offset, copy plan) for backward
  struct Seg {
    TensorImpl* p;
    int rows, cols;      // part dims
    int dst_off;         // flat offset of part (axis 0) or col offset (axis 1)
  };
  std::vector<Seg> segs;
  std::vector<ImplPtr> parents;
  int out_cols = 0;

  if (axis == 0) {
    const int ncols = rank == 2 ? parts[0].dim(1) : 1;
    int total_rows = 0;
    for (const auto& t : parts) {
      const int tc = rank == 2 ? t.dim(1) : 1;
      if (tc != ncols) fail("concat axis 0: column mismatch");
      total_rows += t.dim(0);
    }
    out_shape = rank == 2 ? Shape{total_rows, ncols} : Shape{total_rows};
    vals.resize(static_cast<std::size_t>(total_rows) * ncols);
    int off = 0;
    for (const auto& t : parts) {
      std::copy(t.values().begin(), t.values().end(), vals.begin() + off);
      segs.push_back({t.impl().get(), t.dim(0), ncols, off});
      parents.push_back(t.impl());
      off += t.size();
    }
    out_cols = ncols;
  } else if (axis == 1) {
    if (rank != 2) fail("concat axis 1 needs 2-D parts");
    const int m = parts[0].dim(0);
    int total_cols = 0;
    for (const auto& t : parts) {
      if (t.dim(0) != m) fail("concat axis 1: row mismatch");
      total_cols += t.dim(1);
    }
    out_shape = {m, total_cols};
    vals.resize(static_cast<std::size_t>(m) * total_cols);
    int coff = 0;
    for (const auto& t : parts) {
      const int tc = t.dim(1);
      for (int i = 0; i < m; ++i)
        std::copy(t.values().begin() + i * tc, t.values().begin() + (i + 1) * tc,
                  vals.begin() + i * total_cols + coff);
      segs.push_back({t.impl().get(), m, tc, coff});
      parents.push_back(t.impl());
      coff += tc;
    }
    out_cols = total_cols;
  } else {
    fail("concat: axis must be 0 or 1");
  }

  Tensor out = make_node(out_shape, std::move(vals), std::move(parents), nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, segs, axis, out_cols]() {
      if (axis == 0) {
        for (const auto& s : segs) {
          const int n = s.rows * s.cols;
          for (int i = 0; i < n; ++i) s.p->grad[i] += self->grad[s.dst_off + i];
        }
      } else {
        for (const auto& s : segs) {
          for (int i = 0; i < s.rows; ++i)
            for (int j = 0; j < s.cols; ++j)
              s.p->grad[i * s.cols + j] +=
                  self->grad[i * out_cols + s.dst_off + j];
        }
      }
    };
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int start, int len) {
  check_rank12(a, "slice_rows");
  const int rows = a.dim(0);
  if (start < 0 || len < 0 || start + len > rows) fail("slice_rows: out of range");
  const int cols = a.rank() == 2 ? a.dim(1) : 1;
  Shape out_shape = a.rank() == 2 ? Shape{len, cols} : Shape{len};
  std::vector<double> vals(a.values().begin() + start * cols,
                           a.values().begin() + (start + len) * cols);
  auto ai = a.impl();
  Tensor out = make_node(out_shape, std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), start, cols]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[start * cols + i] += self->grad[i];
    };
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_rank12(a, "reshape");
  if (numel(shape) != a.size()) fail("reshape: size mismatch");
  auto ai = a.impl();
  Tensor out = make_node(std::move(shape), a.values(), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get()]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i];
    };
  }
  return out;
}

namespace {

Tensor softmax_impl(const Tensor& a, const std::uint8_t* valid, int axis) {
  check_rank12(a, "softmax");
  const auto lines = lines_of(a.shape(), axis);
  std::vector<double> vals(a.size(), 0.0);
  const auto& av = a.values();
  for (const auto& ln : lines) {
    double mx = -1e308;
    bool any = false;
    for (int t = 0; t < ln.len; ++t) {
      const int idx = ln.base + t * ln.stride;
      if (valid && !valid[idx]) continue;
      any = true;
      mx = std::max(mx, av[idx]);
    }
    if (!any) continue;  // all-masked line stays zero
    double s = 0.0;
    for (int t = 0; t < ln.len; ++t) {
      const int idx = ln.base + t * ln.stride;
      if (valid && !valid[idx]) continue;
      const double e = std::exp(av[idx] - mx);
      vals[idx] = e;
      s += e;
    }
    for (int t = 0; t < ln.len; ++t) {
      const int idx = ln.base + t * ln.stride;
      if (valid && !valid[idx]) continue;
      vals[idx] /= s;
    }
  }
  // audit before quantization would miss the rounding, so collect after the
  // node is made
  auto ai = a.impl();
  std::vector<std::uint8_t> vcopy;
  if (valid) vcopy.assign(valid, valid + a.size());
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (ctx().softmax_rows) {
    for (const auto& ln : lines) {
      bool any = !valid;
      if (valid)
        for (int t = 0; t < ln.len && !any; ++t)
          any = valid[ln.base + t * ln.stride] != 0;
      if (!any) continue;
      std::vector<double> row(ln.len);
      for (int t = 0; t < ln.len; ++t)
        row[t] = out.values()[ln.base + t * ln.stride];
      ctx().softmax_rows->push_back(std::move(row));
    }
  }
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), lines, vcopy]() {
      const std::uint8_t* vd = vcopy.empty() ? nullptr : vcopy.data();
      for (const auto& ln : lines) {
        double dot = 0.0;
        for (int t = 0; t < ln.len; ++t) {
          const int idx = ln.base + t * ln.stride;
          if (vd && !vd[idx]) continue;
          dot += self->grad[idx] * self->values[idx];
        }
        for (int t = 0; t < ln.len; ++t) {
          const int idx = ln.base + t * ln.stride;
          if (vd && !vd[idx]) continue;
          pa->grad[idx] += self->values[idx] * (self->grad[idx] - dot);
        }
      }
    };
  }
  return out;
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) { return softmax_impl(a, nullptr, axis); }

Tensor masked_softmax(const Tensor& a, const std::vector<std::uint8_t>& valid,
                      int axis) {
  if (static_cast<int>(valid.size()) != a.size())
    fail("masked_softmax: mask size mismatch");
  return softmax_impl(a, valid.data(), axis);
}

Tensor log(const Tensor& a) {
  check_rank12(a, "log");
  std::vector<double> vals(a.size());
  const auto& av = a.values();
  for (int i = 0; i < a.size(); ++i) vals[i] = std::log(std::max(av[i], kLogFloor));
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get()]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i) {
        if (pa->values[i] > kLogFloor)
          pa->grad[i] += self->grad[i] / pa->values[i];
      }
    };
  }
  return out;
}

Tensor exp(const Tensor& a) {
  check_rank12(a, "exp");
  std::vector<double> vals(a.size());
  const auto& av = a.values();
  for (int i = 0; i < a.size(); ++i) vals[i] = std::exp(av[i]);
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get()]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i] * self->values[i];
    };
  }
  return out;
}

Tensor tanh(const Tensor& a) {
  check_rank12(a, "tanh");
  std::vector<double> vals(a.size());
  const auto& av = a.values();
  for (int i = 0; i < a.size(); ++i) vals[i] = std::tanh(av[i]);
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get()]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i] * (1.0 - self->values[i] * self->values[i]);
    };
  }
  return out;
}

Tensor relu(const Tensor& a) {
  check_rank12(a, "relu");
  std::vector<double> vals(a.size());
  const auto& av = a.values();
  for (int i = 0; i < a.size(); ++i) vals[i] = av[i] > 0.0 ? av[i] : 0.0;
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get()]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        if (pa->values[i] > 0.0) pa->grad[i] += self->grad[i];
    };
  }
  return out;
}

Tensor sqrt(const Tensor& a) {
  check_rank12(a, "sqrt");
  std::vector<double> vals(a.size());
  const auto& av = a.values();
  for (int i = 0; i < a.size(); ++i) {
    if (av[i] < 0.0) fail("sqrt: negative input");
    vals[i] = std::sqrt(av[i]);
  }
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get()]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i] * 0.5 / std::max(self->values[i], 1e-12);
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  check_rank12(x, "layer_norm");
  const int n = x.rank() == 2 ? x.dim(1) : x.dim(0);
  const int m = x.rank() == 2 ? x.dim(0) : 1;
  if (gain.size() != n || bias.size() != n) fail("layer_norm: gain/bias size");
  std::vector<double> vals(x.size());
  std::vector<double> mu(m), inv(m);
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += xv[i * n + j];
    mu[i] = s / n;
    double v = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu[i];
      v += d * d;
    }
    inv[i] = 1.0 / std::sqrt(v / n + eps);
    for (int j = 0; j < n; ++j)
      vals[i * n + j] = (xv[i * n + j] - mu[i]) * inv[i] * gv[j] + bv[j];
  }
  auto xi = x.impl(), gi = gain.impl(), bi = bias.impl();
  Tensor out = make_node(x.shape(), std::move(vals), {xi, gi, bi}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, px = xi.get(), pg = gi.get(),
                               pb = bi.get(), m, n, mu, inv]() {
      for (int i = 0; i < m; ++i) {
        double dxh_sum = 0.0, dxh_dot = 0.0;
        for (int j = 0; j < n; ++j) {
          const double xh = (px->values[i * n + j] - mu[i]) * inv[i];
          const double dxh = self->grad[i * n + j] * pg->values[j];
          dxh_sum += dxh;
          dxh_dot += dxh * xh;
          pg->grad[j] += self->grad[i * n + j] * xh;
          pb->grad[j] += self->grad[i * n + j];
        }
        for (int j = 0; j < n; ++j) {
          const double xh = (px->values[i * n + j] - mu[i]) * inv[i];
          const double dxh = self->grad[i * n + j] * pg->values[j];
          px->grad[i * n + j] +=
              inv[i] * (dxh - dxh_sum / n - xh * dxh_dot / n);
        }
      }
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& ids) {
  check_rank12(a, "gather_rows");
  const int rows = a.dim(0);
  const int cols = a.rank() == 2 ? a.dim(1) : 1;
  for (int id : ids)
    if (id < 0 || id >= rows) fail("gather_rows: id out of range");
  const int k = static_cast<int>(ids.size());
  Shape out_shape = a.rank() == 2 ? Shape{k, cols} : Shape{k};
  std::vector<double> vals(static_cast<std::size_t>(k) * cols);
  for (int t = 0; t < k; ++t)
    std::copy(a.values().begin() + ids[t] * cols,
              a.values().begin() + (ids[t] + 1) * cols, vals.begin() + t * cols);
  auto ai = a.impl();
  Tensor out = make_node(out_shape, std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), ids, cols]() {
      for (std::size_t t = 0; t < ids.size(); ++t)
        for (int j = 0; j < cols; ++j)
          pa->grad[ids[t] * cols + j] += self->grad[t * cols + j];
    };
  }
  return out;
}

Tensor scatter_sum(const Tensor& weights, const std::vector<int>& ids, int size) {
  check_rank12(weights, "scatter_sum");
  if (weights.rank() != 1) fail("scatter_sum: weights must be 1-D");
  if (static_cast<int>(ids.size()) != weights.size())
    fail("scatter_sum: ids size mismatch");
  for (int id : ids)
    if (id < 0 || id >= size) fail("scatter_sum: id out of range");
  std::vector<double> vals(size, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i)
    vals[ids[i]] += weights.values()[i];
  auto wi = weights.impl();
  Tensor out = make_node({size}, std::move(vals), {wi}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pw = wi.get(), ids]() {
      for (std::size_t i = 0; i < ids.size(); ++i)
        pw->grad[i] += self->grad[ids[i]];
    };
  }
  return out;
}

Tensor masked_fill(const Tensor& a, const std::vector<std::uint8_t>& fill,
                   double value) {
  check_rank12(a, "masked_fill");
  if (static_cast<int>(fill.size()) != a.size())
    fail("masked_fill: mask size mismatch");
  std::vector<double> vals(a.size());
  for (int i = 0; i < a.size(); ++i)
    vals[i] = fill[i] ? value : a.values()[i];
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), fill]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        if (!fill[i]) pa->grad[i] += self->grad[i];
    };
  }
  return out;
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool training) {
  check_rank12(a, "dropout");
  if (p < 0.0 || p >= 1.0) fail("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return a;  // identity, no new node
  std::vector<double> mask(a.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (int i = 0; i < a.size(); ++i)
    mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
  std::vector<double> vals(a.size());
  for (int i = 0; i < a.size(); ++i) vals[i] = a.values()[i] * mask[i];
  auto ai = a.impl();
  Tensor out = make_node(a.shape(), std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), mask = std::move(mask)]() {
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        pa->grad[i] += self->grad[i] * mask[i];
    };
  }
  return out;
}

Tensor sum(const Tensor& a) {
  check_rank12(a, "sum");
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto ai = a.impl();
  Tensor out = make_node({1}, {s}, {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get()]() {
      for (double& g : pa->grad) g += self->grad[0];
    };
  }
  return out;
}

Tensor mean(const Tensor& a) {
  check_rank12(a, "mean");
  double s = 0.0;
  for (double v : a.values()) s += v;
  const int n = a.size();
  auto ai = a.impl();
  Tensor out = make_node({1}, {s / n}, {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), n]() {
      for (double& g : pa->grad) g += self->grad[0] / n;
    };
  }
  return out;
}

Tensor reduce_max_axis0(const Tensor& a) {
  check_rank12(a, "reduce_max_axis0");
  if (a.rank() != 2) fail("reduce_max_axis0: needs 2-D input");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> vals(n);
  std::vector<int> arg(n, 0);
  for (int j = 0; j < n; ++j) {
    double best = a.values()[j];
    int bi = 0;
    for (int i = 1; i < m; ++i) {
      const double v = a.values()[i * n + j];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    vals[j] = best;
    arg[j] = bi;
  }
  auto ai = a.impl();
  Tensor out = make_node({n}, std::move(vals), {ai}, nullptr);
  if (out.requires_grad()) {
    TensorImpl* self = out.impl().get();
    out.impl()->backward_fn = [self, pa = ai.get(), arg, n]() {
      for (int j = 0; j < n; ++j) pa->grad[arg[j] * n + j] += self->grad[j];
    };
  }
  return out;
}

}  // namespace page::ad
