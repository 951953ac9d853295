#include "page/optim.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace page::ad {

namespace {

constexpr char kMagic[] = "PAGE-CKPT-1";

void store_le64(std::string& out, std::uint64_t bits) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void store_le32(std::string& out, std::uint32_t bits) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t load_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return bits;
}

std::uint32_t load_le32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return bits;
}

double bits_to_f64(std::uint64_t bits) {
  double d;
  static_assert(sizeof(d) == 8);
  std::memcpy(&d, &bits, 8);
  return d;
}

std::uint64_t f64_to_bits(double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  return bits;
}

float bits_to_f32(std::uint32_t bits) {
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

std::uint32_t f32_to_bits(float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  return bits;
}

}  // namespace

Tensor ParamStore::create(const std::string& name, Shape shape, Init init,
                          Rng& rng, double init_scale) {
  if (index_.count(name))
    throw std::runtime_error("param already registered: " + name);
  const int n = numel(shape);
  std::vector<double> vals(n, 0.0);
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      std::fill(vals.begin(), vals.end(), 1.0);
      break;
    case Init::XavierUniform: {
      const int fan_in = shape.size() == 2 ? shape[0] : shape[0];
      const int fan_out = shape.size() == 2 ? shape[1] : shape[0];
      const double a = std::sqrt(6.0 / (fan_in + fan_out)) * init_scale;
      for (double& v : vals) v = rng.uniform(-a, a);
      break;
    }
    case Init::Normal:
      for (double& v : vals) v = rng.normal() * init_scale;
      break;
  }
  if (precision_ == Precision::f32)
    for (double& v : vals) v = static_cast<double>(static_cast<float>(v));
  Tensor t = Tensor::from(std::move(shape), std::move(vals), true);
  t.set_name(name);
  index_[name] = slots_.size();
  slots_.push_back({t, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  order_.push_back(name);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::runtime_error("no such param: " + name);
  return slots_[it->second].t;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.t.values().size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& s : slots_) s.t.zero_grad();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& slot : slots_)
    for (double g : slot.t.grad()) s += g * g;
  return std::sqrt(s);
}

void ParamStore::adam_step(const AdamConfig& cfg) {
  for (std::size_t si = 0; si < slots_.size(); ++si)
    for (double g : slots_[si].t.grad())
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient in parameter " +
                                 order_[si]);
  double rescale = 1.0;
  if (cfg.clip > 0.0) {
    const double norm = grad_norm();
    if (norm > cfg.clip) rescale = cfg.clip / norm;
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& slot : slots_) {
    auto& vals = slot.t.values();
    auto& grads = slot.t.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double g = grads[i] * rescale;
      slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
      slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      vals[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      if (precision_ == Precision::f32)
        vals[i] = static_cast<double>(static_cast<float>(vals[i]));
      grads[i] = 0.0;
    }
  }
}

void ParamStore::save(const std::string& path, const nlohmann::json& meta) const {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["precision"] = precision_ == Precision::f32 ? "f32" : "f64";
  manifest["tensors"] = nlohmann::json::array();
  std::string blob;
  const int unit = precision_ == Precision::f32 ? 4 : 8;
  for (std::size_t si = 0; si < slots_.size(); ++si) {
    const auto& t = slots_[si].t;
    nlohmann::json entry;
    entry["name"] = order_[si];
    entry["shape"] = t.shape();
    entry["dtype"] = precision_ == Precision::f32 ? "f32" : "f64";
    entry["offset"] = blob.size();
    entry["bytes"] = t.values().size() * unit;
    manifest["tensors"].push_back(entry);
    for (double v : t.values()) {
      if (precision_ == Precision::f32)
        store_le32(blob, f32_to_bits(static_cast<float>(v)));
      else
        store_le64(blob, f64_to_bits(v));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << kMagic << "\n" << manifest.dump() << "\n" << blob;
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

namespace {

struct RawCkpt {
  nlohmann::json manifest;
  std::string blob;
};

RawCkpt read_ckpt(const std::string& path, bool want_blob) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic;
  if (!std::getline(in, magic) || magic != kMagic)
    throw std::runtime_error("bad checkpoint magic in " + path);
  std::string mline;
  if (!std::getline(in, mline))
    throw std::runtime_error("truncated checkpoint manifest in " + path);
  RawCkpt r;
  r.manifest = nlohmann::json::parse(mline, nullptr, false);
  if (r.manifest.is_discarded())
    throw std::runtime_error("bad checkpoint manifest in " + path);
  if (want_blob) {
    r.blob.assign(std::istreambuf_iterator<char>(in),
                  std::istreambuf_iterator<char>());
  }
  return r;
}

}  // namespace

nlohmann::json ParamStore::load(const std::string& path) {
  RawCkpt r = read_ckpt(path, true);
  const std::string prec = r.manifest.value("precision", "f64");
  const int unit = prec == "f32" ? 4 : 8;
  const auto* blob = reinterpret_cast<const unsigned char*>(r.blob.data());
  std::size_t seen = 0;
  for (const auto& entry : r.manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::runtime_error("checkpoint has unknown parameter: " + name);
    auto& t = slots_[it->second].t;
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != t.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name +
                               ": file " + shape_str(shape) + " vs model " +
                               shape_str(t.shape()));
    const std::size_t off = entry.at("offset").get<std::size_t>();
    const std::size_t bytes = entry.at("bytes").get<std::size_t>();
    if (off + bytes > r.blob.size())
      throw std::runtime_error("checkpoint blob truncated at " + name);
    if (bytes != t.values().size() * unit)
      throw std::runtime_error("checkpoint byte count mismatch for " + name);
    for (std::size_t i = 0; i < t.values().size(); ++i) {
      if (unit == 4)
        t.values()[i] =
            static_cast<double>(bits_to_f32(load_le32(blob + off + 4 * i)));
      else
        t.values()[i] = bits_to_f64(load_le64(blob + off + 8 * i));
    }
    ++seen;
  }
  if (seen != slots_.size())
    throw std::runtime_error("checkpoint is missing parameters (" +
                             std::to_string(seen) + " of " +
                             std::to_string(slots_.size()) + ")");
  return r.manifest.at("meta");
}

nlohmann::json ParamStore::read_meta(const std::string& path) {
  return read_ckpt(path, false).manifest.at("meta");
}

double grad_check(const std::function<Tensor()>& f, ParamStore& store,
                  double eps) {
  store.zero_grads();
  Tensor loss = f();
  backward(loss, 1.0);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(store.size());
  for (const auto& name : store.names()) analytic.push_back(store.get(name).grad());

  double worst = 0.0;
  for (std::size_t si = 0; si < store.size(); ++si) {
    Tensor t = store.get(store.names()[si]);
    for (std::size_t i = 0; i < t.values().size(); ++i) {
      const double orig = t.values()[i];
      t.values()[i] = orig + eps;
      const double fp = f().item();
      t.values()[i] = orig - eps;
      const double fm = f().item();
      t.values()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[si][i];
      const double rel =
          std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      worst = std::max(worst, rel);
    }
  }
  store.zero_grads();
  return worst;
}

}  // namespace page::ad
