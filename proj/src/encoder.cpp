#include "page/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace page {

using namespace ad;

Tensor positional_encoding(int len, int d) {
  std::vector<double> vals(static_cast<std::size_t>(len) * d);
  for (int pos = 0; pos < len; ++pos)
    for (int i = 0; i < d; ++i) {
      const double angle =
          pos / std::pow(10000.0, (2.0 * (i / 2)) / static_cast<double>(d));
      vals[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({len, d}, std::move(vals));
}

LayerNormParams::LayerNormParams(ParamStore& store, const std::string& prefix,
                                 int d, Rng& rng) {
  gain_ = store.create(prefix + ".g", {d}, Init::Ones, rng);
  bias_ = store.create(prefix + ".b", {d}, Init::Zeros, rng);
}

Tensor LayerNormParams::operator()(const Tensor& x) const {
  return layer_norm(x, gain_, bias_);
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store,
                                       const std::string& prefix, int d,
                                       int heads, Rng& rng)
    : d_(d), heads_(heads), dk_(d / heads) {
  if (d % heads != 0)
    throw std::runtime_error("attention heads must divide hidden size");
  for (int h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    wq_.push_back(store.create(hp + ".wq", {d, dk_}, Init::XavierUniform, rng));
    wk_.push_back(store.create(hp + ".wk", {d, dk_}, Init::XavierUniform, rng));
    wv_.push_back(store.create(hp + ".wv", {d, dk_}, Init::XavierUniform, rng));
  }
  wo_ = store.create(prefix + ".wo", {d, d}, Init::XavierUniform, rng);
  bo_ = store.create(prefix + ".bo", {d}, Init::Zeros, rng);
}

Tensor MultiHeadAttention::operator()(const Tensor& q, const Tensor& k,
                                      const Tensor& v,
                                      const std::vector<std::uint8_t>& key_valid) const {
  const int lq = q.dim(0);
  const int lk = k.dim(0);
  if (static_cast<int>(key_valid.size()) != lq * lk)
    throw std::runtime_error("attention mask size mismatch");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk_));
  std::vector<Tensor> heads_out;
  heads_out.reserve(heads_);
  for (int h = 0; h < heads_; ++h) {
    Tensor qh = matmul(q, wq_[h]);
    Tensor kh = matmul(k, wk_[h]);
    Tensor vh = matmul(v, wv_[h]);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    Tensor attn = masked_softmax(scores, key_valid, 1);
    heads_out.push_back(matmul(attn, vh));
  }
  Tensor ctx = heads_ == 1 ? heads_out[0] : concat(heads_out, 1);
  return add(matmul(ctx, wo_), bo_);
}

FeedForward::FeedForward(ParamStore& store, const std::string& prefix, int d,
                         int ffn, Rng& rng) {
  w1_ = store.create(prefix + ".w1", {d, ffn}, Init::XavierUniform, rng);
  b1_ = store.create(prefix + ".b1", {ffn}, Init::Zeros, rng);
  w2_ = store.create(prefix + ".w2", {ffn, d}, Init::XavierUniform, rng);
  b2_ = store.create(prefix + ".b2", {d}, Init::Zeros, rng);
}

Tensor FeedForward::operator()(const Tensor& x) const {
  return add(matmul(relu(add(matmul(x, w1_), b1_)), w2_), b2_);
}

TransformerEncoder::TransformerEncoder(ParamStore& store,
                                       const EncoderConfig& cfg, Rng& rng,
                                       const std::string& prefix)
    : cfg_(cfg) {
  if (cfg.layers < 1) throw std::runtime_error("encoder needs at least one layer");
  if (cfg.d_h % cfg.heads != 0)
    throw std::runtime_error("heads must divide d_h");
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + ".l" + std::to_string(l);
    Layer layer;
    layer.attn = MultiHeadAttention(store, lp + ".attn", cfg.d_h, cfg.heads, rng);
    layer.ln1 = LayerNormParams(store, lp + ".ln1", cfg.d_h, rng);
    layer.ffn = FeedForward(store, lp + ".ffn", cfg.d_h, cfg.ffn_dim, rng);
    layer.ln2 = LayerNormParams(store, lp + ".ln2", cfg.d_h, rng);
    layers_.push_back(std::move(layer));
  }
}

EncodedSeq TransformerEncoder::encode(const std::vector<int>& token_ids,
                                      const Tensor& embed, bool training,
                                      Rng& rng) const {
  std::vector<int> ids = token_ids;
  if (static_cast<int>(ids.size()) > cfg_.max_len) {
    std::fprintf(stderr,
                 "warning: sequence of %zu tokens truncated to max_len %d\n",
                 ids.size(), cfg_.max_len);
    ids.resize(cfg_.max_len);
  }
  if (ids.empty()) throw std::runtime_error("encode: empty sequence");
  const int L = static_cast<int>(ids.size());

  EncodedSeq seq;
  seq.valid.resize(L);
  for (int i = 0; i < L; ++i) seq.valid[i] = ids[i] != 0 ? 1 : 0;

  // self-attention key mask: every query row sees the valid positions
  std::vector<std::uint8_t> key_valid(static_cast<std::size_t>(L) * L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) key_valid[i * L + j] = seq.valid[j];

  Tensor x = scale(gather_rows(embed, ids), std::sqrt(static_cast<double>(cfg_.d_h)));
  x = add(x, positional_encoding(L, cfg_.d_h));
  x = dropout(x, cfg_.dropout, rng, training);
  for (const auto& layer : layers_) {
    Tensor a = layer.attn(x, x, x, key_valid);
    x = layer.ln1(add(x, dropout(a, cfg_.dropout, rng, training)));
    Tensor f = layer.ffn(x);
    x = layer.ln2(add(x, dropout(f, cfg_.dropout, rng, training)));
  }
  seq.memory = x;
  return seq;
}

BiAttention::BiAttention(ParamStore& store, int d, Rng& rng,
                         const std::string& prefix)
    : d_(d) {
  w_u_ = store.create(prefix + ".w_u", {3 * d}, Init::XavierUniform, rng);
}

Tensor BiAttention::operator()(const EncodedSeq& o_s, const EncodedSeq& o_q) const {
  const int ls = o_s.len();
  const int lq = o_q.len();
  Tensor w1 = slice_rows(w_u_, 0, d_);
  Tensor w2 = slice_rows(w_u_, d_, d_);
  Tensor w3 = slice_rows(w_u_, 2 * d_, d_);

  // U[i, j] = w1.q_i + w2.s_j + w3.(q_i o s_j), i over question positions
  Tensor qa = reshape(matmul(o_q.memory, w1), {lq, 1});
  Tensor sb = reshape(matmul(o_s.memory, w2), {1, ls});
  Tensor cross = matmul(mul(o_q.memory, reshape(w3, {1, d_})),
                        transpose(o_s.memory));
  Tensor u = add(add(cross, qa), sb);

  // context-to-query: softmax over question positions per snippet column
  std::vector<std::uint8_t> q_valid_mat(static_cast<std::size_t>(lq) * ls);
  for (int i = 0; i < lq; ++i)
    for (int j = 0; j < ls; ++j) q_valid_mat[i * ls + j] = o_q.valid[i];
  Tensor a = masked_softmax(u, q_valid_mat, 0);
  Tensor attended_q = matmul(transpose(a), o_q.memory);  // [ls, d]

  // query-to-context: max over valid question rows, softmax over snippet
  // positions, pooled snippet vector broadcast across rows
  std::vector<std::uint8_t> q_invalid_mat(q_valid_mat.size());
  for (std::size_t i = 0; i < q_valid_mat.size(); ++i)
    q_invalid_mat[i] = q_valid_mat[i] ? 0 : 1;
  Tensor m = reduce_max_axis0(masked_fill(u, q_invalid_mat, -1e30));
  Tensor b = masked_softmax(m, o_s.valid, 0);  // [ls]
  Tensor pooled = matmul(reshape(b, {1, ls}), o_s.memory);  // [1, d]

  return concat({o_s.memory, attended_q, mul(o_s.memory, attended_q),
                 mul(o_s.memory, pooled)},
                1);
}

MemoryProjector::MemoryProjector(ParamStore& store, int d, Rng& rng,
                                 const std::string& prefix) {
  w_ = store.create(prefix + ".w", {4 * d, d}, Init::XavierUniform, rng);
  b_ = store.create(prefix + ".b", {d}, Init::Zeros, rng);
}

Tensor MemoryProjector::operator()(const Tensor& m) const {
  return add(matmul(m, w_), b_);
}

}  // namespace page
