#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "page/optim.hpp"
#include "page/tensor.hpp"

namespace page {

struct EncoderConfig {
  int layers = 6;
  int heads = 8;
  int d_h = 512;
  int ffn_dim = 2048;
  int max_len = 256;
  double dropout = 0.1;
};

// encoded sequence plus per-position validity (0 marks PAD)
struct EncodedSeq {
  ad::Tensor memory;  // [L, d_h]
  std::vector<std::uint8_t> valid;
  int len() const { return static_cast<int>(valid.size()); }
};

// sinusoidal table, constant (non-trainable)
ad::Tensor positional_encoding(int len, int d);

class LayerNormParams {
 public:
  LayerNormParams() = default;
  LayerNormParams(ad::ParamStore& store, const std::string& prefix, int d,
                  Rng& rng);
  ad::Tensor operator()(const ad::Tensor& x) const;

 private:
  ad::Tensor gain_, bias_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ad::ParamStore& store, const std::string& prefix, int d,
                     int heads, Rng& rng);
  // key_valid is a [Lq x Lk] flattened validity matrix; rows whose keys are
  // all masked come out as an exact zero context vector
  ad::Tensor operator()(const ad::Tensor& q, const ad::Tensor& k,
                        const ad::Tensor& v,
                        const std::vector<std::uint8_t>& key_valid) const;
  int head_count() const { return heads_; }

 private:
  int d_ = 0, heads_ = 0, dk_ = 0;
  std::vector<ad::Tensor> wq_, wk_, wv_;
  ad::Tensor wo_, bo_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ad::ParamStore& store, const std::string& prefix, int d, int ffn,
              Rng& rng);
  ad::Tensor operator()(const ad::Tensor& x) const;

 private:
  ad::Tensor w1_, b1_, w2_, b2_;
};

// post-norm self-attentive encoder shared by question, fact, and history
class TransformerEncoder {
 public:
  TransformerEncoder(ad::ParamStore& store, const EncoderConfig& cfg, Rng& rng,
                     const std::string& prefix = "enc");
  // validity is derived from the PAD id (0); over-length input is truncated
  // with a warning on stderr
  EncodedSeq encode(const std::vector<int>& token_ids, const ad::Tensor& embed,
                    bool training, Rng& rng) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Layer {
    MultiHeadAttention attn;
    LayerNormParams ln1;
    FeedForward ffn;
    LayerNormParams ln2;
  };
  EncoderConfig cfg_;
  std::vector<Layer> layers_;
};

// similarity-matrix bi-attention between a snippet sequence and the question,
// producing [L_s, 4 d_h] memories (snippet, attended question, and their
// elementwise products with the max-pooled question-to-context vector)
class BiAttention {
 public:
  BiAttention(ad::ParamStore& store, int d, Rng& rng,
              const std::string& prefix = "biattn");
  ad::Tensor operator()(const EncodedSeq& o_s, const EncodedSeq& o_q) const;

 private:
  int d_;
  ad::Tensor w_u_;  // [3 d_h], split into the three similarity components
};

// learned affine 4 d_h -> d_h applied to each bi-attended memory row
class MemoryProjector {
 public:
  MemoryProjector(ad::ParamStore& store, int d, Rng& rng,
                  const std::string& prefix = "memproj");
  ad::Tensor operator()(const ad::Tensor& m) const;

 private:
  ad::Tensor w_, b_;
};

}  // namespace page
