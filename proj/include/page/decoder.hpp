#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "page/corpus.hpp"
#include "page/encoder.hpp"
#include "page/optim.hpp"
#include "page/tensor.hpp"

namespace page {

struct DecoderConfig {
  int layers = 2;
  int heads = 8;
  int d_h = 512;
  int ffn_dim = 2048;
  int vocab = 0;  // base generation vocabulary size, set by the model
  double dropout = 0.1;
  // ablation switches: history removes the M_h cross-attention and its copy
  // view, preference removes M_t/M_p and the persona-word view, mixture off
  // collapses the output to the plain vocabulary softmax
  bool use_history = true;
  bool use_preference = true;
  bool use_mixture = true;
  // beam scores divide total log-prob by len^penalty; 0 keeps pure log-prob
  double length_penalty = 0.0;
};

// Base vocabulary plus per-example appended OOV slots. Base ids are
// unchanged; each new OOV token gets the next id past the base range.
class ExtendedVocab {
 public:
  explicit ExtendedVocab(const Vocab& base) : base_(&base) {}

  // id of token, appending an OOV slot when it is new
  int extend(const std::string& token);
  // id of token if present (base or appended), else UNK; never appends
  int lookup(const std::string& token) const;
  const std::string& token_of(int id) const;

  int size() const { return base_->size() + static_cast<int>(oov_.size()); }
  int base_size() const { return base_->size(); }
  int oov_count() const { return static_cast<int>(oov_.size()); }
  const std::vector<std::string>& oov_tokens() const { return oov_; }

 private:
  const Vocab* base_;
  std::vector<std::string> oov_;
  std::unordered_map<std::string, int> oov_ids_;
};

// Encoded memories a single example decodes against. Source ids live in the
// extended vocabulary and align row-for-row with their memory; the preference
// embedding memory m_t has no sources because its rows are not words.
struct MemoryBank {
  ad::Tensor o_q;  // [L_q, d_h] encoded question
  std::vector<std::uint8_t> q_valid;
  std::vector<int> q_src;

  ad::Tensor m_f;  // [k*L_f, d_h] fact memories
  std::vector<std::uint8_t> f_valid;
  std::vector<int> f_src;

  ad::Tensor m_h;  // [k*L_h, d_h] history memories
  std::vector<std::uint8_t> h_valid;
  std::vector<int> h_src;

  ad::Tensor m_t;  // [K, d_h] preference embeddings weighted by theta
  ad::Tensor m_p;  // [top_n, d_h] persona word embeddings weighted by d'
  std::vector<std::uint8_t> p_valid;
  std::vector<int> p_src;

  // single-row persona memory variant: the whole word distribution d' is the
  // copy distribution instead of attention over selected rows
  bool literal_preference = false;
  ad::Tensor d_prime;        // [|V_bow|]
  std::vector<int> bow_src;  // extended ids aligned with d_prime
};

// One decoding step's output mixture. views[0] is always the vocabulary
// softmax; the rest follow view_names ("q", "f", "h", "p" as configured).
// gamma is undefined when the mixture is disabled.
struct StepMixture {
  ad::Tensor p;  // [ext] final distribution
  ad::Tensor gamma;
  std::vector<ad::Tensor> views;
  std::vector<std::string> view_names;
};

struct DecodeResult {
  std::vector<int> ids;  // extended-vocab ids, BOS/EOS stripped
  double log_prob = 0.0;
  std::vector<std::vector<double>> gamma_trace;  // per emitted step
};

// Two-layer answer decoder: per layer, causal self-attention, then
// cross-attention to the question, facts, history, and preference embeddings
// in that order, then a feed-forward block, each wrapped in residual +
// layer-norm. The output head mixes the vocabulary softmax with copy
// distributions from four attention views through a learned gate.
class PersonaDecoder {
 public:
  PersonaDecoder(ad::ParamStore& store, const DecoderConfig& cfg, Rng& rng,
                 const std::string& prefix = "dec");

  // prefix_ids must begin with BOS; ids outside the embedding table (copied
  // OOVs) fall back to the UNK row. Returns one state row per prefix position.
  ad::Tensor decode_states(const std::vector<int>& prefix_ids,
                           const ad::Tensor& embed, const MemoryBank& bank,
                           bool training, Rng& rng) const;

  // mixture for state row t against an extended vocabulary of ext_size ids
  StepMixture step(const ad::Tensor& states, int t, const MemoryBank& bank,
                   int ext_size) const;

  DecodeResult greedy(const MemoryBank& bank, const ad::Tensor& embed,
                      int ext_size, int max_len) const;
  // standard length-wise beam; ties break toward lower token ids so beam=1
  // reproduces greedy token-for-token
  DecodeResult beam_search(const MemoryBank& bank, const ad::Tensor& embed,
                           int ext_size, int beam, int max_len) const;

  const DecoderConfig& config() const { return cfg_; }

 private:
  struct Layer {
    MultiHeadAttention self, xq, xf, xh, xt;
    LayerNormParams ln_self, ln_q, ln_f, ln_h, ln_t, ln_ffn;
    FeedForward ffn;
  };
  struct ViewParams {
    ad::Tensor w, ws, b, omega;
  };

  ad::Tensor view_alpha(const ViewParams& vp, const ad::Tensor& m,
                        const ad::Tensor& s_t,
                        const std::vector<std::uint8_t>& valid) const;
  void check_bank(const MemoryBank& bank) const;

  DecoderConfig cfg_;
  std::vector<Layer> layers_;
  ad::Tensor w_v_, b_v_;
  std::vector<ViewParams> views_;          // q, f, [h], [p]
  std::vector<std::string> view_names_;    // matches views_
  ad::Tensor gate_w_, gate_b_;
};

// space-joined surface strings; copied OOV ids surface as their source token
std::string detokenize(const std::vector<int>& ids, const ExtendedVocab& ext);

}  // namespace page
