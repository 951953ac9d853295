#pragma once

#include <optional>
#include <string>
#include <vector>

#include "page/corpus.hpp"
#include "page/decoder.hpp"
#include "page/encoder.hpp"
#include "page/optim.hpp"
#include "page/rng.hpp"
#include "page/tensor.hpp"
#include "page/topic.hpp"

namespace page {

// One flat config covering every sub-module. Vocabulary sizes are taken from
// the vocabularies themselves, not duplicated here.
struct ModelConfig {
  int d_h = 512;
  int ffn_dim = 2048;
  int enc_layers = 6;
  int dec_layers = 2;
  int heads = 8;
  int max_len = 256;         // encoder truncation length
  int max_answer_len = 50;   // generation cap
  double dropout = 0.1;
  int clusters = 10;         // preference clusters K
  int topic_hidden = 100;
  int top_n = 100;           // persona words kept as copy candidates
  bool literal_memories = false;
  // ablations: history = knowledge-level preference, preference = the topic
  // model and its memories, mixture = the multi-view copy head
  bool use_history = true;
  bool use_preference = true;
  bool use_mixture = true;
  double length_penalty = 0.0;
};

// A single QA instance after retrieval: tokenized question/answer, the
// retrieved fact and history snippets, and the user's bag-of-words counts.
struct Example {
  std::string question_id;
  std::string user_id;
  std::vector<std::string> question;
  std::vector<std::string> answer;  // empty at inference time
  std::vector<std::vector<std::string>> facts;
  std::vector<std::vector<std::string>> history;
  std::vector<double> bow;  // |V_bow| counts, empty when preference is off
};

// Everything derived from one example that decoding needs.
struct BuiltInput {
  ExtendedVocab ext;
  MemoryBank bank;
  TopicState topic;
  std::vector<int> targets;  // answer in extended ids, EOS-terminated
};

// Full answer generator: shared encoder, bi-attention fact/history memories,
// topic-model preference memories, and the persona decoder.
class PageModel {
 public:
  PageModel(ad::ParamStore& store, const ModelConfig& cfg, const Vocab& vocab,
            const BowVocab& bow, Rng& rng);

  // Encodes question, facts, history, and preference memories; extends the
  // vocabulary with every copyable OOV; maps the answer to target ids.
  // Training mode samples the topic epsilon and applies dropout from rng.
  BuiltInput build(const Example& ex, bool training, Rng& rng) const;

  // teacher forcing: one distribution over in.ext per target position
  std::vector<ad::Tensor> step_distributions(const BuiltInput& in,
                                             bool training, Rng& rng) const;

  ad::Tensor ppm_loss(const BuiltInput& in) const;  // throws when disabled

  DecodeResult generate(const BuiltInput& in, int beam) const;

  const ModelConfig& config() const { return cfg_; }
  const ad::Tensor& embedding() const { return embed_; }
  const Vocab& vocab() const { return *vocab_; }
  const BowVocab& bow_vocab() const { return *bow_; }
  const PersonaDecoder& decoder() const { return decoder_; }
  const TopicModel* topic_model() const { return topic_ ? &*topic_ : nullptr; }

 private:
  void encode_snippets(const std::vector<std::vector<std::string>>& snippets,
                       const EncodedSeq& q, ExtendedVocab& ext, bool training,
                       Rng& rng, ad::Tensor& memory,
                       std::vector<std::uint8_t>& valid,
                       std::vector<int>& src) const;

  ModelConfig cfg_;
  const Vocab* vocab_;
  const BowVocab* bow_;
  ad::Tensor embed_;
  TransformerEncoder encoder_;
  BiAttention biattn_;
  MemoryProjector projector_;
  std::optional<TopicModel> topic_;
  PersonaDecoder decoder_;
};

}  // namespace page
