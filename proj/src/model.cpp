#include "page/model.hpp"

#include <stdexcept>

namespace page {

using ad::Tensor;

namespace {

EncoderConfig enc_cfg(const ModelConfig& m) {
  EncoderConfig c;
  c.layers = m.enc_layers;
  c.heads = m.heads;
  c.d_h = m.d_h;
  c.ffn_dim = m.ffn_dim;
  c.max_len = m.max_len;
  c.dropout = m.dropout;
  return c;
}

DecoderConfig dec_cfg(const ModelConfig& m, int vocab) {
  DecoderConfig c;
  c.layers = m.dec_layers;
  c.heads = m.heads;
  c.d_h = m.d_h;
  c.ffn_dim = m.ffn_dim;
  c.vocab = vocab;
  c.dropout = m.dropout;
  c.use_history = m.use_history;
  c.use_preference = m.use_preference;
  c.use_mixture = m.use_mixture;
  c.length_penalty = m.length_penalty;
  return c;
}

TopicConfig topic_cfg(const ModelConfig& m, int bow_size) {
  TopicConfig c;
  c.clusters = m.clusters;
  c.bow_size = bow_size;
  c.hidden = m.topic_hidden;
  c.d_h = m.d_h;
  c.top_n = m.top_n;
  c.literal_memories = m.literal_memories;
  return c;
}

Tensor make_embed(ad::ParamStore& store, const ModelConfig& cfg,
                  const Vocab& vocab, const BowVocab& bow, Rng& rng) {
  if (vocab.size() < 5)
    throw std::invalid_argument("model: vocabulary too small");
  if (cfg.use_preference && bow.size() < 1)
    throw std::invalid_argument("model: preference modeling needs bow words");
  if (cfg.top_n < 1) throw std::invalid_argument("model: top_n must be >= 1");
  return store.create("embed", {vocab.size(), cfg.d_h}, ad::Init::Normal, rng,
                      0.1);
}

std::vector<int> to_ids(const Vocab& v, const std::vector<std::string>& toks) {
  std::vector<int> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(v.id_or_unk(t));
  return out;
}

}  // namespace

PageModel::PageModel(ad::ParamStore& store, const ModelConfig& cfg,
                     const Vocab& vocab, const BowVocab& bow, Rng& rng)
    : cfg_(cfg),
      vocab_(&vocab),
      bow_(&bow),
      embed_(make_embed(store, cfg, vocab, bow, rng)),
      encoder_(store, enc_cfg(cfg), rng),
      biattn_(store, cfg.d_h, rng),
      projector_(store, cfg.d_h, rng),
      topic_(cfg.use_preference
                 ? std::optional<TopicModel>(
                       std::in_place, store, topic_cfg(cfg, bow.size()), rng)
                 : std::nullopt),
      decoder_(store, dec_cfg(cfg, vocab.size()), rng) {}

void PageModel::encode_snippets(
    const std::vector<std::vector<std::string>>& snippets, const EncodedSeq& q,
    ExtendedVocab& ext, bool training, Rng& rng, ad::Tensor& memory,
    std::vector<std::uint8_t>& valid, std::vector<int>& src) const {
  const std::vector<std::string> pad_snippet{
      Vocab::special_token(Vocab::kPad)};
  std::vector<std::vector<std::string>> use(snippets);
  if (use.empty()) use.push_back(pad_snippet);

  std::vector<Tensor> parts;
  for (const auto& raw : use) {
    const auto& toks = raw.empty() ? pad_snippet : raw;
    EncodedSeq o_s =
        encoder_.encode(to_ids(*vocab_, toks), embed_, training, rng);
    parts.push_back(projector_(biattn_(o_s, q)));
    for (int i = 0; i < o_s.len(); ++i) {
      valid.push_back(o_s.valid[static_cast<std::size_t>(i)]);
      src.push_back(ext.extend(toks[static_cast<std::size_t>(i)]));
    }
  }
  memory = parts.size() == 1 ? parts[0] : ad::concat(parts, 0);
}

BuiltInput PageModel::build(const Example& ex, bool training, Rng& rng) const {
  if (ex.question.empty())
    throw std::invalid_argument("model: question must not be empty");
  BuiltInput in{ExtendedVocab(*vocab_), MemoryBank{}, TopicState{}, {}};

  EncodedSeq q =
      encoder_.encode(to_ids(*vocab_, ex.question), embed_, training, rng);
  in.bank.o_q = q.memory;
  in.bank.q_valid = q.valid;
  for (int i = 0; i < q.len(); ++i)
    in.bank.q_src.push_back(in.ext.extend(ex.question[static_cast<std::size_t>(i)]));

  encode_snippets(ex.facts, q, in.ext, training, rng, in.bank.m_f,
                  in.bank.f_valid, in.bank.f_src);
  if (cfg_.use_history)
    encode_snippets(ex.history, q, in.ext, training, rng, in.bank.m_h,
                    in.bank.h_valid, in.bank.h_src);

  if (cfg_.use_preference) {
    if (static_cast<int>(ex.bow.size()) != bow_->size())
      throw std::invalid_argument("model: bow counts do not match bow vocab");
    std::vector<double> eps;
    if (training) {
      eps.resize(static_cast<std::size_t>(cfg_.clusters));
      for (double& e : eps) e = rng.normal();
    }
    in.topic = topic_->forward(ex.bow, eps);
    in.bank.m_t = in.topic.m_t;
    in.bank.m_p = in.topic.m_p;
    if (cfg_.literal_memories) {
      in.bank.literal_preference = true;
      in.bank.d_prime = in.topic.d_prime;
      for (int w = 0; w < bow_->size(); ++w)
        in.bank.bow_src.push_back(in.ext.extend(bow_->token_of(w)));
    } else {
      for (int id : in.topic.selected) {
        in.bank.p_src.push_back(in.ext.extend(bow_->token_of(id)));
        in.bank.p_valid.push_back(1);
      }
    }
  }

  // target OOVs keep their extended id only while the copy head can reach
  // them; without it they fall back to UNK
  for (const auto& tok : ex.answer)
    in.targets.push_back(cfg_.use_mixture ? in.ext.lookup(tok)
                                          : vocab_->id_or_unk(tok));
  if (!ex.answer.empty()) in.targets.push_back(Vocab::kEos);
  return in;
}

std::vector<ad::Tensor> PageModel::step_distributions(const BuiltInput& in,
                                                      bool training,
                                                      Rng& rng) const {
  if (in.targets.empty())
    throw std::invalid_argument("model: no target tokens to teacher-force");
  std::vector<int> prefix{Vocab::kBos};
  prefix.insert(prefix.end(), in.targets.begin(), in.targets.end() - 1);
  Tensor states = decoder_.decode_states(prefix, embed_, in.bank, training, rng);
  std::vector<Tensor> out;
  out.reserve(in.targets.size());
  for (std::size_t t = 0; t < in.targets.size(); ++t)
    out.push_back(
        decoder_.step(states, static_cast<int>(t), in.bank, in.ext.size()).p);
  return out;
}

ad::Tensor PageModel::ppm_loss(const BuiltInput& in) const {
  if (!topic_) throw std::logic_error("model: preference modeling disabled");
  return topic_->ppm_loss(in.topic.d, in.topic.theta, in.topic.beta,
                          in.topic.mu, in.topic.logvar);
}

DecodeResult PageModel::generate(const BuiltInput& in, int beam) const {
  return decoder_.beam_search(in.bank, embed_, in.ext.size(), beam,
                              cfg_.max_answer_len);
}

}  // namespace page
