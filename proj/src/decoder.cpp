#include "page/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace page {

using ad::Shape;
using ad::Tensor;

int ExtendedVocab::extend(const std::string& token) {
  if (base_->contains(token)) return base_->id_of(token);
  auto it = oov_ids_.find(token);
  if (it != oov_ids_.end()) return it->second;
  const int id = size();
  oov_ids_.emplace(token, id);
  oov_.push_back(token);
  return id;
}

int ExtendedVocab::lookup(const std::string& token) const {
  if (base_->contains(token)) return base_->id_of(token);
  auto it = oov_ids_.find(token);
  if (it != oov_ids_.end()) return it->second;
  return Vocab::kUnk;
}

const std::string& ExtendedVocab::token_of(int id) const {
  if (id < base_->size()) return base_->token_of(id);
  const int k = id - base_->size();
  if (k < 0 || k >= static_cast<int>(oov_.size()))
    throw std::out_of_range("extended vocab id out of range");
  return oov_[static_cast<std::size_t>(k)];
}

namespace {

// repeat a per-key validity vector for every query row
std::vector<std::uint8_t> tile_valid(const std::vector<std::uint8_t>& key,
                                     int rows) {
  std::vector<std::uint8_t> out;
  out.reserve(key.size() * static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r)
    out.insert(out.end(), key.begin(), key.end());
  return out;
}

std::vector<std::uint8_t> causal_mask(int len) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(len) * len, 0);
  for (int t = 0; t < len; ++t)
    for (int j = 0; j <= t; ++j) out[t * len + j] = 1;
  return out;
}

bool any_valid(const std::vector<std::uint8_t>& v) {
  for (auto f : v)
    if (f) return true;
  return false;
}

}  // namespace

PersonaDecoder::PersonaDecoder(ad::ParamStore& store, const DecoderConfig& cfg,
                               Rng& rng, const std::string& prefix)
    : cfg_(cfg) {
  if (cfg.layers < 1) throw std::invalid_argument("decoder: layers must be >= 1");
  if (cfg.d_h % cfg.heads != 0)
    throw std::invalid_argument("decoder: d_h must divide evenly into heads");
  if (cfg.vocab < 5)
    throw std::invalid_argument("decoder: vocab must cover specials");

  layers_.resize(static_cast<std::size_t>(cfg.layers));
  for (int i = 0; i < cfg.layers; ++i) {
    const std::string lp = prefix + ".l" + std::to_string(i) + ".";
    Layer& l = layers_[static_cast<std::size_t>(i)];
    l.self = MultiHeadAttention(store, lp + "self", cfg.d_h, cfg.heads, rng);
    l.ln_self = LayerNormParams(store, lp + "ln_self", cfg.d_h, rng);
    l.xq = MultiHeadAttention(store, lp + "xq", cfg.d_h, cfg.heads, rng);
    l.ln_q = LayerNormParams(store, lp + "ln_q", cfg.d_h, rng);
    l.xf = MultiHeadAttention(store, lp + "xf", cfg.d_h, cfg.heads, rng);
    l.ln_f = LayerNormParams(store, lp + "ln_f", cfg.d_h, rng);
    if (cfg.use_history) {
      l.xh = MultiHeadAttention(store, lp + "xh", cfg.d_h, cfg.heads, rng);
      l.ln_h = LayerNormParams(store, lp + "ln_h", cfg.d_h, rng);
    }
    if (cfg.use_preference) {
      l.xt = MultiHeadAttention(store, lp + "xt", cfg.d_h, cfg.heads, rng);
      l.ln_t = LayerNormParams(store, lp + "ln_t", cfg.d_h, rng);
    }
    l.ffn = FeedForward(store, lp + "ffn", cfg.d_h, cfg.ffn_dim, rng);
    l.ln_ffn = LayerNormParams(store, lp + "ln_ffn", cfg.d_h, rng);
  }

  w_v_ = store.create(prefix + ".w_v", {cfg.d_h, cfg.vocab},
                      ad::Init::XavierUniform, rng);
  b_v_ = store.create(prefix + ".b_v", {cfg.vocab}, ad::Init::Zeros, rng);

  if (cfg.use_mixture) {
    view_names_ = {"q", "f"};
    if (cfg.use_history) view_names_.push_back("h");
    if (cfg.use_preference) view_names_.push_back("p");
    for (const std::string& v : view_names_) {
      const std::string vp = prefix + ".view_" + v + ".";
      ViewParams p;
      p.w = store.create(vp + "w", {cfg.d_h, cfg.d_h}, ad::Init::XavierUniform,
                         rng);
      p.ws = store.create(vp + "ws", {cfg.d_h, cfg.d_h},
                          ad::Init::XavierUniform, rng);
      p.b = store.create(vp + "b", {cfg.d_h}, ad::Init::Zeros, rng);
      p.omega = store.create(vp + "omega", {cfg.d_h, 1},
                             ad::Init::XavierUniform, rng);
      views_.push_back(p);
    }
    const int n_views = 1 + static_cast<int>(views_.size());
    gate_w_ = store.create(prefix + ".gate.w", {n_views * cfg.d_h, n_views},
                           ad::Init::XavierUniform, rng);
    gate_b_ = store.create(prefix + ".gate.b", {n_views}, ad::Init::Zeros, rng);
  }
}

void PersonaDecoder::check_bank(const MemoryBank& bank) const {
  auto need = [&](const Tensor& m, const char* what) {
    if (!m.defined() || m.rank() != 2 || m.dim(1) != cfg_.d_h)
      throw std::invalid_argument(std::string("decoder: bank memory ") + what +
                                  " missing or not [rows, d_h]");
  };
  need(bank.o_q, "o_q");
  need(bank.m_f, "m_f");
  auto aligned = [](int rows, std::size_t nvalid, std::size_t nsrc,
                    const char* what) {
    if (static_cast<std::size_t>(rows) != nvalid ||
        static_cast<std::size_t>(rows) != nsrc)
      throw std::invalid_argument(
          std::string("decoder: source ids misaligned with memory ") + what);
  };
  aligned(bank.o_q.dim(0), bank.q_valid.size(), bank.q_src.size(), "o_q");
  aligned(bank.m_f.dim(0), bank.f_valid.size(), bank.f_src.size(), "m_f");
  if (cfg_.use_history) {
    need(bank.m_h, "m_h");
    aligned(bank.m_h.dim(0), bank.h_valid.size(), bank.h_src.size(), "m_h");
  }
  if (cfg_.use_preference) {
    need(bank.m_t, "m_t");
    need(bank.m_p, "m_p");
    if (bank.literal_preference) {
      if (!bank.d_prime.defined() ||
          bank.d_prime.size() != static_cast<int>(bank.bow_src.size()))
        throw std::invalid_argument(
            "decoder: literal preference needs d_prime aligned with bow_src");
    } else {
      aligned(bank.m_p.dim(0), bank.p_valid.size(), bank.p_src.size(), "m_p");
    }
  }
}

ad::Tensor PersonaDecoder::decode_states(const std::vector<int>& prefix_ids,
                                         const ad::Tensor& embed,
                                         const MemoryBank& bank, bool training,
                                         Rng& rng) const {
  if (prefix_ids.empty() || prefix_ids[0] != Vocab::kBos)
    throw std::invalid_argument("decoder: prefix must start with BOS");
  check_bank(bank);

  const int t_len = static_cast<int>(prefix_ids.size());
  const int rows = embed.dim(0);
  std::vector<int> mapped(prefix_ids);
  for (int& id : mapped)
    if (id < 0 || id >= rows) id = Vocab::kUnk;

  Tensor x = ad::scale(ad::gather_rows(embed, mapped),
                       std::sqrt(static_cast<double>(cfg_.d_h)));
  x = ad::add(x, positional_encoding(t_len, cfg_.d_h));
  x = ad::dropout(x, cfg_.dropout, rng, training);

  const auto self_valid = causal_mask(t_len);
  const auto q_valid = tile_valid(bank.q_valid, t_len);
  const auto f_valid = tile_valid(bank.f_valid, t_len);
  std::vector<std::uint8_t> h_valid, t_valid;
  if (cfg_.use_history) h_valid = tile_valid(bank.h_valid, t_len);
  if (cfg_.use_preference)
    t_valid = tile_valid(
        std::vector<std::uint8_t>(static_cast<std::size_t>(bank.m_t.dim(0)), 1),
        t_len);

  for (const Layer& l : layers_) {
    Tensor a = l.self(x, x, x, self_valid);
    x = l.ln_self(ad::add(x, ad::dropout(a, cfg_.dropout, rng, training)));
    a = l.xq(x, bank.o_q, bank.o_q, q_valid);
    x = l.ln_q(ad::add(x, ad::dropout(a, cfg_.dropout, rng, training)));
    a = l.xf(x, bank.m_f, bank.m_f, f_valid);
    x = l.ln_f(ad::add(x, ad::dropout(a, cfg_.dropout, rng, training)));
    if (cfg_.use_history) {
      a = l.xh(x, bank.m_h, bank.m_h, h_valid);
      x = l.ln_h(ad::add(x, ad::dropout(a, cfg_.dropout, rng, training)));
    }
    if (cfg_.use_preference) {
      a = l.xt(x, bank.m_t, bank.m_t, t_valid);
      x = l.ln_t(ad::add(x, ad::dropout(a, cfg_.dropout, rng, training)));
    }
    Tensor f = l.ffn(x);
    x = l.ln_ffn(ad::add(x, ad::dropout(f, cfg_.dropout, rng, training)));
  }
  return x;
}

ad::Tensor PersonaDecoder::view_alpha(const ViewParams& vp, const Tensor& m,
                                      const Tensor& s_t,
                                      const std::vector<std::uint8_t>& valid)
    const {
  Tensor e = ad::tanh(ad::add(ad::add(ad::matmul(m, vp.w),
                                      ad::matmul(s_t, vp.ws)),
                              vp.b));
  Tensor scores = ad::reshape(ad::matmul(e, vp.omega), {m.dim(0)});
  return ad::masked_softmax(scores, valid, 0);
}

StepMixture PersonaDecoder::step(const ad::Tensor& states, int t,
                                 const MemoryBank& bank, int ext_size) const {
  if (t < 0 || t >= states.dim(0))
    throw std::invalid_argument("decoder: step index out of range");
  if (ext_size < cfg_.vocab)
    throw std::invalid_argument("decoder: extended vocab smaller than base");

  Tensor s_t = ad::slice_rows(states, t, 1);  // [1, d_h]
  Tensor logits = ad::add(ad::matmul(s_t, w_v_), b_v_);
  Tensor p_v = ad::softmax(logits, 1);
  const int n_oov = ext_size - cfg_.vocab;
  if (n_oov > 0) p_v = ad::concat({p_v, Tensor::zeros({1, n_oov})}, 1);
  p_v = ad::reshape(p_v, {ext_size});

  StepMixture out;
  out.views.push_back(p_v);
  out.view_names.push_back("v");
  if (!cfg_.use_mixture) {
    out.p = p_v;
    return out;
  }

  std::vector<Tensor> ctxs;
  std::vector<std::uint8_t> alive{1};  // the vocabulary view is always live
  for (std::size_t i = 0; i < views_.size(); ++i) {
    const std::string& name = view_names_[i];
    const Tensor* m = nullptr;
    const std::vector<std::uint8_t>* valid = nullptr;
    const std::vector<int>* src = nullptr;
    std::vector<std::uint8_t> ones;
    if (name == "q") {
      m = &bank.o_q;
      valid = &bank.q_valid;
      src = &bank.q_src;
    } else if (name == "f") {
      m = &bank.m_f;
      valid = &bank.f_valid;
      src = &bank.f_src;
    } else if (name == "h") {
      m = &bank.m_h;
      valid = &bank.h_valid;
      src = &bank.h_src;
    } else {  // persona words
      m = &bank.m_p;
      if (bank.literal_preference) {
        ones.assign(static_cast<std::size_t>(bank.m_p.dim(0)), 1);
        valid = &ones;
        src = &bank.bow_src;
      } else {
        valid = &bank.p_valid;
        src = &bank.p_src;
      }
    }
    Tensor alpha = view_alpha(views_[i], *m, s_t, *valid);
    ctxs.push_back(ad::matmul(ad::reshape(alpha, {1, m->dim(0)}), *m));
    Tensor p_copy;
    if (name == "p" && bank.literal_preference)
      p_copy = ad::scatter_sum(bank.d_prime, *src, ext_size);
    else
      p_copy = ad::scatter_sum(alpha, *src, ext_size);
    out.views.push_back(p_copy);
    out.view_names.push_back(name);
    alive.push_back(any_valid(*valid) ? 1 : 0);
  }

  std::vector<Tensor> gate_in{s_t};
  gate_in.insert(gate_in.end(), ctxs.begin(), ctxs.end());
  Tensor g_logits = ad::add(ad::matmul(ad::concat(gate_in, 1), gate_w_),
                            gate_b_);
  out.gamma = ad::masked_softmax(g_logits, alive, 1);

  Tensor g_flat = ad::reshape(out.gamma, {static_cast<int>(out.views.size())});
  Tensor total;
  for (std::size_t i = 0; i < out.views.size(); ++i) {
    Tensor gi = ad::gather_rows(g_flat, {static_cast<int>(i)});
    Tensor term = ad::mul(out.views[i], gi);
    total = total.defined() ? ad::add(total, term) : term;
  }
  out.p = total;
  return out;
}

DecodeResult PersonaDecoder::greedy(const MemoryBank& bank,
                                    const ad::Tensor& embed, int ext_size,
                                    int max_len) const {
  Rng idle(0);
  DecodeResult res;
  std::vector<int> prefix{Vocab::kBos};
  for (int step_i = 0; step_i < max_len; ++step_i) {
    Tensor states = decode_states(prefix, embed, bank, false, idle);
    StepMixture mx =
        step(states, static_cast<int>(prefix.size()) - 1, bank, ext_size);
    int best = 0;
    double best_p = mx.p.values()[0];
    for (int i = 1; i < ext_size; ++i)
      if (mx.p.values()[i] > best_p) {
        best_p = mx.p.values()[i];
        best = i;
      }
    res.log_prob += std::log(std::max(best_p, ad::kLogFloor));
    if (mx.gamma.defined()) res.gamma_trace.push_back(mx.gamma.values());
    if (best == Vocab::kEos) break;
    res.ids.push_back(best);
    prefix.push_back(best);
  }
  return res;
}

namespace {

struct Hyp {
  std::vector<int> ids;  // without BOS
  double log_prob = 0.0;
  bool done = false;
  std::vector<std::vector<double>> trace;
};

double hyp_score(const Hyp& h, double penalty) {
  if (penalty <= 0.0) return h.log_prob;
  const double len = std::max<std::size_t>(h.ids.size() + (h.done ? 1 : 0), 1);
  return h.log_prob / std::pow(len, penalty);
}

}  // namespace

DecodeResult PersonaDecoder::beam_search(const MemoryBank& bank,
                                         const ad::Tensor& embed, int ext_size,
                                         int beam, int max_len) const {
  if (beam < 1) throw std::invalid_argument("decoder: beam must be >= 1");
  Rng idle(0);
  std::vector<Hyp> live{Hyp{}};
  std::vector<Hyp> done;

  for (int step_i = 0; step_i < max_len && !live.empty(); ++step_i) {
    struct Cand {
      int hyp;
      int token;
      double log_prob;
      std::vector<double> gamma;
    };
    std::vector<Cand> cands;
    for (std::size_t hi = 0; hi < live.size(); ++hi) {
      std::vector<int> prefix{Vocab::kBos};
      prefix.insert(prefix.end(), live[hi].ids.begin(), live[hi].ids.end());
      Tensor states = decode_states(prefix, embed, bank, false, idle);
      StepMixture mx =
          step(states, static_cast<int>(prefix.size()) - 1, bank, ext_size);
      const auto& p = mx.p.values();
      std::vector<double> gamma =
          mx.gamma.defined() ? mx.gamma.values() : std::vector<double>{};
      for (int tok = 0; tok < ext_size; ++tok) {
        const double lp =
            live[hi].log_prob + std::log(std::max(p[tok], ad::kLogFloor));
        cands.push_back({static_cast<int>(hi), tok, lp, gamma});
      }
    }
    // candidates were generated in token-id order per hypothesis, so a stable
    // sort breaks score ties toward lower ids, matching greedy
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) {
                       return a.log_prob > b.log_prob;
                     });
    if (static_cast<int>(cands.size()) > beam) cands.resize(static_cast<std::size_t>(beam));

    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      Hyp h = live[static_cast<std::size_t>(c.hyp)];
      h.log_prob = c.log_prob;
      if (!c.gamma.empty()) h.trace.push_back(c.gamma);
      if (c.token == Vocab::kEos) {
        h.done = true;
        done.push_back(std::move(h));
      } else {
        h.ids.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);

    if (cfg_.length_penalty <= 0.0 && !done.empty() && !live.empty()) {
      double best_done = hyp_score(done[0], 0.0);
      for (const Hyp& h : done) best_done = std::max(best_done, hyp_score(h, 0.0));
      double best_live = hyp_score(live[0], 0.0);
      for (const Hyp& h : live) best_live = std::max(best_live, hyp_score(h, 0.0));
      // extensions only lower log-prob, so the pool leader is final
      if (best_done >= best_live) break;
    }
  }
  // hypotheses still alive at the length cap end without EOS
  for (Hyp& h : live) done.push_back(std::move(h));

  const Hyp* best = nullptr;
  for (const Hyp& h : done)
    if (!best || hyp_score(h, cfg_.length_penalty) >
                     hyp_score(*best, cfg_.length_penalty))
      best = &h;

  DecodeResult res;
  if (best) {
    res.ids = best->ids;
    res.log_prob = best->log_prob;
    res.gamma_trace = best->trace;
  }
  return res;
}

std::string detokenize(const std::vector<int>& ids, const ExtendedVocab& ext) {
  std::string out;
  for (int id : ids) {
    if (id == Vocab::kPad || id == Vocab::kBos || id == Vocab::kEos) continue;
    if (!out.empty()) out += ' ';
    out += ext.token_of(id);
  }
  return out;
}

}  // namespace page
