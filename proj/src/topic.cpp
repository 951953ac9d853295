#include "page/topic.hpp"

#include <algorithm>
#include <stdexcept>

namespace page {

using namespace ad;

TopicModel::TopicModel(ParamStore& store, const TopicConfig& cfg, Rng& rng,
                       const std::string& prefix)
    : cfg_(cfg) {
  if (cfg.clusters < 2) throw std::runtime_error("cluster count must be >= 2");
  w_d_ = store.create(prefix + ".w_d", {cfg.bow_size, cfg.hidden},
                      Init::XavierUniform, rng);
  b_d_ = store.create(prefix + ".b_d", {cfg.hidden}, Init::Zeros, rng);
  w_mu_ = store.create(prefix + ".w_mu", {cfg.hidden, cfg.clusters},
                       Init::XavierUniform, rng);
  b_mu_ = store.create(prefix + ".b_mu", {cfg.clusters}, Init::Zeros, rng);
  w_sig_ = store.create(prefix + ".w_sig", {cfg.hidden, cfg.clusters},
                        Init::XavierUniform, rng);
  b_sig_ = store.create(prefix + ".b_sig", {cfg.clusters}, Init::Zeros, rng);
  w_x_ = store.create(prefix + ".w_x", {cfg.clusters, cfg.clusters},
                      Init::XavierUniform, rng);
  b_x_ = store.create(prefix + ".b_x", {cfg.clusters}, Init::Zeros, rng);
  t_ = store.create(prefix + ".t", {cfg.clusters, cfg.d_h}, Init::Normal, rng,
                    0.1);
  v_ = store.create(prefix + ".v", {cfg.bow_size, cfg.d_h}, Init::Normal, rng,
                    0.1);
}

std::pair<Tensor, Tensor> TopicModel::infer_gaussian(const Tensor& d) const {
  if (d.size() != cfg_.bow_size)
    throw std::runtime_error("bow vector length mismatch");
  Tensor h = tanh(add(matmul(d, w_d_), b_d_));
  Tensor mu = add(matmul(h, w_mu_), b_mu_);
  Tensor logvar = add(matmul(h, w_sig_), b_sig_);
  return {mu, logvar};
}

std::pair<Tensor, Tensor> TopicModel::sample_theta(
    const Tensor& mu, const Tensor& logvar,
    const std::vector<double>& eps) const {
  Tensor x;
  if (eps.empty()) {
    x = mu;  // evaluation mode
  } else {
    if (static_cast<int>(eps.size()) != cfg_.clusters)
      throw std::runtime_error("eps length must equal the latent dim");
    Tensor sigma = exp(scale(logvar, 0.5));
    x = add(mu, mul(Tensor::from({cfg_.clusters}, eps), sigma));
  }
  Tensor theta = softmax(add(matmul(x, w_x_), b_x_), 0);
  return {x, theta};
}

Tensor TopicModel::topic_word_matrix() const {
  return softmax(matmul(t_, transpose(v_)), 1);
}

Tensor TopicModel::reconstruct(const Tensor& theta, const Tensor& beta) const {
  return matmul(theta, beta);
}

void TopicModel::persona_memories(const Tensor& theta, const Tensor& d_prime,
                                  int top_n, Tensor& m_t, Tensor& m_p,
                                  std::vector<int>& selected) const {
  if (cfg_.literal_memories) {
    m_t = reshape(matmul(theta, t_), {1, cfg_.d_h});
    m_p = reshape(matmul(d_prime, v_), {1, cfg_.d_h});
    selected.clear();
    return;
  }
  m_t = mul(t_, reshape(theta, {cfg_.clusters, 1}));
  const int n = std::min(top_n, cfg_.bow_size);
  selected.resize(cfg_.bow_size);
  for (int i = 0; i < cfg_.bow_size; ++i) selected[i] = i;
  const auto& dv = d_prime.values();
  std::stable_sort(selected.begin(), selected.end(),
                   [&](int a, int b) { return dv[a] > dv[b]; });
  selected.resize(n);
  Tensor rows = gather_rows(v_, selected);
  Tensor weights = reshape(gather_rows(d_prime, selected), {n, 1});
  m_p = mul(rows, weights);
}

Tensor TopicModel::ppm_loss(const Tensor& d, const Tensor& theta,
                            const Tensor& beta, const Tensor& mu,
                            const Tensor& logvar) const {
  Tensor recon = scale(sum(mul(d, log(reconstruct(theta, beta)))), -1.0);
  // KL(N(mu, sigma^2) || N(0, I)) = 0.5 sum(mu^2 + sigma^2 - log sigma^2 - 1)
  Tensor kl = scale(
      sum(add_scalar(sub(add(mul(mu, mu), exp(logvar)), logvar), -1.0)), 0.5);
  return add(recon, kl);
}

TopicState TopicModel::forward(const std::vector<double>& counts,
                               const std::vector<double>& eps) const {
  TopicState s;
  s.d = Tensor::from({cfg_.bow_size}, counts);
  auto [mu, logvar] = infer_gaussian(s.d);
  s.mu = mu;
  s.logvar = logvar;
  auto [x, theta] = sample_theta(mu, logvar, eps);
  s.x = x;
  s.theta = theta;
  s.beta = topic_word_matrix();
  s.d_prime = reconstruct(s.theta, s.beta);
  persona_memories(s.theta, s.d_prime, cfg_.top_n, s.m_t, s.m_p, s.selected);
  return s;
}

std::vector<std::string> top_words(const Tensor& beta, int cluster, int k,
                                   const BowVocab& vocab) {
  const int width = beta.dim(1);
  if (cluster < 0 || cluster >= beta.dim(0))
    throw std::runtime_error("cluster index out of range");
  if (width != vocab.size())
    throw std::runtime_error("beta width does not match vocab");
  std::vector<int> ids(width);
  for (int i = 0; i < width; ++i) ids[i] = i;
  const double* row = beta.values().data() + static_cast<std::size_t>(cluster) * width;
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return vocab.token_of(a) < vocab.token_of(b);
  });
  std::vector<std::string> out;
  const int kk = std::min(k, width);
  out.reserve(kk);
  for (int i = 0; i < kk; ++i) out.push_back(vocab.token_of(ids[i]));
  return out;
}

}  // namespace page
