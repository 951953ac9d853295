#pragma once

#include <string>
#include <utility>
#include <vector>

#include "page/corpus.hpp"
#include "page/optim.hpp"
#include "page/tensor.hpp"

namespace page {

struct TopicConfig {
  int clusters = 10;  // K, also the latent Gaussian dimension
  int bow_size = 2000;
  int hidden = 100;  // inference MLP width
  int d_h = 512;
  int top_n = 100;  // word rows kept in the persona vocabulary memory
  // Use the single-vector memory reading (one pooled row for M_t and M_p)
  // instead of the per-row diag(.) lift.
  bool literal_memories = false;
};

// everything the decoder and the loss need from one PPM forward pass
struct TopicState {
  ad::Tensor d;        // [V_bow] observed counts (constant)
  ad::Tensor mu;       // [K]
  ad::Tensor logvar;   // [K]
  ad::Tensor x;        // [K] sampled latent
  ad::Tensor theta;    // [K] preference mixture
  ad::Tensor beta;     // [K, V_bow] row-stochastic topic-word matrix
  ad::Tensor d_prime;  // [V_bow] reconstructed distribution
  ad::Tensor m_t;      // [K, d_h] (or [1, d_h] literal)
  ad::Tensor m_p;      // [top_n, d_h] (or [1, d_h] literal)
  std::vector<int> selected;  // bow word ids backing m_p rows, descending d'
};

// Gaussian-softmax variational topic model over user BoW vectors
class TopicModel {
 public:
  TopicModel(ad::ParamStore& store, const TopicConfig& cfg, Rng& rng,
             const std::string& prefix = "ppm");

  const TopicConfig& config() const { return cfg_; }

  std::pair<ad::Tensor, ad::Tensor> infer_gaussian(const ad::Tensor& d) const;
  // eps: one standard-normal draw per latent dim; zeros in evaluation mode
  std::pair<ad::Tensor, ad::Tensor> sample_theta(
      const ad::Tensor& mu, const ad::Tensor& logvar,
      const std::vector<double>& eps) const;
  ad::Tensor topic_word_matrix() const;
  ad::Tensor reconstruct(const ad::Tensor& theta, const ad::Tensor& beta) const;
  // M_t, M_p, and the selected word ids (empty under literal memories)
  void persona_memories(const ad::Tensor& theta, const ad::Tensor& d_prime,
                        int top_n, ad::Tensor& m_t, ad::Tensor& m_p,
                        std::vector<int>& selected) const;
  ad::Tensor ppm_loss(const ad::Tensor& d, const ad::Tensor& theta,
                      const ad::Tensor& beta, const ad::Tensor& mu,
                      const ad::Tensor& logvar) const;

  // full pass: counts -> state (eps empty means evaluation mode)
  TopicState forward(const std::vector<double>& counts,
                     const std::vector<double>& eps) const;

  ad::Tensor preference_embeddings() const { return t_; }
  ad::Tensor vocabulary_embeddings() const { return v_; }

 private:
  TopicConfig cfg_;
  ad::Tensor w_d_, b_d_;      // [V_bow, hidden], [hidden]
  ad::Tensor w_mu_, b_mu_;    // [hidden, K], [K]
  ad::Tensor w_sig_, b_sig_;  // [hidden, K], [K]
  ad::Tensor w_x_, b_x_;      // [K, K], [K]
  ad::Tensor t_;              // [K, d_h] global preference embeddings
  ad::Tensor v_;              // [V_bow, d_h] global vocabulary embeddings
};

// k strongest words of one cluster row, ties lexicographic
std::vector<std::string> top_words(const ad::Tensor& beta, int cluster, int k,
                                   const BowVocab& vocab);

}  // namespace page
