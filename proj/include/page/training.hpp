#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "page/model.hpp"

namespace page {

struct TrainConfig {
  double lambda1 = 1.0;  // weight of the topic loss block
  double lambda2 = 0.1;  // weight of the orthogonality regularizer inside it
  double lr = 1e-4;
  double dropout = 0.1;
  int batch_size = 32;
  int epochs = 20;
  int beam = 10;
  int k_snippets = 5;
  std::uint64_t seed = 17;
  bool no_phi = false;  // drop the history path
  bool no_ppm = false;  // drop the preference/topic path
  bool no_pis = false;  // drop the mixture, keep the plain generator
};

// applies the ablation flags to a model configuration
ModelConfig apply_ablation(ModelConfig cfg, const TrainConfig& tc);

// batch negative log likelihood of the target tokens: per example the mean
// over non-PAD target positions, then averaged over the batch. Probabilities
// are clamped at 1e-10 before the log.
ad::Tensor qa_loss(const std::vector<std::vector<ad::Tensor>>& steps,
                   const std::vector<std::vector<int>>& targets);

// ‖T·Tᵀ − I‖_F, pushing preference embeddings toward orthonormal rows
ad::Tensor preference_regularizer(const ad::Tensor& t);

// L = L_QA + λ1·(L_PPM + λ2·R)
ad::Tensor total_loss(const ad::Tensor& qa, const ad::Tensor& ppm,
                      const ad::Tensor& reg, double lambda1, double lambda2);

struct EpochStats {
  int epoch = 0;     // 1-based
  double qa = 0.0;   // answer loss, example-weighted epoch mean
  double ppm = 0.0;  // topic loss, zero when the path is ablated
  double reg = 0.0;  // regularizer, example-weighted epoch mean
  double total = 0.0;
  double valid = 0.0;  // total loss over the validation set
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;  // 1-based epoch whose checkpoint was kept
  double best_valid = 0.0;
  std::string checkpoint_path;
  std::string log_path;
};

// Epoch loop with seeded shuffling, teacher forcing, one optimizer step per
// batch, per-epoch validation, and best-validation checkpointing. Writes
// `train.log` (TSV: epoch, qa, ppm, reg, total, valid) and `model.ckpt`
// into out_dir. Aborts on a non-finite loss naming the offending batch.
class Trainer {
 public:
  Trainer(PageModel& model, ad::ParamStore& store, TrainConfig cfg);

  TrainResult train(const std::vector<Example>& train_set,
                    const std::vector<Example>& valid_set,
                    const std::string& out_dir);

  const TrainConfig& config() const { return cfg_; }

 private:
  struct BatchLoss {
    ad::Tensor loss;
    double qa = 0.0, ppm = 0.0, reg = 0.0, total = 0.0;
  };
  BatchLoss batch_loss(const std::vector<Example>& set, std::size_t begin,
                       std::size_t end, const std::vector<std::size_t>* order,
                       bool training, Rng& rng);

  PageModel& model_;
  ad::ParamStore& store_;
  TrainConfig cfg_;
};

}  // namespace page
