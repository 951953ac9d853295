#include "page/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace page {

using ad::Tensor;

ModelConfig apply_ablation(ModelConfig cfg, const TrainConfig& tc) {
  if (tc.no_phi) cfg.use_history = false;
  if (tc.no_ppm) cfg.use_preference = false;
  if (tc.no_pis) cfg.use_mixture = false;
  return cfg;
}

Tensor qa_loss(const std::vector<std::vector<Tensor>>& steps,
               const std::vector<std::vector<int>>& targets) {
  if (steps.empty()) throw std::invalid_argument("qa_loss: empty batch");
  if (steps.size() != targets.size())
    throw std::invalid_argument("qa_loss: batch size mismatch");

  Tensor batch_sum;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].size() != targets[i].size())
      throw std::invalid_argument("qa_loss: steps and targets disagree");
    Tensor example_sum;
    int live = 0;
    for (std::size_t t = 0; t < targets[i].size(); ++t) {
      if (targets[i][t] == Vocab::kPad) continue;
      Tensor lp = ad::log(ad::gather_rows(steps[i][t], {targets[i][t]}));
      example_sum = example_sum.defined() ? ad::add(example_sum, lp) : lp;
      ++live;
    }
    Tensor example_loss =
        live > 0 ? ad::scale(ad::sum(example_sum), -1.0 / live)
                 : Tensor::scalar(0.0);
    batch_sum = batch_sum.defined() ? ad::add(batch_sum, example_loss)
                                    : example_loss;
  }
  return ad::scale(batch_sum, 1.0 / static_cast<double>(steps.size()));
}

Tensor preference_regularizer(const Tensor& t) {
  Tensor d = ad::sub(ad::matmul(t, ad::transpose(t)), Tensor::eye(t.dim(0)));
  return ad::sqrt(ad::sum(ad::mul(d, d)));
}

Tensor total_loss(const Tensor& qa, const Tensor& ppm, const Tensor& reg,
                  double lambda1, double lambda2) {
  return ad::add(qa, ad::scale(ad::add(ppm, ad::scale(reg, lambda2)), lambda1));
}

Trainer::Trainer(PageModel& model, ad::ParamStore& store, TrainConfig cfg)
    : model_(model), store_(store), cfg_(cfg) {
  if (cfg_.batch_size < 1)
    throw std::invalid_argument("trainer: batch_size must be at least 1");
  if (cfg_.epochs < 1)
    throw std::invalid_argument("trainer: epochs must be at least 1");
  if (cfg_.lambda1 < 0.0 || cfg_.lambda2 < 0.0)
    throw std::invalid_argument("trainer: loss weights must be nonnegative");
  if (cfg_.lr <= 0.0)
    throw std::invalid_argument("trainer: learning rate must be positive");
}

Trainer::BatchLoss Trainer::batch_loss(const std::vector<Example>& set,
                                       std::size_t begin, std::size_t end,
                                       const std::vector<std::size_t>* order,
                                       bool training, Rng& rng) {
  std::vector<std::vector<Tensor>> steps;
  std::vector<std::vector<int>> targets;
  Tensor ppm_sum;
  const bool preference = model_.topic_model() != nullptr;
  for (std::size_t k = begin; k < end; ++k) {
    const Example& ex = set[order ? (*order)[k] : k];
    BuiltInput in = model_.build(ex, training, rng);
    steps.push_back(model_.step_distributions(in, training, rng));
    targets.push_back(in.targets);
    if (preference) {
      Tensor pl = model_.ppm_loss(in);
      ppm_sum = ppm_sum.defined() ? ad::add(ppm_sum, pl) : pl;
    }
  }

  BatchLoss out;
  Tensor qa = qa_loss(steps, targets);
  out.qa = qa.item();
  if (preference) {
    Tensor ppm = ad::scale(ppm_sum, 1.0 / static_cast<double>(end - begin));
    Tensor reg =
        preference_regularizer(model_.topic_model()->preference_embeddings());
    out.ppm = ppm.item();
    out.reg = reg.item();
    out.loss = total_loss(qa, ppm, reg, cfg_.lambda1, cfg_.lambda2);
  } else {
    out.loss = qa;
  }
  out.total = out.loss.item();
  return out;
}

TrainResult Trainer::train(const std::vector<Example>& train_set,
                           const std::vector<Example>& valid_set,
                           const std::string& out_dir) {
  if (train_set.empty())
    throw std::invalid_argument("trainer: training set is empty");
  std::filesystem::create_directories(out_dir);

  Rng rng(cfg_.seed);
  ad::AdamConfig adam;
  adam.lr = cfg_.lr;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult res;
  res.checkpoint_path = out_dir + "/model.ckpt";
  res.log_path = out_dir + "/train.log";

  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    rng.shuffle(order);
    double qa_sum = 0.0, ppm_sum = 0.0, reg_sum = 0.0, total_sum = 0.0;
    int batch_index = 0;
    for (std::size_t begin = 0; begin < train_set.size();
         begin += static_cast<std::size_t>(cfg_.batch_size), ++batch_index) {
      const std::size_t end = std::min(
          begin + static_cast<std::size_t>(cfg_.batch_size), train_set.size());
      BatchLoss b = batch_loss(train_set, begin, end, &order, true, rng);
      if (!std::isfinite(b.total))
        throw std::runtime_error("non-finite loss in epoch " +
                                 std::to_string(epoch) + " batch " +
                                 std::to_string(batch_index));
      store_.zero_grads();
      ad::backward(b.loss);
      store_.adam_step(adam);

      const double n = static_cast<double>(end - begin);
      qa_sum += b.qa * n;
      ppm_sum += b.ppm * n;
      reg_sum += b.reg * n;
      total_sum += b.total * n;
    }

    EpochStats stats;
    stats.epoch = epoch;
    const double inv_n = 1.0 / static_cast<double>(train_set.size());
    stats.qa = qa_sum * inv_n;
    stats.ppm = ppm_sum * inv_n;
    stats.reg = reg_sum * inv_n;
    stats.total = total_sum * inv_n;

    if (valid_set.empty()) {
      stats.valid = stats.total;
    } else {
      Rng eval_rng(0);  // evaluation consumes no randomness
      double vsum = 0.0;
      for (std::size_t begin = 0; begin < valid_set.size();
           begin += static_cast<std::size_t>(cfg_.batch_size)) {
        const std::size_t end =
            std::min(begin + static_cast<std::size_t>(cfg_.batch_size),
                     valid_set.size());
        BatchLoss b =
            batch_loss(valid_set, begin, end, nullptr, false, eval_rng);
        vsum += b.total * static_cast<double>(end - begin);
      }
      stats.valid = vsum / static_cast<double>(valid_set.size());
    }

    res.history.push_back(stats);
    if (res.best_epoch == 0 || stats.valid < res.best_valid) {
      res.best_epoch = epoch;
      res.best_valid = stats.valid;
      nlohmann::json meta;
      meta["epoch"] = epoch;
      meta["valid"] = stats.valid;
      meta["seed"] = cfg_.seed;
      store_.save(res.checkpoint_path, meta);
    }
  }

  std::ofstream log(res.log_path, std::ios::trunc);
  log << "epoch\tqa\tppm\treg\ttotal\tvalid\n";
  char buf[192];
  for (const EpochStats& s : res.history) {
    std::snprintf(buf, sizeof(buf), "%d\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\n",
                  s.epoch, s.qa, s.ppm, s.reg, s.total, s.valid);
    log << buf;
  }
  return res;
}

}  // namespace page
