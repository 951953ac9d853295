#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace page {

using Sentence = std::vector<std::string>;

enum class RougeVariant { kRouge1, kRouge2, kRougeL };

// clipped n-gram overlap F1 for variants 1/2, sentence-level LCS F1 for L;
// empty candidate or reference scores 0
double rouge_f1(const Sentence& candidate, const Sentence& reference,
                RougeVariant variant);

// token → dense vector; all vectors share one dimension
struct EmbeddingTable {
  std::unordered_map<std::string, std::vector<double>> vectors;
  int dim = 0;
};

// whitespace-separated lines: token v1 v2 ... vd
EmbeddingTable load_embeddings(const std::string& path);

enum class EsMode { kExtreme, kGreedy, kAverage };

// cosine similarity of pooled sentence representations; tokens missing from
// the table are skipped and a side with no known tokens scores 0
double embedding_similarity(const Sentence& candidate,
                            const Sentence& reference,
                            const EmbeddingTable& table, EsMode mode);

// idf(w) = ln(N / (1 + df_w)) over the N training answers; words never seen
// in training fall back to ln(N / 1)
struct IdfTable {
  std::unordered_map<std::string, double> values;
  double fallback = 0.0;
  double at(const std::string& token) const {
    auto it = values.find(token);
    return it == values.end() ? fallback : it->second;
  }
};

IdfTable build_idf(const std::vector<Sentence>& training_answers);

// mean shared-word idf between one answer and one history snippet; 0 when
// nothing is shared
double persona_overlap(const Sentence& answer, const Sentence& snippet,
                       const IdfTable& idf);

// C_per: per example the best persona_overlap over its history snippets,
// averaged over examples
double persona_coverage(const std::vector<Sentence>& answers,
                        const std::vector<std::vector<Sentence>>& histories,
                        const IdfTable& idf);

// distinct n-grams over the pooled group divided by total n-grams; the
// dataset score is the mean over question groups
double users_distinct(const std::vector<Sentence>& group, int n);
double users_distinct(const std::vector<std::vector<Sentence>>& groups, int n);

// add-k smoothed bigram model with an optional user-interpolated component:
// p(w|c) = mix·p_hist(w|c) + (1−mix)·p_global(w|c), each add-k over the
// shared vocabulary
class BigramLM {
 public:
  explicit BigramLM(double k = 0.01) : k_(k) {}

  void add_vocab(const std::string& token) { vocab_.emplace(token, 0); }
  void observe_global(const Sentence& sentence);
  void observe_history(const Sentence& sentence);
  void set_mix(double mix) { mix_ = mix; }

  double prob(const std::string& prev, const std::string& word) const;
  std::size_t vocab_size() const { return vocab_.size(); }
  double mix() const { return mix_; }

  static const std::string kBos;

 private:
  struct Counts {
    std::unordered_map<std::string, std::unordered_map<std::string, double>>
        bigram;
    std::unordered_map<std::string, double> context;
  };
  double component(const Counts& c, const std::string& prev,
                   const std::string& word) const;
  void add(Counts& c, const Sentence& sentence);

  double k_;
  double mix_ = 0.0;
  Counts global_, history_;
  std::unordered_map<std::string, int> vocab_;
};

// global model from the training corpus, interpolated with the user's
// history at mix_weight
BigramLM fit_user_lm(const std::vector<Sentence>& train_corpus,
                     const std::vector<Sentence>& user_history,
                     double mix_weight);

// exp(−(1/T)·Σ log p(w_t | w_{t−1})) with a BOS context for the first token;
// an empty answer scores 1
double user_perplexity(const Sentence& answer, const BigramLM& lm);

struct ExampleMetrics {
  std::string question_id;
  std::string user_id;
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
  double es_ext = 0.0, es_gre = 0.0, es_avg = 0.0;
  double c_per = 0.0;
  double uppl = 0.0;
};

struct MetricReport {
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
  double es_ext = 0.0, es_gre = 0.0, es_avg = 0.0;
  double c_per = 0.0;
  double udist1 = 0.0, udist2 = 0.0;
  double uppl = 0.0;
  bool has_c_per = false;  // false when no histories were available
  std::vector<ExampleMetrics> examples;
};

}  // namespace page
