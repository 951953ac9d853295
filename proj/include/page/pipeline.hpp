#pragma once

#include <string>
#include <vector>

#include "page/corpus.hpp"
#include "page/metrics.hpp"
#include "page/model.hpp"
#include "page/training.hpp"

namespace page {

// One flat key=value configuration covering every stage. Config files hold
// lines of `key = value`; '#' starts a comment; unknown keys are rejected.
struct RunConfig {
  // model
  int d_h = 512;
  int ffn_dim = 2048;
  int enc_layers = 6;
  int dec_layers = 2;
  int heads = 8;
  int max_len = 256;
  int max_answer_len = 50;
  double dropout = 0.1;
  int clusters = 10;
  int topic_hidden = 100;
  int top_n = 100;
  bool literal_memories = false;
  // training
  double lr = 1e-4;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  int batch_size = 32;
  int epochs = 20;
  int beam = 10;
  int k_snippets = 5;
  std::uint64_t seed = 17;
  std::string ablation;  // "", no_phi, no_ppm, no_pis
  // corpus
  int vocab_cap = 30000;
  int vocab_min_freq = 2;
  int bow_size = 2000;
  bool filter_by_votes = false;
  // evaluation
  double lm_mix = 0.5;  // user-history weight in the answer language model
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);
// canonical `key=value` lines, one per field, in declaration order
std::string serialize_run_config(const RunConfig& cfg);
void validate_run_config(const RunConfig& cfg);  // throws invalid_argument

ModelConfig model_config_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg);

// One line of retrieved.jsonl: a QA record joined with its top-k fact and
// history snippets, self-contained for the downstream stages.
struct RetrievedRecord {
  std::string question_id;
  std::string user_id;
  std::string item_id;
  std::string split;
  std::vector<std::string> question;
  std::vector<std::string> answer;
  std::vector<std::vector<std::string>> facts;
  std::vector<std::vector<std::string>> history;
};

std::vector<RetrievedRecord> read_retrieved(const std::string& path);
// counts the BoW vector from the record's history snippets when with_bow
Example example_from(const RetrievedRecord& rec, const BowVocab& bow,
                     bool with_bow);

struct PrepareSummary {
  int train = 0, valid = 0, test = 0;
  int facts = 0, history = 0;  // raw documents
  int vocab = 0, bow = 0;      // vocabulary sizes
};

// ingest + vocabularies; writes vocab.txt, bow_vocab.txt, prepare.json
PrepareSummary cmd_prepare(const RunConfig& cfg, const std::string& data_dir,
                           const std::string& out_dir);
// top-k fact and history snippets per record; writes retrieved.jsonl and
// returns the record count
int cmd_retrieve(const RunConfig& cfg, const std::string& data_dir,
                 const std::string& out_dir);
// trains on the retrieved records; writes model.ckpt and train.log
TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir);
// decodes the given split from the checkpoint; writes generations.jsonl and
// returns the generation count
int cmd_generate(const RunConfig& cfg, const std::string& out_dir,
                 const std::string& split);
// scores generations against references; writes report.json. An empty
// embeddings path falls back to the checkpoint's embedding table.
MetricReport cmd_evaluate(const RunConfig& cfg, const std::string& out_dir,
                          const std::string& embeddings_path);
// top words per preference cluster; writes topics.tsv
void cmd_topics(const RunConfig& cfg, const std::string& out_dir,
                int words_per_cluster);

}  // namespace page
