#include "page/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "page/retrieval.hpp"

namespace page {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": bad integer '" + v +
                                "'");
  }
  if (used != v.size())
    throw std::invalid_argument("config key " + key + ": bad integer '" + v +
                                "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": bad number '" + v +
                                "'");
  }
  if (used != v.size())
    throw std::invalid_argument("config key " + key + ": bad number '" + v +
                                "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key " + key + ": bad integer '" + v +
                                "'");
  }
  if (used != v.size())
    throw std::invalid_argument("config key " + key + ": bad integer '" + v +
                                "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key " + key + ": bad boolean '" + v +
                              "'");
}

void set_key(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "d_h") c.d_h = to_int(key, v);
  else if (key == "ffn_dim") c.ffn_dim = to_int(key, v);
  else if (key == "enc_layers") c.enc_layers = to_int(key, v);
  else if (key == "dec_layers") c.dec_layers = to_int(key, v);
  else if (key == "heads") c.heads = to_int(key, v);
  else if (key == "max_len") c.max_len = to_int(key, v);
  else if (key == "max_answer_len") c.max_answer_len = to_int(key, v);
  else if (key == "dropout") c.dropout = to_double(key, v);
  else if (key == "clusters") c.clusters = to_int(key, v);
  else if (key == "topic_hidden") c.topic_hidden = to_int(key, v);
  else if (key == "top_n") c.top_n = to_int(key, v);
  else if (key == "literal_memories") c.literal_memories = to_bool(key, v);
  else if (key == "lr") c.lr = to_double(key, v);
  else if (key == "lambda1") c.lambda1 = to_double(key, v);
  else if (key == "lambda2") c.lambda2 = to_double(key, v);
  else if (key == "batch_size") c.batch_size = to_int(key, v);
  else if (key == "epochs") c.epochs = to_int(key, v);
  else if (key == "beam") c.beam = to_int(key, v);
  else if (key == "k_snippets") c.k_snippets = to_int(key, v);
  else if (key == "seed") c.seed = to_u64(key, v);
  else if (key == "ablation") c.ablation = v;
  else if (key == "vocab_cap") c.vocab_cap = to_int(key, v);
  else if (key == "vocab_min_freq") c.vocab_min_freq = to_int(key, v);
  else if (key == "bow_size") c.bow_size = to_int(key, v);
  else if (key == "filter_by_votes") c.filter_by_votes = to_bool(key, v);
  else if (key == "lm_mix") c.lm_mix = to_double(key, v);
  else throw std::invalid_argument("unknown config key: " + key);
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

// snippets of only padding carry no content; they exist to keep the
// retrieval output rectangular
bool is_pad_snippet(const std::vector<std::string>& tokens) {
  for (const std::string& t : tokens)
    if (t != Vocab::special_token(Vocab::kPad)) return false;
  return true;
}

std::vector<std::vector<std::string>> content_snippets(
    const std::vector<std::vector<std::string>>& snippets) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : snippets)
    if (!is_pad_snippet(s)) out.push_back(s);
  return out;
}

ordered_json tokens_json(const std::vector<std::string>& toks) {
  return ordered_json(toks);
}

std::vector<std::string> tokens_from(const ordered_json& j,
                                     const std::string& where) {
  if (!j.is_array())
    throw std::runtime_error(where + ": expected a token array");
  std::vector<std::string> out;
  for (const auto& t : j) {
    if (!t.is_string())
      throw std::runtime_error(where + ": expected string tokens");
    out.push_back(t.get<std::string>());
  }
  return out;
}

// The model keeps pointers into the vocabularies, so everything a loaded
// checkpoint needs lives in one immovable bundle filled in place.
struct LoadedModel {
  ad::ParamStore store;
  Vocab vocab;
  BowVocab bow;
  ModelConfig mc;
  std::unique_ptr<PageModel> model;

  LoadedModel() = default;
  LoadedModel(const LoadedModel&) = delete;
  LoadedModel& operator=(const LoadedModel&) = delete;
};

void load_model(const RunConfig& cfg, const std::string& out_dir,
                LoadedModel& lm) {
  lm.vocab = Vocab::load(out_dir + "/vocab.txt");
  lm.bow = BowVocab::load(out_dir + "/bow_vocab.txt");
  lm.mc = apply_ablation(model_config_from(cfg), train_config_from(cfg));
  Rng rng(cfg.seed);
  lm.model = std::make_unique<PageModel>(lm.store, lm.mc, lm.vocab, lm.bow, rng);
  lm.store.load(out_dir + "/model.ckpt");
}

EmbeddingTable checkpoint_embeddings(const RunConfig& cfg,
                                     const std::string& out_dir) {
  EmbeddingTable table;
  LoadedModel lm;
  load_model(cfg, out_dir, lm);
  const std::vector<double>& vals = lm.model->embedding().values();
  table.dim = lm.mc.d_h;
  for (int id = Vocab::kUnk + 1; id < lm.vocab.size(); ++id) {
    std::vector<double> row(vals.begin() + static_cast<std::size_t>(id) * lm.mc.d_h,
                            vals.begin() + static_cast<std::size_t>(id + 1) * lm.mc.d_h);
    table.vectors[lm.vocab.token_of(id)] = std::move(row);
  }
  return table;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value");
    set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate_run_config(cfg);
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << "d_h=" << c.d_h << "\n";
  out << "ffn_dim=" << c.ffn_dim << "\n";
  out << "enc_layers=" << c.enc_layers << "\n";
  out << "dec_layers=" << c.dec_layers << "\n";
  out << "heads=" << c.heads << "\n";
  out << "max_len=" << c.max_len << "\n";
  out << "max_answer_len=" << c.max_answer_len << "\n";
  out << "dropout=" << fmt_double(c.dropout) << "\n";
  out << "clusters=" << c.clusters << "\n";
  out << "topic_hidden=" << c.topic_hidden << "\n";
  out << "top_n=" << c.top_n << "\n";
  out << "literal_memories=" << (c.literal_memories ? "true" : "false") << "\n";
  out << "lr=" << fmt_double(c.lr) << "\n";
  out << "lambda1=" << fmt_double(c.lambda1) << "\n";
  out << "lambda2=" << fmt_double(c.lambda2) << "\n";
  out << "batch_size=" << c.batch_size << "\n";
  out << "epochs=" << c.epochs << "\n";
  out << "beam=" << c.beam << "\n";
  out << "k_snippets=" << c.k_snippets << "\n";
  out << "seed=" << c.seed << "\n";
  out << "ablation=" << c.ablation << "\n";
  out << "vocab_cap=" << c.vocab_cap << "\n";
  out << "vocab_min_freq=" << c.vocab_min_freq << "\n";
  out << "bow_size=" << c.bow_size << "\n";
  out << "filter_by_votes=" << (c.filter_by_votes ? "true" : "false") << "\n";
  out << "lm_mix=" << fmt_double(c.lm_mix) << "\n";
  return out.str();
}

void validate_run_config(const RunConfig& c) {
  require(c.d_h >= 1, "d_h must be positive");
  require(c.ffn_dim >= 1, "ffn_dim must be positive");
  require(c.enc_layers >= 1, "enc_layers must be positive");
  require(c.dec_layers >= 1, "dec_layers must be positive");
  require(c.heads >= 1, "heads must be positive");
  require(c.d_h % c.heads == 0, "heads must divide d_h");
  require(c.max_len >= 1, "max_len must be positive");
  require(c.max_answer_len >= 1, "max_answer_len must be positive");
  require(c.dropout >= 0.0 && c.dropout < 1.0, "dropout must be in [0, 1)");
  require(c.clusters >= 1, "clusters must be positive");
  require(c.topic_hidden >= 1, "topic_hidden must be positive");
  require(c.top_n >= 1, "top_n must be positive");
  require(c.lr > 0.0, "lr must be positive");
  require(c.lambda1 >= 0.0, "lambda1 must be non-negative");
  require(c.lambda2 >= 0.0, "lambda2 must be non-negative");
  require(c.batch_size >= 1, "batch_size must be positive");
  require(c.epochs >= 1, "epochs must be positive");
  require(c.beam >= 1, "beam must be positive");
  require(c.k_snippets >= 1, "k_snippets must be positive");
  require(c.ablation.empty() || c.ablation == "no_phi" ||
              c.ablation == "no_ppm" || c.ablation == "no_pis",
          "ablation must be one of no_phi, no_ppm, no_pis");
  require(c.vocab_cap >= 4, "vocab_cap must cover the special tokens");
  require(c.vocab_min_freq >= 1, "vocab_min_freq must be positive");
  require(c.bow_size >= 1, "bow_size must be positive");
  require(c.lm_mix >= 0.0 && c.lm_mix <= 1.0, "lm_mix must be in [0, 1]");
}

ModelConfig model_config_from(const RunConfig& c) {
  ModelConfig mc;
  mc.d_h = c.d_h;
  mc.ffn_dim = c.ffn_dim;
  mc.enc_layers = c.enc_layers;
  mc.dec_layers = c.dec_layers;
  mc.heads = c.heads;
  mc.max_len = c.max_len;
  mc.max_answer_len = c.max_answer_len;
  mc.dropout = c.dropout;
  mc.clusters = c.clusters;
  mc.topic_hidden = c.topic_hidden;
  mc.top_n = c.top_n;
  mc.literal_memories = c.literal_memories;
  return mc;
}

TrainConfig train_config_from(const RunConfig& c) {
  TrainConfig tc;
  tc.lambda1 = c.lambda1;
  tc.lambda2 = c.lambda2;
  tc.lr = c.lr;
  tc.dropout = c.dropout;
  tc.batch_size = c.batch_size;
  tc.epochs = c.epochs;
  tc.beam = c.beam;
  tc.k_snippets = c.k_snippets;
  tc.seed = c.seed;
  tc.no_phi = c.ablation == "no_phi";
  tc.no_ppm = c.ablation == "no_ppm";
  tc.no_pis = c.ablation == "no_pis";
  return tc;
}

std::vector<RetrievedRecord> read_retrieved(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  std::vector<RetrievedRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error(where + ": malformed JSON");
    RetrievedRecord rec;
    for (const char* key : {"question_id", "user_id", "item_id", "split",
                            "question", "answer", "facts", "history"})
      if (!j.contains(key))
        throw std::runtime_error(where + ": missing key " + key);
    rec.question_id = j["question_id"].get<std::string>();
    rec.user_id = j["user_id"].get<std::string>();
    rec.item_id = j["item_id"].get<std::string>();
    rec.split = j["split"].get<std::string>();
    rec.question = tokens_from(j["question"], where);
    rec.answer = tokens_from(j["answer"], where);
    for (const auto& s : j["facts"]) rec.facts.push_back(tokens_from(s, where));
    for (const auto& s : j["history"])
      rec.history.push_back(tokens_from(s, where));
    out.push_back(std::move(rec));
  }
  return out;
}

Example example_from(const RetrievedRecord& rec, const BowVocab& bow,
                     bool with_bow) {
  Example ex;
  ex.question_id = rec.question_id;
  ex.user_id = rec.user_id;
  ex.question = rec.question;
  ex.answer = rec.answer;
  ex.facts = rec.facts;
  ex.history = rec.history;
  if (with_bow) ex.bow = encode_bow(rec.history, bow);
  return ex;
}

PrepareSummary cmd_prepare(const RunConfig& cfg, const std::string& data_dir,
                           const std::string& out_dir) {
  validate_run_config(cfg);
  Dataset ds = ingest_dataset(data_dir + "/qa.jsonl", data_dir + "/facts.jsonl",
                              data_dir + "/history.jsonl", cfg.filter_by_votes);
  fs::create_directories(out_dir);

  PrepareSummary sum;
  sum.facts = static_cast<int>(ds.facts.size());
  sum.history = static_cast<int>(ds.history.size());

  // generation vocabulary: training questions and answers plus every
  // snippet any record could copy from
  std::vector<std::vector<std::string>> docs;
  std::unordered_set<std::string> train_users;
  for (const QARecord& r : ds.qa) {
    if (r.split == "train") {
      ++sum.train;
      docs.push_back(r.question);
      docs.push_back(r.answer);
      train_users.insert(r.user_id);
    } else if (r.split == "valid") {
      ++sum.valid;
    } else {
      ++sum.test;
    }
  }
  for (const FactDoc& f : ds.facts)
    for (Snippet& s : chunk(f.item_id, snippet_kind_from(f.kind), f.text))
      docs.push_back(std::move(s.tokens));
  for (const UserHistoryDoc& h : ds.history)
    for (Snippet& s : chunk(h.user_id, snippet_kind_from(h.kind), h.text))
      docs.push_back(std::move(s.tokens));
  Vocab vocab = build_vocab(docs, cfg.vocab_cap, cfg.vocab_min_freq);

  // topic vocabulary: content words from histories of training users
  std::vector<std::vector<std::string>> hist_docs;
  for (const UserHistoryDoc& h : ds.history)
    if (train_users.count(h.user_id)) hist_docs.push_back(tokenize(h.text));
  BowVocab bow = build_bow_vocab(hist_docs, cfg.bow_size);

  sum.vocab = vocab.size();
  sum.bow = bow.size();
  vocab.save(out_dir + "/vocab.txt");
  bow.save(out_dir + "/bow_vocab.txt");

  ordered_json j;
  j["train"] = sum.train;
  j["valid"] = sum.valid;
  j["test"] = sum.test;
  j["facts"] = sum.facts;
  j["history"] = sum.history;
  j["vocab"] = sum.vocab;
  j["bow_vocab"] = sum.bow;
  std::ofstream out(out_dir + "/prepare.json");
  out << j.dump(2) << "\n";
  return sum;
}

int cmd_retrieve(const RunConfig& cfg, const std::string& data_dir,
                 const std::string& out_dir) {
  validate_run_config(cfg);
  Dataset ds = ingest_dataset(data_dir + "/qa.jsonl", data_dir + "/facts.jsonl",
                              data_dir + "/history.jsonl", cfg.filter_by_votes);
  fs::create_directories(out_dir);

  std::unordered_map<std::string, std::vector<Snippet>> fact_pool, hist_pool;
  for (const FactDoc& f : ds.facts)
    for (Snippet& s : chunk(f.item_id, snippet_kind_from(f.kind), f.text))
      fact_pool[f.item_id].push_back(std::move(s));
  for (const UserHistoryDoc& h : ds.history)
    for (Snippet& s : chunk(h.user_id, snippet_kind_from(h.kind), h.text))
      hist_pool[h.user_id].push_back(std::move(s));
  const std::vector<Snippet> empty_pool;

  std::ofstream out(out_dir + "/retrieved.jsonl");
  if (!out.good())
    throw std::runtime_error("cannot write " + out_dir + "/retrieved.jsonl");
  int count = 0;
  for (const QARecord& r : ds.qa) {
    auto fit = fact_pool.find(r.item_id);
    auto hit = hist_pool.find(r.user_id);
    std::vector<Snippet> facts = retrieve_topk(
        r.question, fit == fact_pool.end() ? empty_pool : fit->second,
        cfg.k_snippets);
    std::vector<Snippet> hist = retrieve_topk(
        r.question, hit == hist_pool.end() ? empty_pool : hit->second,
        cfg.k_snippets);
    ordered_json j;
    j["question_id"] = r.question_id;
    j["user_id"] = r.user_id;
    j["item_id"] = r.item_id;
    j["split"] = r.split;
    j["question"] = tokens_json(r.question);
    j["answer"] = tokens_json(r.answer);
    ordered_json jf = ordered_json::array(), jh = ordered_json::array();
    for (const Snippet& s : facts) jf.push_back(tokens_json(s.tokens));
    for (const Snippet& s : hist) jh.push_back(tokens_json(s.tokens));
    j["facts"] = jf;
    j["history"] = jh;
    out << j.dump() << "\n";
    ++count;
  }
  return count;
}

TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  validate_run_config(cfg);
  Vocab vocab = Vocab::load(out_dir + "/vocab.txt");
  BowVocab bow = BowVocab::load(out_dir + "/bow_vocab.txt");
  std::vector<RetrievedRecord> recs = read_retrieved(out_dir + "/retrieved.jsonl");

  TrainConfig tc = train_config_from(cfg);
  ModelConfig mc = apply_ablation(model_config_from(cfg), tc);
  std::vector<Example> train, valid;
  for (const RetrievedRecord& rec : recs) {
    if (rec.split == "train")
      train.push_back(example_from(rec, bow, mc.use_preference));
    else if (rec.split == "valid")
      valid.push_back(example_from(rec, bow, mc.use_preference));
  }
  if (train.empty())
    throw std::invalid_argument("no training records in retrieved.jsonl");

  ad::ParamStore store;
  Rng rng(cfg.seed);
  PageModel model(store, mc, vocab, bow, rng);
  Trainer trainer(model, store, tc);
  return trainer.train(train, valid, out_dir);
}

int cmd_generate(const RunConfig& cfg, const std::string& out_dir,
                 const std::string& split) {
  validate_run_config(cfg);
  LoadedModel lm;
  load_model(cfg, out_dir, lm);
  std::vector<RetrievedRecord> recs = read_retrieved(out_dir + "/retrieved.jsonl");

  std::ofstream out(out_dir + "/generations.jsonl");
  if (!out.good())
    throw std::runtime_error("cannot write " + out_dir + "/generations.jsonl");
  Rng eval_rng(0);
  int count = 0;
  for (const RetrievedRecord& rec : recs) {
    if (rec.split != split) continue;
    Example ex = example_from(rec, lm.bow, lm.mc.use_preference);
    BuiltInput in = lm.model->build(ex, false, eval_rng);
    DecodeResult res = lm.model->generate(in, cfg.beam);
    ordered_json j;
    j["question_id"] = rec.question_id;
    j["user_id"] = rec.user_id;
    j["answer"] = detokenize(res.ids, in.ext);
    j["log_prob"] = res.log_prob;
    j["gamma"] = ordered_json(res.gamma_trace);
    out << j.dump() << "\n";
    ++count;
  }
  return count;
}

MetricReport cmd_evaluate(const RunConfig& cfg, const std::string& out_dir,
                          const std::string& embeddings_path) {
  validate_run_config(cfg);
  std::vector<RetrievedRecord> recs = read_retrieved(out_dir + "/retrieved.jsonl");
  std::unordered_map<std::string, const RetrievedRecord*> by_qid;
  std::vector<Sentence> train_answers;
  for (const RetrievedRecord& rec : recs) {
    by_qid[rec.question_id] = &rec;
    if (rec.split == "train") train_answers.push_back(rec.answer);
  }

  const std::string gen_path = out_dir + "/generations.jsonl";
  std::ifstream gin(gen_path);
  if (!gin.good()) throw std::runtime_error("cannot open " + gen_path);

  EmbeddingTable table;
  if (!embeddings_path.empty()) {
    table = load_embeddings(embeddings_path);
  } else {
    try {
      table = checkpoint_embeddings(cfg, out_dir);
    } catch (const std::exception& e) {
      std::cerr << "warning: no embedding table (" << e.what()
                << "); ES scores reported as zero\n";
    }
  }

  IdfTable idf = build_idf(train_answers);
  MetricReport report;
  std::map<std::string, std::vector<Sentence>> groups;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(gin, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = gen_path + ":" + std::to_string(lineno);
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(where + ": malformed JSON");
    for (const char* key : {"question_id", "user_id", "answer"})
      if (!j.contains(key))
        throw std::runtime_error(where + ": missing key " + key);
    const std::string qid = j["question_id"].get<std::string>();
    auto rit = by_qid.find(qid);
    if (rit == by_qid.end())
      throw std::runtime_error(where + ": unknown question_id " + qid);
    const RetrievedRecord& rec = *rit->second;

    ExampleMetrics em;
    em.question_id = qid;
    em.user_id = j["user_id"].get<std::string>();
    Sentence cand = tokenize(j["answer"].get<std::string>());
    const Sentence& ref = rec.answer;
    em.r1 = rouge_f1(cand, ref, RougeVariant::kRouge1);
    em.r2 = rouge_f1(cand, ref, RougeVariant::kRouge2);
    em.rl = rouge_f1(cand, ref, RougeVariant::kRougeL);
    if (!table.vectors.empty()) {
      em.es_ext = embedding_similarity(cand, ref, table, EsMode::kExtreme);
      em.es_gre = embedding_similarity(cand, ref, table, EsMode::kGreedy);
      em.es_avg = embedding_similarity(cand, ref, table, EsMode::kAverage);
    }
    std::vector<Sentence> hist = content_snippets(rec.history);
    if (!hist.empty()) report.has_c_per = true;
    for (const Sentence& snip : hist)
      em.c_per = std::max(em.c_per, persona_overlap(cand, snip, idf));
    BigramLM lm =
        fit_user_lm(train_answers, hist, hist.empty() ? 0.0 : cfg.lm_mix);
    em.uppl = user_perplexity(cand, lm);

    std::string group_key = rec.item_id;
    for (const std::string& t : rec.question) {
      group_key.push_back('\x1f');
      group_key += t;
    }
    groups[group_key].push_back(cand);
    report.examples.push_back(std::move(em));
  }

  const double n = static_cast<double>(report.examples.size());
  if (n > 0) {
    for (const ExampleMetrics& em : report.examples) {
      report.r1 += em.r1;
      report.r2 += em.r2;
      report.rl += em.rl;
      report.es_ext += em.es_ext;
      report.es_gre += em.es_gre;
      report.es_avg += em.es_avg;
      report.c_per += em.c_per;
      report.uppl += em.uppl;
    }
    report.r1 /= n;
    report.r2 /= n;
    report.rl /= n;
    report.es_ext /= n;
    report.es_gre /= n;
    report.es_avg /= n;
    report.c_per /= n;
    report.uppl /= n;
    std::vector<std::vector<Sentence>> group_list;
    for (auto& [key, g] : groups) group_list.push_back(std::move(g));
    report.udist1 = users_distinct(group_list, 1);
    report.udist2 = users_distinct(group_list, 2);
  }
  if (!report.has_c_per) {
    report.c_per = 0.0;
    std::cerr << "warning: no user history snippets; persona coverage "
                 "omitted from the report\n";
  }

  ordered_json j;
  j["examples_scored"] = report.examples.size();
  j["rouge_1"] = report.r1;
  j["rouge_2"] = report.r2;
  j["rouge_l"] = report.rl;
  j["es_extreme"] = report.es_ext;
  j["es_greedy"] = report.es_gre;
  j["es_average"] = report.es_avg;
  if (report.has_c_per) j["c_per"] = report.c_per;
  j["udist_1"] = report.udist1;
  j["udist_2"] = report.udist2;
  j["uppl"] = report.uppl;
  ordered_json je = ordered_json::array();
  for (const ExampleMetrics& em : report.examples) {
    ordered_json e;
    e["question_id"] = em.question_id;
    e["user_id"] = em.user_id;
    e["rouge_1"] = em.r1;
    e["rouge_2"] = em.r2;
    e["rouge_l"] = em.rl;
    e["es_extreme"] = em.es_ext;
    e["es_greedy"] = em.es_gre;
    e["es_average"] = em.es_avg;
    if (report.has_c_per) e["c_per"] = em.c_per;
    e["uppl"] = em.uppl;
    je.push_back(std::move(e));
  }
  j["examples"] = std::move(je);
  std::ofstream out(out_dir + "/report.json");
  if (!out.good())
    throw std::runtime_error("cannot write " + out_dir + "/report.json");
  out << j.dump(2) << "\n";
  return report;
}

void cmd_topics(const RunConfig& cfg, const std::string& out_dir,
                int words_per_cluster) {
  validate_run_config(cfg);
  if (words_per_cluster < 1)
    throw std::invalid_argument("topics: words per cluster must be positive");
  LoadedModel lm;
  load_model(cfg, out_dir, lm);
  const TopicModel* tm = lm.model->topic_model();
  if (tm == nullptr)
    throw std::invalid_argument(
        "topics: the preference path is ablated, no clusters to report");

  ad::Tensor beta = tm->topic_word_matrix();
  const std::vector<double>& vals = beta.values();
  const int v = lm.bow.size();
  const double uniform_bar = 2.0 / static_cast<double>(v);

  std::ofstream out(out_dir + "/topics.tsv");
  if (!out.good())
    throw std::runtime_error("cannot write " + out_dir + "/topics.tsv");
  bool any_uniform = false;
  for (int k = 0; k < lm.mc.clusters; ++k) {
    double row_max = 0.0;
    for (int w = 0; w < v; ++w)
      row_max = std::max(row_max,
                         vals[static_cast<std::size_t>(k) * v + w]);
    out << k;
    for (const std::string& w :
         top_words(beta, k, std::min(words_per_cluster, v), lm.bow))
      out << '\t' << w;
    // a trained row concentrates mass well above the uniform level
    if (row_max < uniform_bar) {
      out << "\tnear-uniform";
      any_uniform = true;
    }
    out << '\n';
  }
  if (any_uniform)
    std::cerr << "warning: near-uniform topic rows; the checkpoint looks "
                 "untrained\n";
}

}  // namespace page
