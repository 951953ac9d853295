// Python bindings: the run configuration, the six pipeline stages, and the
// text metrics. Heavy stage calls release the GIL.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "page/corpus.hpp"
#include "page/metrics.hpp"
#include "page/pipeline.hpp"
#include "page/retrieval.hpp"

namespace py = pybind11;
using namespace page;

namespace {

RougeVariant rouge_variant_from(const std::string& name) {
  if (name == "1" || name == "rouge1") return RougeVariant::kRouge1;
  if (name == "2" || name == "rouge2") return RougeVariant::kRouge2;
  if (name == "l" || name == "rougel") return RougeVariant::kRougeL;
  throw std::invalid_argument("unknown rouge variant: " + name);
}

EsMode es_mode_from(const std::string& name) {
  if (name == "extreme") return EsMode::kExtreme;
  if (name == "greedy") return EsMode::kGreedy;
  if (name == "average") return EsMode::kAverage;
  throw std::invalid_argument("unknown similarity mode: " + name);
}

py::dict summary_dict(const PrepareSummary& s) {
  py::dict d;
  d["train"] = s.train;
  d["valid"] = s.valid;
  d["test"] = s.test;
  d["facts"] = s.facts;
  d["history"] = s.history;
  d["vocab"] = s.vocab;
  d["bow"] = s.bow;
  return d;
}

py::dict train_dict(const TrainResult& r) {
  py::list history;
  for (const EpochStats& e : r.history) {
    py::dict row;
    row["epoch"] = e.epoch;
    row["qa"] = e.qa;
    row["ppm"] = e.ppm;
    row["reg"] = e.reg;
    row["total"] = e.total;
    row["valid"] = e.valid;
    history.append(row);
  }
  py::dict d;
  d["history"] = history;
  d["best_epoch"] = r.best_epoch;
  d["best_valid"] = r.best_valid;
  d["checkpoint_path"] = r.checkpoint_path;
  d["log_path"] = r.log_path;
  return d;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["examples_scored"] = r.examples.size();
  d["rouge_1"] = r.r1;
  d["rouge_2"] = r.r2;
  d["rouge_l"] = r.rl;
  d["es_extreme"] = r.es_ext;
  d["es_greedy"] = r.es_gre;
  d["es_average"] = r.es_avg;
  if (r.has_c_per) d["c_per"] = r.c_per;
  d["udist_1"] = r.udist1;
  d["udist_2"] = r.udist2;
  d["uppl"] = r.uppl;
  py::list examples;
  for (const ExampleMetrics& em : r.examples) {
    py::dict row;
    row["question_id"] = em.question_id;
    row["user_id"] = em.user_id;
    row["rouge_1"] = em.r1;
    row["rouge_2"] = em.r2;
    row["rouge_l"] = em.rl;
    row["es_extreme"] = em.es_ext;
    row["es_greedy"] = em.es_gre;
    row["es_average"] = em.es_avg;
    if (r.has_c_per) row["c_per"] = em.c_per;
    row["uppl"] = em.uppl;
    examples.append(row);
  }
  d["examples"] = examples;
  return d;
}

std::vector<double> bm25_scores(const Sentence& query,
                                const std::vector<Sentence>& corpus) {
  std::vector<Snippet> pool;
  for (const Sentence& tokens : corpus) {
    Snippet sn;
    sn.owner_id = "doc";
    sn.kind = SnippetKind::review;
    sn.tokens = tokens;
    pool.push_back(std::move(sn));
  }
  const CorpusStats stats = CorpusStats::over(pool);
  std::vector<double> scores;
  for (const Snippet& sn : pool)
    scores.push_back(bm25_score(query, sn, stats));
  return scores;
}

}  // namespace

PYBIND11_MODULE(_page, m) {
  m.doc() = "personalized answer generation: pipeline stages and metrics";

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("d_h", &RunConfig::d_h)
      .def_readwrite("ffn_dim", &RunConfig::ffn_dim)
      .def_readwrite("enc_layers", &RunConfig::enc_layers)
      .def_readwrite("dec_layers", &RunConfig::dec_layers)
      .def_readwrite("heads", &RunConfig::heads)
      .def_readwrite("max_len", &RunConfig::max_len)
      .def_readwrite("max_answer_len", &RunConfig::max_answer_len)
      .def_readwrite("dropout", &RunConfig::dropout)
      .def_readwrite("clusters", &RunConfig::clusters)
      .def_readwrite("topic_hidden", &RunConfig::topic_hidden)
      .def_readwrite("top_n", &RunConfig::top_n)
      .def_readwrite("literal_memories", &RunConfig::literal_memories)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("lambda1", &RunConfig::lambda1)
      .def_readwrite("lambda2", &RunConfig::lambda2)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("beam", &RunConfig::beam)
      .def_readwrite("k_snippets", &RunConfig::k_snippets)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("ablation", &RunConfig::ablation)
      .def_readwrite("vocab_cap", &RunConfig::vocab_cap)
      .def_readwrite("vocab_min_freq", &RunConfig::vocab_min_freq)
      .def_readwrite("bow_size", &RunConfig::bow_size)
      .def_readwrite("filter_by_votes", &RunConfig::filter_by_votes)
      .def_readwrite("lm_mix", &RunConfig::lm_mix)
      .def("__repr__", [](const RunConfig& cfg) {
        return serialize_run_config(cfg);
      });

  m.def("parse_run_config", &parse_run_config, py::arg("path"),
        "read and validate a key=value configuration file");
  m.def("parse_run_config_text", &parse_run_config_text, py::arg("text"),
        "parse configuration from a string");
  m.def("serialize_run_config", &serialize_run_config, py::arg("config"));
  m.def("validate_run_config", &validate_run_config, py::arg("config"));

  m.def("tokenize", &tokenize, py::arg("text"),
        "lowercase, split on whitespace, detach punctuation runs");

  m.def(
      "prepare",
      [](const RunConfig& cfg, const std::string& data_dir,
         const std::string& out_dir) {
        PrepareSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_prepare(cfg, data_dir, out_dir);
        }
        return summary_dict(s);
      },
      py::arg("config"), py::arg("data_dir"), py::arg("out_dir"),
      "tokenize the corpus and build the vocabularies");
  m.def(
      "retrieve",
      [](const RunConfig& cfg, const std::string& data_dir,
         const std::string& out_dir) {
        py::gil_scoped_release release;
        return cmd_retrieve(cfg, data_dir, out_dir);
      },
      py::arg("config"), py::arg("data_dir"), py::arg("out_dir"),
      "attach the top-k fact and history snippets to every record");
  m.def(
      "train",
      [](const RunConfig& cfg, const std::string& out_dir) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = cmd_train(cfg, out_dir);
        }
        return train_dict(r);
      },
      py::arg("config"), py::arg("out_dir"), "fit the answer generator");
  m.def(
      "generate",
      [](const RunConfig& cfg, const std::string& out_dir,
         const std::string& split) {
        py::gil_scoped_release release;
        return cmd_generate(cfg, out_dir, split);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("split") = "test",
      "decode answers for one split");
  m.def(
      "evaluate",
      [](const RunConfig& cfg, const std::string& out_dir,
         const std::string& embeddings) {
        MetricReport r;
        {
          py::gil_scoped_release release;
          r = cmd_evaluate(cfg, out_dir, embeddings);
        }
        return report_dict(r);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("embeddings") = "",
      "score generations against references and write report.json");
  m.def(
      "topics",
      [](const RunConfig& cfg, const std::string& out_dir, int k) {
        py::gil_scoped_release release;
        cmd_topics(cfg, out_dir, k);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("words_per_cluster") = 10,
      "write the top words per preference cluster to topics.tsv");

  m.def(
      "rouge_f1",
      [](const Sentence& candidate, const Sentence& reference,
         const std::string& variant) {
        return rouge_f1(candidate, reference, rouge_variant_from(variant));
      },
      py::arg("candidate"), py::arg("reference"), py::arg("variant") = "1");

  py::class_<EmbeddingTable>(m, "EmbeddingTable")
      .def_readonly("dim", &EmbeddingTable::dim)
      .def("__len__",
           [](const EmbeddingTable& t) { return t.vectors.size(); })
      .def("__contains__", [](const EmbeddingTable& t,
                              const std::string& token) {
        return t.vectors.count(token) > 0;
      });
  m.def("load_embeddings", &load_embeddings, py::arg("path"),
        "whitespace table: token v1 .. vd, one row per line");
  m.def(
      "embedding_similarity",
      [](const Sentence& candidate, const Sentence& reference,
         const EmbeddingTable& table, const std::string& mode) {
        return embedding_similarity(candidate, reference, table,
                                    es_mode_from(mode));
      },
      py::arg("candidate"), py::arg("reference"), py::arg("table"),
      py::arg("mode") = "average");

  m.def("users_distinct",
        py::overload_cast<const std::vector<Sentence>&, int>(&users_distinct),
        py::arg("answers"), py::arg("n") = 1,
        "pooled distinct n-gram fraction over one question's answers");
  m.def("users_distinct",
        py::overload_cast<const std::vector<std::vector<Sentence>>&, int>(
            &users_distinct),
        py::arg("groups"), py::arg("n") = 1,
        "mean of the pooled fraction over question groups");

  py::class_<BigramLM>(m, "BigramLM")
      .def("prob", &BigramLM::prob, py::arg("prev"), py::arg("word"))
      .def_property_readonly("mix", &BigramLM::mix)
      .def_property_readonly("vocab_size", &BigramLM::vocab_size);
  m.def("fit_user_lm", &fit_user_lm, py::arg("train_corpus"),
        py::arg("history"), py::arg("mix"),
        "smoothed bigram model mixing global and per-user counts");
  m.def("user_perplexity", &user_perplexity, py::arg("answer"), py::arg("lm"));

  m.def("bm25_scores", &bm25_scores, py::arg("query"), py::arg("corpus"),
        "okapi score of the query against every document in the list");
}
