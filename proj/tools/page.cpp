#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "page/pipeline.hpp"

namespace {

struct Cli {
  std::string config;
  std::string data_dir = "data/mini";
  std::string out_dir = "out";
  std::string ablation;
  std::string embeddings;
  std::string split = "test";
  std::uint64_t seed = 0;
  int beam = 0;
  int k = 0;
  bool have_seed = false, have_beam = false, have_k = false,
       have_ablation = false;
};

page::RunConfig effective_config(const Cli& cli) {
  page::RunConfig cfg = cli.config.empty()
                            ? page::RunConfig{}
                            : page::parse_run_config(cli.config);
  if (cli.have_seed) cfg.seed = cli.seed;
  if (cli.have_beam) cfg.beam = cli.beam;
  if (cli.have_k) cfg.k_snippets = cli.k;
  if (cli.have_ablation) cfg.ablation = cli.ablation;
  page::validate_run_config(cfg);
  return cfg;
}

void add_common(CLI::App* cmd, Cli& cli, bool data, bool model_knobs) {
  cmd->add_option("--config", cli.config, "run configuration file");
  cmd->add_option("--out-dir", cli.out_dir, "artifact directory");
  if (data) cmd->add_option("--data-dir", cli.data_dir, "raw corpus directory");
  if (model_knobs) {
    cmd->add_option("--seed", cli.seed, "random seed")
        ->each([&cli](const std::string&) { cli.have_seed = true; });
    cmd->add_option("--ablation", cli.ablation,
                    "model variant: no_phi, no_ppm, or no_pis")
        ->each([&cli](const std::string&) { cli.have_ablation = true; });
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"personalized answer generation pipeline"};
  app.require_subcommand(1);
  Cli cli;

  CLI::App* prepare =
      app.add_subcommand("prepare", "tokenize the corpus and build vocabularies");
  add_common(prepare, cli, true, false);

  CLI::App* retrieve =
      app.add_subcommand("retrieve", "attach top-k fact and history snippets");
  add_common(retrieve, cli, true, false);
  retrieve->add_option("--k", cli.k, "snippets per record")
      ->each([&cli](const std::string&) { cli.have_k = true; });

  CLI::App* train = app.add_subcommand("train", "fit the answer generator");
  add_common(train, cli, false, true);

  CLI::App* generate =
      app.add_subcommand("generate", "decode answers for one split");
  add_common(generate, cli, false, true);
  generate->add_option("--split", cli.split, "corpus split to decode");
  generate->add_option("--beam", cli.beam, "beam width")
      ->each([&cli](const std::string&) { cli.have_beam = true; });

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "score generations against references");
  add_common(evaluate, cli, false, true);
  evaluate->add_option("--embeddings", cli.embeddings,
                       "word vector file for the similarity metrics");

  CLI::App* topics =
      app.add_subcommand("topics", "list top words per preference cluster");
  add_common(topics, cli, false, true);
  int words = 10;
  topics->add_option("--k", words, "words per cluster");

  CLI11_PARSE(app, argc, argv);

  try {
    page::RunConfig cfg = effective_config(cli);
    if (prepare->parsed()) {
      page::PrepareSummary s = page::cmd_prepare(cfg, cli.data_dir, cli.out_dir);
      std::cout << "prepared " << s.train << " train / " << s.valid
                << " valid / " << s.test << " test records, vocab " << s.vocab
                << ", bow " << s.bow << "\n";
    } else if (retrieve->parsed()) {
      int n = page::cmd_retrieve(cfg, cli.data_dir, cli.out_dir);
      std::cout << "retrieved snippets for " << n << " records\n";
    } else if (train->parsed()) {
      page::TrainResult r = page::cmd_train(cfg, cli.out_dir);
      std::cout << "trained " << r.history.size() << " epochs, best epoch "
                << r.best_epoch << " (valid " << r.best_valid << "), wrote "
                << r.checkpoint_path << "\n";
    } else if (generate->parsed()) {
      int n = page::cmd_generate(cfg, cli.out_dir, cli.split);
      std::cout << "generated " << n << " answers for split " << cli.split
                << "\n";
    } else if (evaluate->parsed()) {
      page::MetricReport r = page::cmd_evaluate(cfg, cli.out_dir, cli.embeddings);
      std::cout << "scored " << r.examples.size() << " generations, rouge-1 "
                << r.r1 << ", wrote " << cli.out_dir << "/report.json\n";
    } else if (topics->parsed()) {
      page::cmd_topics(cfg, cli.out_dir, words);
      std::cout << "wrote " << cli.out_dir << "/topics.tsv\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
