#include "page/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace page {

namespace {

// n-grams as separator-joined keys; the separator cannot appear in tokens
// that came from whitespace tokenization
std::vector<std::string> ngrams(const Sentence& s, int n) {
  std::vector<std::string> out;
  if (static_cast<int>(s.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
    std::string key = s[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += s[i + static_cast<std::size_t>(j)];
    }
    out.push_back(std::move(key));
  }
  return out;
}

double f1(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

double rouge_n(const Sentence& cand, const Sentence& ref, int n) {
  std::vector<std::string> cg = ngrams(cand, n);
  std::vector<std::string> rg = ngrams(ref, n);
  if (cg.empty() || rg.empty()) return 0.0;
  std::unordered_map<std::string, int> ref_counts;
  for (const std::string& g : rg) ++ref_counts[g];
  double clipped = 0.0;
  for (const std::string& g : cg) {
    auto it = ref_counts.find(g);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      clipped += 1.0;
    }
  }
  return f1(clipped / static_cast<double>(cg.size()),
            clipped / static_cast<double>(rg.size()));
}

double rouge_lcs(const Sentence& cand, const Sentence& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  const std::size_t m = cand.size(), n = ref.size();
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1
                                         : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[n]);
  return f1(lcs / static_cast<double>(m), lcs / static_cast<double>(n));
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// vectors of the tokens present in the table, in sentence order
std::vector<const std::vector<double>*> known(const Sentence& s,
                                              const EmbeddingTable& t) {
  std::vector<const std::vector<double>*> out;
  for (const std::string& w : s) {
    auto it = t.vectors.find(w);
    if (it != t.vectors.end()) out.push_back(&it->second);
  }
  return out;
}

std::vector<double> extreme_pool(
    const std::vector<const std::vector<double>*>& vs, int dim) {
  std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
  for (const auto* v : vs)
    for (int d = 0; d < dim; ++d)
      if (std::fabs((*v)[static_cast<std::size_t>(d)]) >
          std::fabs(out[static_cast<std::size_t>(d)]))
        out[static_cast<std::size_t>(d)] = (*v)[static_cast<std::size_t>(d)];
  return out;
}

std::vector<double> mean_pool(const std::vector<const std::vector<double>*>& vs,
                              int dim) {
  std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
  for (const auto* v : vs)
    for (int d = 0; d < dim; ++d)
      out[static_cast<std::size_t>(d)] += (*v)[static_cast<std::size_t>(d)];
  for (double& x : out) x /= static_cast<double>(vs.size());
  return out;
}

double greedy_direction(const std::vector<const std::vector<double>*>& from,
                        const std::vector<const std::vector<double>*>& to) {
  double total = 0.0;
  for (const auto* f : from) {
    double best = -1.0;
    for (const auto* t : to) best = std::max(best, cosine(*f, *t));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

double rouge_f1(const Sentence& candidate, const Sentence& reference,
                RougeVariant variant) {
  switch (variant) {
    case RougeVariant::kRouge1:
      return rouge_n(candidate, reference, 1);
    case RougeVariant::kRouge2:
      return rouge_n(candidate, reference, 2);
    case RougeVariant::kRougeL:
      return rouge_lcs(candidate, reference);
  }
  return 0.0;
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in.good())
    throw std::runtime_error("cannot open embedding file: " + path);
  EmbeddingTable table;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string token;
    if (!(row >> token)) continue;  // blank line
    std::vector<double> vec;
    double x = 0.0;
    while (row >> x) vec.push_back(x);
    if (vec.empty())
      throw std::runtime_error("embedding row for '" + token +
                               "' has no values");
    if (table.dim == 0) table.dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != table.dim)
      throw std::runtime_error("embedding row for '" + token + "' has " +
                               std::to_string(vec.size()) +
                               " values, expected " +
                               std::to_string(table.dim));
    table.vectors[token] = std::move(vec);
  }
  return table;
}

double embedding_similarity(const Sentence& candidate,
                            const Sentence& reference,
                            const EmbeddingTable& table, EsMode mode) {
  std::vector<const std::vector<double>*> cv = known(candidate, table);
  std::vector<const std::vector<double>*> rv = known(reference, table);
  if (cv.empty() || rv.empty()) return 0.0;
  switch (mode) {
    case EsMode::kExtreme:
      return cosine(extreme_pool(cv, table.dim), extreme_pool(rv, table.dim));
    case EsMode::kGreedy:
      return 0.5 * (greedy_direction(cv, rv) + greedy_direction(rv, cv));
    case EsMode::kAverage:
      return cosine(mean_pool(cv, table.dim), mean_pool(rv, table.dim));
  }
  return 0.0;
}

IdfTable build_idf(const std::vector<Sentence>& training_answers) {
  IdfTable table;
  const double n = static_cast<double>(training_answers.size());
  if (training_answers.empty()) return table;
  std::unordered_map<std::string, int> df;
  for (const Sentence& answer : training_answers) {
    std::set<std::string> uniq(answer.begin(), answer.end());
    for (const std::string& w : uniq) ++df[w];
  }
  table.fallback = std::log(n);
  for (const auto& [w, d] : df)
    table.values[w] = std::log(n / (1.0 + static_cast<double>(d)));
  return table;
}

double persona_overlap(const Sentence& answer, const Sentence& snippet,
                       const IdfTable& idf) {
  std::set<std::string> a(answer.begin(), answer.end());
  std::set<std::string> shared;
  for (const std::string& w : snippet)
    if (a.count(w)) shared.insert(w);
  if (shared.empty()) return 0.0;
  double total = 0.0;
  for (const std::string& w : shared) total += idf.at(w);
  return total / static_cast<double>(shared.size());
}

double persona_coverage(const std::vector<Sentence>& answers,
                        const std::vector<std::vector<Sentence>>& histories,
                        const IdfTable& idf) {
  if (answers.size() != histories.size())
    throw std::invalid_argument(
        "persona_coverage: answers and histories disagree");
  if (answers.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    double best = 0.0;
    for (const Sentence& snippet : histories[i])
      best = std::max(best, persona_overlap(answers[i], snippet, idf));
    total += best;
  }
  return total / static_cast<double>(answers.size());
}

double users_distinct(const std::vector<Sentence>& group, int n) {
  if (n < 1) throw std::invalid_argument("users_distinct: n must be positive");
  std::set<std::string> distinct;
  std::size_t total = 0;
  for (const Sentence& answer : group) {
    for (std::string& g : ngrams(answer, n)) {
      distinct.insert(std::move(g));
      ++total;
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double users_distinct(const std::vector<std::vector<Sentence>>& groups,
                      int n) {
  if (groups.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : groups) total += users_distinct(g, n);
  return total / static_cast<double>(groups.size());
}

const std::string BigramLM::kBos = "<s>";

void BigramLM::add(Counts& c, const Sentence& sentence) {
  if (sentence.empty()) return;
  std::string prev = kBos;
  for (const std::string& w : sentence) {
    c.bigram[prev][w] += 1.0;
    c.context[prev] += 1.0;
    vocab_.emplace(w, 0);
    prev = w;
  }
}

void BigramLM::observe_global(const Sentence& sentence) {
  add(global_, sentence);
}

void BigramLM::observe_history(const Sentence& sentence) {
  add(history_, sentence);
}

// add-k estimate in extended precision; exact 1/V when nothing was counted
double BigramLM::component(const Counts& c, const std::string& prev,
                           const std::string& word) const {
  const long double v = static_cast<long double>(vocab_.size());
  if (v == 0.0L) return 0.0;
  long double count = 0.0L, ctx = 0.0L;
  auto row = c.bigram.find(prev);
  if (row != c.bigram.end()) {
    auto cell = row->second.find(word);
    if (cell != row->second.end()) count = cell->second;
  }
  auto tot = c.context.find(prev);
  if (tot != c.context.end()) ctx = tot->second;
  if (count == 0.0L && ctx == 0.0L)
    return static_cast<double>(1.0L / v);
  const long double k = k_;
  return static_cast<double>((count + k) / (ctx + k * v));
}

double BigramLM::prob(const std::string& prev, const std::string& word) const {
  return mix_ * component(history_, prev, word) +
         (1.0 - mix_) * component(global_, prev, word);
}

BigramLM fit_user_lm(const std::vector<Sentence>& train_corpus,
                     const std::vector<Sentence>& user_history,
                     double mix_weight) {
  BigramLM lm;
  for (const Sentence& s : train_corpus) lm.observe_global(s);
  for (const Sentence& s : user_history) lm.observe_history(s);
  lm.set_mix(mix_weight);
  return lm;
}

double user_perplexity(const Sentence& answer, const BigramLM& lm) {
  if (answer.empty()) return 1.0;
  long double log_sum = 0.0L;
  std::string prev = BigramLM::kBos;
  for (const std::string& w : answer) {
    const long double p = lm.prob(prev, w);
    log_sum += std::log(std::max(p, 1e-300L));
    prev = w;
  }
  const long double t = static_cast<long double>(answer.size());
  return static_cast<double>(std::exp(-log_sum / t));
}

}  // namespace page
