#include "page/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace page {

const char* snippet_kind_name(SnippetKind k) {
  switch (k) {
    case SnippetKind::review: return "review";
    case SnippetKind::description: return "description";
    case SnippetKind::attribute: return "attribute";
    case SnippetKind::answer: return "answer";
    case SnippetKind::question: return "question";
    case SnippetKind::pad: return "pad";
  }
  return "pad";
}

SnippetKind snippet_kind_from(const std::string& name) {
  if (name == "review") return SnippetKind::review;
  if (name == "description") return SnippetKind::description;
  if (name == "attribute") return SnippetKind::attribute;
  if (name == "answer") return SnippetKind::answer;
  if (name == "question") return SnippetKind::question;
  if (name == "pad") return SnippetKind::pad;
  throw std::runtime_error("unknown snippet kind: " + name);
}

std::vector<Snippet> chunk(const std::string& owner_id, SnippetKind kind,
                           const std::string& text) {
  const std::vector<std::string> toks = tokenize(text);
  // split into sentences, terminator kept with its sentence
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> cur;
  for (const auto& t : toks) {
    cur.push_back(t);
    if (t == "." || t == "!" || t == "?") {
      sentences.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) sentences.push_back(std::move(cur));

  std::vector<Snippet> out;
  std::vector<std::string> buf;
  auto flush = [&]() {
    if (!buf.empty()) {
      out.push_back({owner_id, buf, kind});
      buf.clear();
    }
  };
  for (auto& sent : sentences) {
    if (static_cast<int>(sent.size()) > kSnippetLen) {
      flush();
      for (std::size_t off = 0; off < sent.size(); off += kSnippetLen) {
        const std::size_t end = std::min(sent.size(), off + kSnippetLen);
        out.push_back({owner_id,
                       std::vector<std::string>(sent.begin() + off,
                                                sent.begin() + end),
                       kind});
      }
      continue;
    }
    if (buf.size() + sent.size() > static_cast<std::size_t>(kSnippetLen)) flush();
    buf.insert(buf.end(), sent.begin(), sent.end());
  }
  flush();
  return out;
}

CorpusStats CorpusStats::over(const std::vector<Snippet>& pool) {
  CorpusStats s;
  s.doc_count = static_cast<int>(pool.size());
  long total = 0;
  for (const auto& snip : pool) {
    total += static_cast<long>(snip.tokens.size());
    std::set<std::string> uniq(snip.tokens.begin(), snip.tokens.end());
    for (const auto& t : uniq) s.df[t] += 1;
  }
  if (s.doc_count > 0) s.avg_len = static_cast<double>(total) / s.doc_count;
  return s;
}

double bm25_score(const std::vector<std::string>& query, const Snippet& snippet,
                  const CorpusStats& stats, double k1, double b) {
  if (stats.doc_count == 0) return 0.0;
  const double N = static_cast<double>(stats.doc_count);
  const double len = static_cast<double>(snippet.tokens.size());
  const std::set<std::string> terms(query.begin(), query.end());
  double score = 0.0;
  for (const auto& term : terms) {
    double tf = 0.0;
    for (const auto& t : snippet.tokens)
      if (t == term) tf += 1.0;
    if (tf == 0.0) continue;
    auto it = stats.df.find(term);
    const double df = it == stats.df.end() ? 0.0 : static_cast<double>(it->second);
    const double idf = std::log(1.0 + (N - df + 0.5) / (df + 0.5));
    const double denom = tf + k1 * (1.0 - b + b * len / stats.avg_len);
    score += idf * (tf * (k1 + 1.0)) / denom;
  }
  return score;
}

std::vector<ScoredSnippet> rank_snippets(const std::vector<std::string>& query,
                                         const std::vector<Snippet>& candidates,
                                         const CorpusStats& stats, double k1,
                                         double b) {
  std::vector<ScoredSnippet> scored;
  scored.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    scored.push_back({static_cast<int>(i),
                      bm25_score(query, candidates[i], stats, k1, b)});
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredSnippet& a, const ScoredSnippet& x) {
                     return a.score > x.score;
                   });
  return scored;
}

std::vector<Snippet> retrieve_topk(const std::vector<std::string>& query,
                                   const std::vector<Snippet>& candidates,
                                   int k, double k1, double b) {
  if (k < 1) throw std::runtime_error("retrieve_topk: k must be >= 1");
  const CorpusStats stats = CorpusStats::over(candidates);
  const auto ranked = rank_snippets(query, candidates, stats, k1, b);
  std::vector<Snippet> out;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i)
    out.push_back(candidates[ranked[i].position]);
  while (static_cast<int>(out.size()) < k)
    out.push_back({"", {"<pad>"}, SnippetKind::pad});
  return out;
}

}  // namespace page
