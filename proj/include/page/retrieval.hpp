#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "page/corpus.hpp"

namespace page {

enum class SnippetKind { review, description, attribute, answer, question, pad };

const char* snippet_kind_name(SnippetKind k);
SnippetKind snippet_kind_from(const std::string& name);

struct Snippet {
  std::string owner_id;  // item_id for facts, user_id for history
  std::vector<std::string> tokens;
  SnippetKind kind = SnippetKind::pad;
};

inline constexpr int kSnippetLen = 50;

struct CorpusStats {
  int doc_count = 0;
  double avg_len = 0.0;
  std::unordered_map<std::string, int> df;

  static CorpusStats over(const std::vector<Snippet>& pool);
};

struct ScoredSnippet {
  int position;  // index into the candidate pool
  double score;
};

// greedy sentence packing into snippets of at most kSnippetLen tokens;
// sentences end at ".", "!" or "?" tokens; an over-long sentence is
// hard-split at the length cap and its pieces emitted as-is
std::vector<Snippet> chunk(const std::string& owner_id, SnippetKind kind,
                           const std::string& text);

// Okapi BM25. Floating-point evaluation order (the exactness contract for
// the oracle test): iterate the distinct query terms in ascending
// lexicographic order; for each term accumulate, in this exact expression
// order,
//   idf   = std::log(1.0 + (N - df + 0.5) / (df + 0.5))
//   denom = tf + k1 * (1.0 - b + b * len / avg_len)
//   score += idf * (tf * (k1 + 1.0)) / denom
// with tf = occurrences of the term in the snippet, len = |snippet tokens|,
// N = stats.doc_count, avg_len = stats.avg_len (sum of pool lengths divided
// by N, in pool order).
double bm25_score(const std::vector<std::string>& query, const Snippet& snippet,
                  const CorpusStats& stats, double k1 = 1.2, double b = 0.75);

// all candidates scored and sorted by (score desc, position asc)
std::vector<ScoredSnippet> rank_snippets(const std::vector<std::string>& query,
                                         const std::vector<Snippet>& candidates,
                                         const CorpusStats& stats,
                                         double k1 = 1.2, double b = 0.75);

// top-k snippets, padded with single-PAD-token snippets when short
std::vector<Snippet> retrieve_topk(const std::vector<std::string>& query,
                                   const std::vector<Snippet>& candidates,
                                   int k, double k1 = 1.2, double b = 0.75);

}  // namespace page
