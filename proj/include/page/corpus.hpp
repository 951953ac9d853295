#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace page {

struct QARecord {
  std::string question_id;
  std::string user_id;
  std::string item_id;
  std::vector<std::string> question;
  std::vector<std::string> answer;
  int votes_up = 0;
  int votes_down = 0;
  std::string split;  // train | valid | test
};

struct FactDoc {
  std::string item_id;
  std::string kind;  // review | description | attribute
  std::string text;
};

struct UserHistoryDoc {
  std::string user_id;
  std::string kind;  // review | answer | question
  std::string text;
};

struct Dataset {
  std::vector<QARecord> qa;
  std::vector<FactDoc> facts;
  std::vector<UserHistoryDoc> history;
};

// Token ids with four reserved specials at fixed low ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static const char* special_token(int id);  // "<pad>" etc.

  Vocab();

  int add(const std::string& token);  // returns existing id if present
  bool contains(const std::string& token) const;
  int id_of(const std::string& token) const;      // throws if absent
  int id_or_unk(const std::string& token) const;  // kUnk if absent
  const std::string& token_of(int id) const;      // throws if out of range
  int size() const { return static_cast<int>(tokens_.size()); }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Content-word vocabulary for the topic model. No reserved specials: its
// size is exactly the number of content words, which fixes the topic-word
// matrix width.
class BowVocab {
 public:
  int add(const std::string& token);
  bool contains(const std::string& token) const;
  int id_of(const std::string& token) const;  // throws if absent
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  void save(const std::string& path) const;
  static BowVocab load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// lowercase, whitespace-split, punctuation runs detached as their own tokens
std::vector<std::string> tokenize(const std::string& text);

// JSON Lines ingest; throws naming file and line on any malformed or
// invariant-violating record. The optional vote filter keeps only answers
// with more than two votes and strictly more up than down.
Dataset ingest_dataset(const std::string& qa_path, const std::string& facts_path,
                       const std::string& history_path,
                       bool filter_by_votes = false);

// frequency-ranked (ties lexicographic) vocabulary over token sequences
Vocab build_vocab(const std::vector<std::vector<std::string>>& docs, int cap,
                  int min_freq);

// top_k content words: stopwords and single-character tokens removed
BowVocab build_bow_vocab(const std::vector<std::vector<std::string>>& docs,
                         int top_k);

const std::unordered_set<std::string>& stopwords();

// counts of in-BoW-vocab tokens across the given token sequences
std::vector<double> encode_bow(
    const std::vector<std::vector<std::string>>& snippets, const BowVocab& bow);

}  // namespace page
