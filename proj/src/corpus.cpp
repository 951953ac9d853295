#include "page/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace page {

namespace {

const char* kSpecials[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};

[[noreturn]] void fail_at(const std::string& file, std::size_t line,
                          const std::string& msg) {
  throw std::runtime_error(file + ":" + std::to_string(line) + ": " + msg);
}

bool word_char(unsigned char c) {
  // multi-byte UTF-8 continuation/lead bytes count as word characters
  return std::isalnum(c) || c >= 0x80;
}

}  // namespace

const char* Vocab::special_token(int id) { return kSpecials[id]; }

Vocab::Vocab() {
  for (const char* s : kSpecials) {
    ids_[s] = static_cast<int>(tokens_.size());
    tokens_.push_back(s);
  }
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  ids_[token] = id;
  tokens_.push_back(token);
  return id;
}

bool Vocab::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

int Vocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw std::runtime_error("token not in vocab: " + token);
  return it->second;
}

int Vocab::id_or_unk(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size())
    throw std::runtime_error("vocab id out of range: " + std::to_string(id));
  return tokens_[id];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocab: " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocab: " + path);
  Vocab v;
  std::string line;
  int idx = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (idx < 4) {
      if (line != kSpecials[idx])
        throw std::runtime_error("vocab file corrupt, expected special at line " +
                                 std::to_string(idx + 1) + " in " + path);
    } else {
      if (line.empty())
        throw std::runtime_error("empty token in vocab file " + path);
      v.add(line);
    }
    ++idx;
  }
  if (idx < 4) throw std::runtime_error("vocab file too short: " + path);
  return v;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  bool cur_word = false;
  auto flush = [&]() {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
      continue;
    }
    const bool w = word_char(c);
    if (!cur.empty() && w != cur_word) flush();
    cur_word = w;
    cur.push_back(static_cast<char>(std::tolower(c)));
  }
  flush();
  return out;
}

namespace {

nlohmann::json parse_line(const std::string& file, std::size_t lineno,
                          const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    fail_at(file, lineno, "malformed JSON object");
  return j;
}

std::string need_string(const nlohmann::json& j, const char* key,
                        const std::string& file, std::size_t lineno) {
  if (!j.contains(key) || !j.at(key).is_string())
    fail_at(file, lineno, std::string("missing or non-string field \"") + key +
                              "\"");
  return j.at(key).get<std::string>();
}

int need_int(const nlohmann::json& j, const char* key, const std::string& file,
             std::size_t lineno) {
  if (!j.contains(key) || !j.at(key).is_number_integer())
    fail_at(file, lineno, std::string("missing or non-integer field \"") + key +
                              "\"");
  return j.at(key).get<int>();
}

template <typename Fn>
void for_each_line(const std::string& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(lineno, line);
  }
}

}  // namespace

Dataset ingest_dataset(const std::string& qa_path, const std::string& facts_path,
                       const std::string& history_path, bool filter_by_votes) {
  Dataset ds;
  std::unordered_set<std::string> seen_qids;

  for_each_line(qa_path, [&](std::size_t lineno, const std::string& line) {
    nlohmann::json j = parse_line(qa_path, lineno, line);
    QARecord r;
    r.question_id = need_string(j, "question_id", qa_path, lineno);
    r.user_id = need_string(j, "user_id", qa_path, lineno);
    r.item_id = need_string(j, "item_id", qa_path, lineno);
    r.question = tokenize(need_string(j, "question", qa_path, lineno));
    r.answer = tokenize(need_string(j, "answer", qa_path, lineno));
    r.votes_up = need_int(j, "votes_up", qa_path, lineno);
    r.votes_down = need_int(j, "votes_down", qa_path, lineno);
    r.split = need_string(j, "split", qa_path, lineno);
    if (r.split != "train" && r.split != "valid" && r.split != "test")
      fail_at(qa_path, lineno, "unknown split \"" + r.split + "\"");
    if (r.question.empty())
      fail_at(qa_path, lineno, "question empty after tokenization");
    if (r.answer.empty())
      fail_at(qa_path, lineno, "answer empty after tokenization");
    if (!seen_qids.insert(r.question_id).second)
      fail_at(qa_path, lineno, "duplicate question_id \"" + r.question_id + "\"");
    if (filter_by_votes) {
      if (r.votes_up + r.votes_down <= 2 || r.votes_up <= r.votes_down) return;
    }
    ds.qa.push_back(std::move(r));
  });

  for_each_line(facts_path, [&](std::size_t lineno, const std::string& line) {
    nlohmann::json j = parse_line(facts_path, lineno, line);
    FactDoc d;
    d.item_id = need_string(j, "item_id", facts_path, lineno);
    d.kind = need_string(j, "kind", facts_path, lineno);
    d.text = need_string(j, "text", facts_path, lineno);
    if (d.kind != "review" && d.kind != "description" && d.kind != "attribute")
      fail_at(facts_path, lineno, "unknown fact kind \"" + d.kind + "\"");
    if (d.text.empty()) fail_at(facts_path, lineno, "empty text");
    ds.facts.push_back(std::move(d));
  });

  for_each_line(history_path, [&](std::size_t lineno, const std::string& line) {
    nlohmann::json j = parse_line(history_path, lineno, line);
    UserHistoryDoc d;
    d.user_id = need_string(j, "user_id", history_path, lineno);
    d.kind = need_string(j, "kind", history_path, lineno);
    d.text = need_string(j, "text", history_path, lineno);
    if (d.kind != "review" && d.kind != "answer" && d.kind != "question")
      fail_at(history_path, lineno, "unknown history kind \"" + d.kind + "\"");
    if (d.text.empty()) fail_at(history_path, lineno, "empty text");
    ds.history.push_back(std::move(d));
  });

  return ds;
}

namespace {

// ordered map gives the lexicographic tie-break for free
std::vector<std::pair<std::string, long>> ranked_counts(
    const std::map<std::string, long>& freq) {
  std::vector<std::pair<std::string, long>> v(freq.begin(), freq.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  return v;
}

bool is_special_literal(const std::string& t) {
  for (const char* s : kSpecials)
    if (t == s) return true;
  return false;
}

}  // namespace

Vocab build_vocab(const std::vector<std::vector<std::string>>& docs, int cap,
                  int min_freq) {
  if (cap < 4) throw std::runtime_error("vocab cap must be at least 4");
  std::map<std::string, long> freq;
  for (const auto& doc : docs)
    for (const auto& tok : doc) ++freq[tok];
  Vocab v;
  for (const auto& [tok, n] : ranked_counts(freq)) {
    if (v.size() >= cap) break;
    if (n < min_freq) break;  // ranked by frequency, nothing later qualifies
    if (is_special_literal(tok)) continue;
    v.add(tok);
  }
  return v;
}

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words{
      "i",       "me",      "my",      "myself",  "we",       "our",
      "ours",    "ourselves", "you",   "your",    "yours",    "yourself",
      "yourselves", "he",   "him",     "his",     "himself",  "she",
      "her",     "hers",    "herself", "it",      "its",      "itself",
      "they",    "them",    "their",   "theirs",  "themselves", "what",
      "which",   "who",     "whom",    "this",    "that",     "these",
      "those",   "am",      "is",      "are",     "was",      "were",
      "be",      "been",    "being",   "have",    "has",      "had",
      "having",  "do",      "does",    "did",     "doing",    "a",
      "an",      "the",     "and",     "but",     "if",       "or",
      "because", "as",      "until",   "while",   "of",       "at",
      "by",      "for",     "with",    "about",   "against",  "between",
      "into",    "through", "during",  "before",  "after",    "above",
      "below",   "to",      "from",    "up",      "down",     "in",
      "out",     "on",      "off",     "over",    "under",    "again",
      "further", "then",    "once",    "here",    "there",    "when",
      "where",   "why",     "how",     "all",     "any",      "both",
      "each",    "few",     "more",    "most",    "other",    "some",
      "such",    "no",      "nor",     "not",     "only",     "own",
      "same",    "so",      "than",    "too",     "very",     "s",
      "t",       "can",     "will",    "just",    "don",      "should",
      "now",     "d",       "ll",      "m",       "o",        "re",
      "ve",      "y",       "ain",     "aren",    "couldn",   "didn",
      "doesn",   "hadn",    "hasn",    "haven",   "isn",      "ma",
      "mightn",  "mustn",   "needn",   "shan",    "shouldn",  "wasn",
      "weren",   "won",     "wouldn"};
  return words;
}

int BowVocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  ids_[token] = id;
  tokens_.push_back(token);
  return id;
}

bool BowVocab::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

int BowVocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end())
    throw std::runtime_error("token not in bow vocab: " + token);
  return it->second;
}

const std::string& BowVocab::token_of(int id) const {
  if (id < 0 || id >= size())
    throw std::runtime_error("bow vocab id out of range: " + std::to_string(id));
  return tokens_[id];
}

void BowVocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write bow vocab: " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

BowVocab BowVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open bow vocab: " + path);
  BowVocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw std::runtime_error("empty token in bow vocab " + path);
    v.add(line);
  }
  return v;
}

BowVocab build_bow_vocab(const std::vector<std::vector<std::string>>& docs,
                         int top_k) {
  const auto& stop = stopwords();
  std::map<std::string, long> freq;
  for (const auto& doc : docs)
    for (const auto& tok : doc) {
      if (tok.size() < 2) continue;
      if (stop.count(tok)) continue;
      // punctuation runs are not content words
      if (!std::isalnum(static_cast<unsigned char>(tok[0])) && (unsigned char)tok[0] < 0x80)
        continue;
      ++freq[tok];
    }
  BowVocab v;
  for (const auto& [tok, n] : ranked_counts(freq)) {
    (void)n;
    if (v.size() >= top_k) break;
    if (is_special_literal(tok)) continue;
    v.add(tok);
  }
  return v;
}

std::vector<double> encode_bow(
    const std::vector<std::vector<std::string>>& snippets, const BowVocab& bow) {
  std::vector<double> counts(bow.size(), 0.0);
  for (const auto& snip : snippets)
    for (const auto& tok : snip) {
      if (!bow.contains(tok)) continue;
      counts[bow.id_of(tok)] += 1.0;
    }
  return counts;
}

}  // namespace page
