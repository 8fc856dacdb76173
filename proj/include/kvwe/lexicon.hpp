#pragma once

// Class-labeled lexicon acquisition from related-word and synonym graphs.

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kvwe/common.hpp"
#include "kvwe/embed_store.hpp"

namespace kvwe {

enum class Origin { related, synonym, seed, neutral_fill };

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::related: return "related";
    case Origin::synonym: return "synonym";
    case Origin::seed: return "seed";
    case Origin::neutral_fill: return "neutral-fill";
  }
  return "?";
}

inline Origin origin_from_string(std::string_view s) {
  if (s == "related") return Origin::related;
  if (s == "synonym") return Origin::synonym;
  if (s == "seed") return Origin::seed;
  if (s == "neutral-fill") return Origin::neutral_fill;
  throw ConfigError("unknown origin '" + std::string(s) + "'");
}

// Seeds can never lose a relabeling comparison.
inline constexpr double kSeedScore = 1e9;

struct WordEntry {
  std::string word;
  std::string label;
  double score = 0.0;
  std::string parent;
  Origin origin = Origin::related;

  friend bool operator==(const WordEntry&, const WordEntry&) = default;
};

struct KnowledgeBase {
  std::map<std::string, WordEntry, std::less<>> entries;
  std::vector<std::string> class_labels;
  std::set<std::string, std::less<>> deleted;

  bool contains(std::string_view w) const { return entries.find(w) != entries.end(); }

  const WordEntry* find(std::string_view w) const {
    auto it = entries.find(w);
    return it == entries.end() ? nullptr : &it->second;
  }

  bool is_valid_label(std::string_view label) const {
    return label == kNeutralLabel ||
           std::find(class_labels.begin(), class_labels.end(), label) != class_labels.end();
  }

  /// Class labels followed by "neutral"; this is the classifier's output order.
  std::vector<std::string> all_labels() const {
    auto out = class_labels;
    out.emplace_back(kNeutralLabel);
    return out;
  }

  std::map<std::string, std::size_t> label_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& l : all_labels()) counts[l] = 0;
    for (const auto& [w, e] : entries) ++counts[e.label];
    return counts;
  }

  friend bool operator==(const KnowledgeBase&, const KnowledgeBase&) = default;
};

/// Related-word / synonym graph. Implementations must be deterministic.
class WordGraphSource {
 public:
  virtual ~WordGraphSource() = default;
  virtual std::vector<std::pair<std::string, double>> related(const std::string& word) const = 0;
  virtual std::vector<std::string> synonyms(const std::string& word) const = 0;
};

/// Source backed by TSV edge lists:
///   related<TAB>word<TAB>neighbor<TAB>score
///   synonym<TAB>word<TAB>neighbor
/// Blank lines and lines starting with '#' are ignored. Words are lowercased.
class TsvWordGraphSource : public WordGraphSource {
 public:
  TsvWordGraphSource() = default;

  void add_related(const std::string& word, const std::string& neighbor, double score) {
    related_[to_lower(word)].emplace_back(to_lower(neighbor), score);
  }
  void add_synonym(const std::string& word, const std::string& neighbor) {
    synonyms_[to_lower(word)].push_back(to_lower(neighbor));
  }

  void load(std::istream& in, const std::string& name = "<stream>") {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto text = strip_cr(line);
      if (text.empty() || text.front() == '#') continue;
      auto f = split(text, '\t');
      auto fail = [&](const std::string& why) {
        throw SourceError(name + ":" + std::to_string(line_no) + ": " + why);
      };
      if (f[0] == "related") {
        if (f.size() != 4) fail("related edge needs 4 fields");
        double score = 0.0;
        if (!parse_number(f[3], score) || !std::isfinite(score)) fail("bad score '" + std::string(f[3]) + "'");
        if (f[1].empty() || f[2].empty()) fail("empty word");
        add_related(std::string(f[1]), std::string(f[2]), score);
      } else if (f[0] == "synonym") {
        if (f.size() != 3) fail("synonym edge needs 3 fields");
        if (f[1].empty() || f[2].empty()) fail("empty word");
        add_synonym(std::string(f[1]), std::string(f[2]));
      } else {
        fail("unknown edge kind '" + std::string(f[0]) + "'");
      }
    }
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SourceError("cannot open source file " + path.string());
    load(in, path.string());
  }

  std::vector<std::pair<std::string, double>> related(const std::string& word) const override {
    auto it = related_.find(word);
    return it == related_.end() ? std::vector<std::pair<std::string, double>>{} : it->second;
  }
  std::vector<std::string> synonyms(const std::string& word) const override {
    auto it = synonyms_.find(word);
    return it == synonyms_.end() ? std::vector<std::string>{} : it->second;
  }

 private:
  std::map<std::string, std::vector<std::pair<std::string, double>>> related_;
  std::map<std::string, std::vector<std::string>> synonyms_;
};

namespace detail {

inline void check_word(const std::string& w, const std::string& context) {
  if (w.empty() || has_whitespace(w)) throw SourceError("invalid word '" + w + "' from " + context);
}

}  // namespace detail

/// Breadth-first related-word expansion from the seed keywords.
///
/// Seeds are inserted first (origin seed, score kSeedScore). A candidate with a
/// positive score that is not a keyword is inserted with its parent's current
/// label, or relabels an existing entry when it carries a strictly higher score.
/// Every word is expanded at most once; relabeled words are not re-expanded.
inline KnowledgeBase acquire_related(const std::vector<std::pair<std::string, std::string>>& seeds,
                                     const WordGraphSource& source, KnowledgeBase kv) {
  if (seeds.empty()) throw ConfigError("no seed keywords given");
  std::set<std::string, std::less<>> keywords;
  std::deque<std::string> queue;
  for (const auto& [raw_word, label] : seeds) {
    if (std::find(kv.class_labels.begin(), kv.class_labels.end(), label) == kv.class_labels.end()) {
      throw ConfigError("seed '" + raw_word + "' has unknown label '" + label + "'");
    }
    std::string word = to_lower(raw_word);
    if (word.empty() || has_whitespace(word)) throw ConfigError("invalid seed keyword '" + raw_word + "'");
    if (!keywords.insert(word).second) {
      if (kv.entries.at(word).label != label) {
        throw ConfigError("seed '" + word + "' listed under two labels");
      }
      continue;
    }
    kv.deleted.erase(word);
    kv.entries.insert_or_assign(word, WordEntry{word, label, kSeedScore, word, Origin::seed});
    queue.push_back(word);
  }

  std::set<std::string, std::less<>> expanded;
  while (!queue.empty()) {
    std::string parent = std::move(queue.front());
    queue.pop_front();
    if (!expanded.insert(parent).second) continue;
    const std::string parent_label = kv.entries.at(parent).label;
    std::vector<std::pair<std::string, double>> candidates;
    try {
      candidates = source.related(parent);
    } catch (const SourceError&) {
      throw;
    } catch (const std::exception& e) {
      throw SourceError("related('" + parent + "') failed: " + e.what());
    }
    for (auto& [raw, score] : candidates) {
      if (!(score > 0.0)) continue;
      std::string w = to_lower(raw);
      detail::check_word(w, "related('" + parent + "')");
      if (keywords.count(w) != 0 || kv.deleted.count(w) != 0) continue;
      auto it = kv.entries.find(w);
      if (it == kv.entries.end()) {
        kv.entries.emplace(w, WordEntry{w, parent_label, score, parent, Origin::related});
        queue.push_back(w);
      } else if (score > it->second.score) {
        // Ties keep the existing label.
        it->second.label = parent_label;
        it->second.score = score;
        it->second.parent = parent;
      }
    }
  }
  return kv;
}

/// Synonym enrichment with confusing-word deletion.
///
/// Walks a snapshot of the current words (sorted order). A per-call session
/// list tracks every synonym seen so far:
///   new word, unseen          -> insert with parent's label, remember
///   known word, seen          -> keep if labels agree, otherwise delete
///   deleted word, seen        -> skip
///   known word, unseen        -> remember only
/// Seed keywords are never deleted, and words deleted earlier in the same pass
/// do not propagate their label.
inline KnowledgeBase acquire_synonyms(KnowledgeBase kv, const WordGraphSource& source) {
  std::vector<std::string> snapshot;
  snapshot.reserve(kv.entries.size());
  for (const auto& [w, e] : kv.entries) snapshot.push_back(w);

  std::set<std::string, std::less<>> seen;
  for (const auto& parent : snapshot) {
    auto pit = kv.entries.find(parent);
    if (pit == kv.entries.end()) continue;
    const std::string parent_label = pit->second.label;
    const double parent_score = pit->second.score;
    std::vector<std::string> syns;
    try {
      syns = source.synonyms(parent);
    } catch (const SourceError&) {
      throw;
    } catch (const std::exception& e) {
      throw SourceError("synonyms('" + parent + "') failed: " + e.what());
    }
    for (const auto& raw : syns) {
      std::string syn = to_lower(raw);
      detail::check_word(syn, "synonyms('" + parent + "')");
      const bool in_kv = kv.contains(syn);
      const bool in_seen = seen.count(syn) != 0;
      if (!in_kv && !in_seen) {
        if (kv.deleted.count(syn) != 0) continue;
        kv.entries.emplace(syn, WordEntry{syn, parent_label, parent_score, parent, Origin::synonym});
        seen.insert(syn);
      } else if (in_kv && in_seen) {
        auto& entry = kv.entries.at(syn);
        if (entry.label == parent_label || entry.origin == Origin::seed) continue;
        kv.entries.erase(syn);
        kv.deleted.insert(syn);
      } else if (!in_kv && in_seen) {
        continue;
      } else {
        seen.insert(syn);
      }
    }
  }
  return kv;
}

/// Drops words the vocabulary cannot represent as a single unique token.
/// These are not recorded as deleted.
inline KnowledgeBase remove_subpieces(KnowledgeBase kv, const VocabularyInfo& vocab) {
  std::erase_if(kv.entries, [&](const auto& item) { return !vocab.is_single_token(item.first); });
  return kv;
}

/// Labels every unique token not yet in the knowledge base as neutral. Words
/// deleted as confusing stay out.
inline KnowledgeBase neutral_fill(KnowledgeBase kv, const VocabularyInfo& vocab) {
  for (const auto& token : vocab.unique_tokens()) {
    if (kv.contains(token) || kv.deleted.count(token) != 0) continue;
    kv.entries.emplace(token, WordEntry{token, std::string(kNeutralLabel), 0.0, token, Origin::neutral_fill});
  }
  return kv;
}

// Serialization:
//   #labels<TAB>l1<TAB>l2...
//   word<TAB>label<TAB>score<TAB>parent<TAB>origin      (sorted by word)
//   #deleted
//   word                                                 (sorted)
// Other lines starting with '#' before #deleted are comments.
inline void write_knowledge_base(const KnowledgeBase& kv, std::ostream& out) {
  out << "#labels";
  for (const auto& l : kv.class_labels) out << '\t' << l;
  out << '\n';
  for (const auto& [w, e] : kv.entries) {
    out << e.word << '\t' << e.label << '\t' << format_shortest(e.score) << '\t' << e.parent << '\t'
        << to_string(e.origin) << '\n';
  }
  out << "#deleted\n";
  for (const auto& w : kv.deleted) out << w << '\n';
}

inline KnowledgeBase read_knowledge_base(std::istream& in) {
  KnowledgeBase kv;
  std::string line;
  std::size_t line_no = 0;
  bool in_deleted = false;
  bool have_labels = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = strip_cr(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      auto f = split(text, '\t');
      if (f[0] == "#labels") {
        for (std::size_t i = 1; i < f.size(); ++i) kv.class_labels.emplace_back(f[i]);
        have_labels = true;
      } else if (f[0] == "#deleted") {
        in_deleted = true;
      }
      continue;
    }
    if (in_deleted) {
      kv.deleted.emplace(text);
      continue;
    }
    auto f = split(text, '\t');
    if (f.size() != 5) throw ParseError("lexicon row needs 5 tab-separated fields", line_no);
    WordEntry e{std::string(f[0]), std::string(f[1]), 0.0, std::string(f[3]), Origin::related};
    if (!parse_number(f[2], e.score) || e.score < 0) throw ParseError("bad score", line_no);
    try {
      e.origin = origin_from_string(f[4]);
    } catch (const ConfigError& err) {
      throw ParseError(err.what(), line_no);
    }
    if (e.word.empty() || has_whitespace(e.word)) throw ParseError("invalid word", line_no);
    if (!kv.entries.emplace(e.word, e).second) throw ParseError("duplicate word '" + e.word + "'", line_no);
  }
  if (!have_labels) throw ParseError("missing #labels line", line_no);
  for (const auto& [w, e] : kv.entries) {
    if (!kv.is_valid_label(e.label)) throw ConfigError("word '" + w + "' has unknown label '" + e.label + "'");
  }
  return kv;
}

inline KnowledgeBase load_knowledge_base(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon " + path.string());
  return read_knowledge_base(in);
}

}  // namespace kvwe
