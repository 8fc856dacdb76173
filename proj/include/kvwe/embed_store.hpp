#pragma once

// Token vocabularies and the per-token embedding list.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvwe/common.hpp"

namespace kvwe {

enum TokenFlag : std::uint8_t {
  kFlagNone = 0,
  kFlagSubpiece = 1 << 0,
  kFlagUnusedSlot = 1 << 1,
  kFlagSpecial = 1 << 2,  // bracketed control tokens such as [MASK], [CLS]
  kFlagMeaningless = 1 << 3,
};

struct VocabularyFilter {
  // Flag single code points that are not ASCII letters or digits.
  bool single_symbol_rule = true;
  // Additional tokens treated as meaningless, matched exactly.
  std::vector<std::string> meaningless;
};

namespace detail {

inline std::size_t utf8_code_points(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

inline bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline bool is_unused_slot(std::string_view t) {
  constexpr std::string_view prefix = "[unused";
  if (t.size() <= prefix.size() + 1 || t.substr(0, prefix.size()) != prefix || t.back() != ']') return false;
  auto digits = t.substr(prefix.size(), t.size() - prefix.size() - 1);
  for (char c : digits) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

inline bool is_bracketed_special(std::string_view t) {
  return t.size() >= 3 && t.front() == '[' && t.back() == ']';
}

}  // namespace detail

inline std::uint8_t classify_token(std::string_view token, const VocabularyFilter& filter,
                                   const std::set<std::string, std::less<>>& extra) {
  std::uint8_t flags = kFlagNone;
  if (token.substr(0, 2) == "##") flags |= kFlagSubpiece;
  if (detail::is_unused_slot(token)) {
    flags |= kFlagUnusedSlot;
  } else if (detail::is_bracketed_special(token)) {
    flags |= kFlagSpecial;
  }
  if (filter.single_symbol_rule && detail::utf8_code_points(token) == 1 &&
      !(token.size() == 1 && detail::is_ascii_alnum(token[0]))) {
    flags |= kFlagMeaningless;
  }
  if (extra.count(token) != 0) flags |= kFlagMeaningless;
  return flags;
}

/// Raw vocabulary plus the derived list of unique (whole-word) tokens.
class VocabularyInfo {
 public:
  VocabularyInfo() = default;

  VocabularyInfo(std::vector<std::string> tokens, std::vector<std::uint8_t> flags)
      : tokens_(std::move(tokens)), flags_(std::move(flags)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (flags_[i] == kFlagNone && unique_set_.insert(tokens_[i]).second) unique_.push_back(tokens_[i]);
    }
  }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::vector<std::uint8_t>& flags() const noexcept { return flags_; }
  const std::vector<std::string>& unique_tokens() const noexcept { return unique_; }

  /// True when `word` is represented by exactly one unique vocabulary token.
  bool is_single_token(std::string_view word) const { return unique_set_.count(word) != 0; }

  /// Builds a vocabulary whose unique tokens are exactly `tokens` (e.g. the keys
  /// of an embedding list that was filtered upstream).
  static VocabularyInfo from_unique(std::vector<std::string> tokens) {
    std::vector<std::uint8_t> flags(tokens.size(), kFlagNone);
    return VocabularyInfo(std::move(tokens), std::move(flags));
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint8_t> flags_;
  std::vector<std::string> unique_;
  std::set<std::string, std::less<>> unique_set_;
};

inline VocabularyInfo filter_vocabulary(const std::vector<std::string>& raw_vocab,
                                        const VocabularyFilter& filter = {}) {
  if (raw_vocab.empty()) throw ConfigError("vocabulary is empty");
  std::set<std::string, std::less<>> extra(filter.meaningless.begin(), filter.meaningless.end());
  std::vector<std::uint8_t> flags;
  flags.reserve(raw_vocab.size());
  for (const auto& t : raw_vocab) flags.push_back(classify_token(t, filter, extra));
  return VocabularyInfo(raw_vocab, std::move(flags));
}

inline std::vector<std::string> read_vocabulary(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    auto t = strip_cr(line);
    if (!t.empty()) tokens.emplace_back(t);
  }
  return tokens;
}

inline std::vector<std::string> read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary file " + path.string());
  return read_vocabulary(in);
}

/// Token -> fixed-dimension vector map. Rows keep file order; lookups are exact
/// (no case folding).
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw DimensionError("embedding dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  void add(std::string token, std::span<const float> values) {
    if (dim_ == 0) throw DimensionError("embedding table has no dimension");
    if (values.size() != dim_) {
      throw DimensionError("vector for '" + token + "' has " + std::to_string(values.size()) +
                           " components, expected " + std::to_string(dim_));
    }
    for (float v : values) {
      if (!std::isfinite(v)) throw DimensionError("non-finite component in vector for '" + token + "'");
    }
    if (index_.count(token) != 0) throw DuplicateError("duplicate token '" + token + "'");
    index_.emplace(token, tokens_.size());
    tokens_.push_back(std::move(token));
    data_.insert(data_.end(), values.begin(), values.end());
  }

  void add(std::string token, std::span<const double> values) {
    std::vector<float> tmp(values.begin(), values.end());
    add(std::move(token), std::span<const float>(tmp));
  }

  /// Absent tokens yield std::nullopt, never an error.
  std::optional<std::span<const float>> lookup(std::string_view token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return row(it->second);
  }

  bool contains(std::string_view token) const { return index_.find(token) != index_.end(); }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.tokens_ == b.tokens_ && a.data_ == b.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::vector<float> data_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

inline std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

/// Parses `token f1 ... fd` lines. The dimension is taken from the first row.
inline EmbeddingTable parse_embeddings(std::istream& in, std::optional<std::size_t> expected_dim = {}) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<float> values;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = strip_cr(line);
    if (text.empty()) continue;
    auto fields = split_ws(text);
    if (fields.size() < 2) throw ParseError("expected a token followed by values", line_no);
    const std::size_t n = fields.size() - 1;
    if (table.dim() == 0) {
      if (expected_dim && *expected_dim != n) {
        throw DimensionError("embedding file has dimension " + std::to_string(n) + ", expected " +
                             std::to_string(*expected_dim));
      }
      table = EmbeddingTable(n);
    } else if (n != table.dim()) {
      throw ParseError("row has " + std::to_string(n) + " values, expected " + std::to_string(table.dim()),
                       line_no);
    }
    values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!parse_number(fields[i + 1], values[i]) || !std::isfinite(values[i])) {
        throw ParseError("malformed value '" + std::string(fields[i + 1]) + "'", line_no);
      }
    }
    std::string token(fields[0]);
    if (table.contains(token)) throw DuplicateError("duplicate token '" + token + "' at line " + std::to_string(line_no));
    table.add(std::move(token), std::span<const float>(values));
  }
  return table;
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path,
                                      std::optional<std::size_t> expected_dim = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file " + path.string());
  return parse_embeddings(in, expected_dim);
}

/// Writes rows in table order with 9 significant digits (exact for float).
inline void save_embeddings(const EmbeddingTable& table, std::ostream& out) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.tokens()[i];
    for (float v : table.row(i)) out << ' ' << format_sig(v, 9);
    out << '\n';
  }
}

}  // namespace kvwe
