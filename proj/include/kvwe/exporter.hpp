#pragma once

// Enhanced embeddings: word-level concatenation and attention-pooled
// sentence vectors.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kvwe/common.hpp"
#include "kvwe/embed_store.hpp"
#include "kvwe/projector.hpp"

namespace kvwe {

struct EnhancedSequence {
  std::vector<std::string> tokens;
  std::vector<Vector> raw;           // per token, base dim
  std::vector<std::size_t> in_list;  // positions of tokens found in the word-embedding list
  std::vector<Vector> knowledge;     // projections of the in-list tokens, in order (|U| <= |I|)
  std::vector<Vector> enhanced;      // per token, 2 x base dim
  Vector t_cls;                      // pooled sentence vector (sentence level only)
  bool empty_knowledge = false;      // no token was in the list
};

/// Single-query dot-product attention over knowledge vectors.
struct AttentionPooler {
  Vector query;
  double temperature = 1.0;

  explicit AttentionPooler(std::size_t dim = 0, double temp = 1.0)
      : query(Vector::Zero(static_cast<Eigen::Index>(dim))), temperature(temp) {}

  std::vector<double> weights(std::span<const Vector> knowledge) const {
    if (!(temperature > 0.0)) throw ConfigError("attention temperature must be positive");
    std::vector<double> w(knowledge.size());
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < knowledge.size(); ++j) {
      if (knowledge[j].size() != query.size()) throw DimensionError("knowledge vector and query differ in dimension");
      w[j] = query.dot(knowledge[j]) / temperature;
      max_score = std::max(max_score, w[j]);
    }
    double sum = 0.0;
    for (double& v : w) {
      v = std::exp(v - max_score);
      sum += v;
    }
    for (double& v : w) v /= sum;
    return w;
  }

  /// Gradient of <upstream, pool(T)> with respect to the query, for training
  /// the pooler in a downstream model.
  Vector query_gradient(std::span<const Vector> knowledge, const Vector& upstream) const {
    auto w = weights(knowledge);
    Vector pooled = Vector::Zero(query.size());
    for (std::size_t j = 0; j < knowledge.size(); ++j) pooled += w[j] * knowledge[j];
    Vector grad = Vector::Zero(query.size());
    for (std::size_t j = 0; j < knowledge.size(); ++j) {
      grad += w[j] * upstream.dot(knowledge[j] - pooled) * knowledge[j];
    }
    return grad / temperature;
  }
};

struct PooledVector {
  Vector t_cls;
  bool empty = false;  // no knowledge vectors; t_cls is zero
};

/// softmax(<query, t_j> / temperature)-weighted sum of the knowledge vectors.
inline PooledVector pool_sentence(std::span<const Vector> knowledge, const AttentionPooler& pooler) {
  if (knowledge.empty()) return {Vector::Zero(pooler.query.size()), true};
  auto w = pooler.weights(knowledge);
  Vector out = Vector::Zero(knowledge.front().size());
  for (std::size_t j = 0; j < knowledge.size(); ++j) out += w[j] * knowledge[j];
  return {out, false};
}

inline Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

inline Vector to_vector(std::span<const float> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

/// Word-level enhancement with explicit base vectors E (one per token). Tokens
/// in `table` get E_j (+) project(u_j); other tokens get E_j (+) E_j.
inline EnhancedSequence enhance_words(const std::vector<std::string>& tokens, std::span<const Vector> base,
                                      const EmbeddingTable& table, const ProjectionModel& model) {
  if (base.size() != tokens.size()) throw DimensionError("one base vector per token is required");
  EnhancedSequence seq;
  seq.tokens = tokens;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    const Vector& e = base[j];
    if (static_cast<std::size_t>(e.size()) != model.representation_dim()) {
      throw DimensionError("base vector for '" + tokens[j] + "' does not match the projection dimension");
    }
    seq.raw.push_back(e);
    if (auto u = table.lookup(tokens[j])) {
      Vector t = project(model, *u);
      seq.in_list.push_back(j);
      seq.enhanced.push_back(concat(e, t));
      seq.knowledge.push_back(std::move(t));
    } else {
      seq.enhanced.push_back(concat(e, e));
    }
  }
  return seq;
}

/// Word-level enhancement where E comes from the word-embedding list itself.
/// Tokens absent from the list have no base vector and get the zero vector.
inline EnhancedSequence enhance_words(const std::vector<std::string>& tokens, const EmbeddingTable& table,
                                      const ProjectionModel& model) {
  std::vector<Vector> base;
  base.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto v = table.lookup(t);
    base.push_back(v ? to_vector(*v) : Vector::Zero(static_cast<Eigen::Index>(table.dim())));
  }
  return enhance_words(tokens, base, table, model);
}

/// base_cls (+) t_cls. When no token is in the list, t_cls is zero and
/// `empty_knowledge` is set.
inline EnhancedSequence enhance_sentence(const std::vector<std::string>& tokens, std::span<const Vector> base,
                                         const EmbeddingTable& table, const ProjectionModel& model,
                                         const AttentionPooler& pooler, const Vector& base_cls, Vector* sentence) {
  if (static_cast<std::size_t>(base_cls.size()) != model.representation_dim()) {
    throw DimensionError("sentence vector does not match the projection dimension");
  }
  auto seq = enhance_words(tokens, base, table, model);
  auto pooled = pool_sentence(seq.knowledge, pooler);
  seq.t_cls = pooled.empty ? Vector::Zero(base_cls.size()) : pooled.t_cls;
  seq.empty_knowledge = pooled.empty;
  if (sentence != nullptr) *sentence = concat(base_cls, seq.t_cls);
  return seq;
}

inline Vector enhance_sentence(const std::vector<std::string>& tokens, const EmbeddingTable& table,
                               const ProjectionModel& model, const AttentionPooler& pooler, const Vector& base_cls) {
  std::vector<Vector> base;
  for (const auto& t : tokens) {
    auto v = table.lookup(t);
    base.push_back(v ? to_vector(*v) : Vector::Zero(static_cast<Eigen::Index>(table.dim())));
  }
  Vector out;
  enhance_sentence(tokens, base, table, model, pooler, base_cls, &out);
  return out;
}

/// One sentence block of the enhanced-sequence dump:
///   #sentence<TAB>index
///   token<TAB>f1 ... f2d        (one line per token)
///   #empty_t                    (only when no token was in the list)
///   #t_cls<TAB>v1 ... vd
inline void write_enhanced_sequence(const EnhancedSequence& seq, std::size_t index, std::ostream& out) {
  out << "#sentence\t" << index << '\n';
  auto write_vec = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_sig(v(i), 9);
  };
  for (std::size_t j = 0; j < seq.tokens.size(); ++j) {
    out << seq.tokens[j] << '\t';
    write_vec(seq.enhanced[j]);
    out << '\n';
  }
  if (seq.empty_knowledge) out << "#empty_t\n";
  out << "#t_cls\t";
  write_vec(seq.t_cls);
  out << '\n';
}

}  // namespace kvwe
