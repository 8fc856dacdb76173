#pragma once

// Within-class / between-class similarity statistics and a linear downstream
// probe.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kvwe/common.hpp"
#include "kvwe/embed_store.hpp"
#include "kvwe/lexicon.hpp"
#include "kvwe/projector.hpp"

namespace kvwe {

/// Vectors of one class; columns of `vectors` line up with `words`.
struct ClassGroup {
  std::string label;
  std::vector<std::string> words;
  Matrix vectors;
};

struct PairStats {
  std::string p;
  std::string q;
  std::size_t pairs = 0;
  // Empty when the class pair has no word pairs (e.g. a within-class cell of a
  // one-word class).
  std::optional<double> mean_euclidean;
  std::optional<double> mean_cosine;
  std::optional<double> delta_euclidean;
  std::optional<double> delta_cosine;

  bool within() const { return p == q; }
};

struct SimilarityReport {
  std::vector<std::string> classes;
  // Upper triangle (p <= q) in class order.
  std::vector<PairStats> cells;
  // Pair-weighted means over all within-class and all between-class pairs.
  PairStats within_aggregate;
  PairStats between_aggregate;
  // Cosine terms that involved a zero vector (counted as similarity 0).
  std::size_t zero_vector_pairs = 0;

  /// Symmetric lookup.
  const PairStats& at(std::string_view p, std::string_view q) const {
    for (const auto& c : cells) {
      if ((c.p == p && c.q == q) || (c.p == q && c.q == p)) return c;
    }
    throw ConfigError("no similarity cell for (" + std::string(p) + ", " + std::string(q) + ")");
  }
};

namespace detail {

struct PairSums {
  double euclidean = 0.0;
  double cosine = 0.0;
  std::size_t pairs = 0;
  std::size_t zero = 0;

  void add(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
    euclidean += (a - b).norm();
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
      ++zero;
    } else {
      cosine += a.dot(b) / (na * nb);
    }
    ++pairs;
  }

  void fill(PairStats& s) const {
    s.pairs = pairs;
    if (pairs == 0) return;
    s.mean_euclidean = euclidean / static_cast<double>(pairs);
    s.mean_cosine = cosine / static_cast<double>(pairs);
  }
};

}  // namespace detail

/// Within-class cells average over unordered distinct pairs (no self-pairs);
/// between-class cells average over the full cross product.
inline SimilarityReport similarity_matrix(const std::vector<ClassGroup>& groups) {
  SimilarityReport report;
  detail::PairSums within_all;
  detail::PairSums between_all;
  for (const auto& g : groups) {
    if (static_cast<std::size_t>(g.vectors.cols()) != g.words.size()) {
      throw DimensionError("class '" + g.label + "' has mismatched words and vectors");
    }
    report.classes.push_back(g.label);
  }
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a; b < groups.size(); ++b) {
      const Matrix& x = groups[a].vectors;
      const Matrix& y = groups[b].vectors;
      if (x.cols() > 0 && y.cols() > 0 && x.rows() != y.rows()) throw DimensionError("classes differ in dimension");
      detail::PairSums sums;
      if (a == b) {
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
          for (Eigen::Index j = i + 1; j < x.cols(); ++j) sums.add(x.col(i), x.col(j));
        }
      } else {
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
          for (Eigen::Index j = 0; j < y.cols(); ++j) sums.add(x.col(i), y.col(j));
        }
      }
      PairStats cell;
      cell.p = groups[a].label;
      cell.q = groups[b].label;
      sums.fill(cell);
      report.zero_vector_pairs += sums.zero;
      auto& agg = a == b ? within_all : between_all;
      agg.euclidean += sums.euclidean;
      agg.cosine += sums.cosine;
      agg.pairs += sums.pairs;
      report.cells.push_back(std::move(cell));
    }
  }
  report.within_aggregate.p = report.within_aggregate.q = "within";
  within_all.fill(report.within_aggregate);
  report.between_aggregate.p = "between";
  report.between_aggregate.q = "between";
  between_all.fill(report.between_aggregate);
  return report;
}

namespace detail {

inline void set_delta(std::optional<double>& out, const std::optional<double>& after,
                      const std::optional<double>& before) {
  if (after && before) out = *after - *before;
}

inline std::vector<std::string> sorted_words(const ClassGroup& g) {
  auto w = g.words;
  std::sort(w.begin(), w.end());
  return w;
}

}  // namespace detail

/// Statistics of `after` with deltas (after - before) per cell. Both sides must
/// hold the same classes with the same word sets.
///
/// Improvement means: within-class cosine up and euclidean down; between-class
/// cosine down and euclidean up.
inline SimilarityReport improvement_report(const std::vector<ClassGroup>& before, const std::vector<ClassGroup>& after) {
  if (before.size() != after.size()) throw WordSetMismatch("before/after class counts differ");
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].label != after[i].label) throw WordSetMismatch("class order differs at '" + before[i].label + "'");
    if (detail::sorted_words(before[i]) != detail::sorted_words(after[i])) {
      throw WordSetMismatch("word sets differ in class '" + before[i].label + "'");
    }
  }
  auto b = similarity_matrix(before);
  auto a = similarity_matrix(after);
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    detail::set_delta(a.cells[i].delta_euclidean, a.cells[i].mean_euclidean, b.cells[i].mean_euclidean);
    detail::set_delta(a.cells[i].delta_cosine, a.cells[i].mean_cosine, b.cells[i].mean_cosine);
  }
  for (auto [pa, pb] : {std::pair{&a.within_aggregate, &b.within_aggregate},
                        std::pair{&a.between_aggregate, &b.between_aggregate}}) {
    detail::set_delta(pa->delta_euclidean, pa->mean_euclidean, pb->mean_euclidean);
    detail::set_delta(pa->delta_cosine, pa->mean_cosine, pb->mean_cosine);
  }
  return a;
}

/// Groups lexicon words by label (class labels first, then neutral), taking each
/// word's vector from `vector_of`. Words without a vector are skipped.
/// `max_per_class` > 0 keeps a seeded sample of that many words per class.
inline std::vector<ClassGroup> group_by_class(
    const KnowledgeBase& kv, std::size_t dim,
    const std::function<std::optional<Vector>(const std::string&)>& vector_of, std::size_t max_per_class = 0,
    std::uint64_t seed = 0) {
  std::vector<ClassGroup> groups;
  std::map<std::string, std::size_t, std::less<>> index;
  for (const auto& l : kv.all_labels()) {
    index[l] = groups.size();
    groups.push_back({l, {}, Matrix()});
  }
  for (const auto& [w, e] : kv.entries) groups[index.at(e.label)].words.push_back(w);
  Rng rng(seed);
  for (auto& g : groups) {
    if (max_per_class > 0 && g.words.size() > max_per_class) {
      shuffle(g.words, rng);
      g.words.resize(max_per_class);
      std::sort(g.words.begin(), g.words.end());
    }
    std::vector<std::string> kept;
    std::vector<Vector> cols;
    for (const auto& w : g.words) {
      auto v = vector_of(w);
      if (!v) continue;
      if (static_cast<std::size_t>(v->size()) != dim) throw DimensionError("vector for '" + w + "' has wrong dimension");
      kept.push_back(w);
      cols.push_back(std::move(*v));
    }
    g.words = std::move(kept);
    g.vectors.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) g.vectors.col(static_cast<Eigen::Index>(j)) = cols[j];
  }
  return groups;
}

enum class ImprovementMetric { cosine, euclidean, both };

inline ImprovementMetric improvement_metric_from_string(std::string_view s) {
  if (s == "cosine") return ImprovementMetric::cosine;
  if (s == "euclidean") return ImprovementMetric::euclidean;
  if (s == "both") return ImprovementMetric::both;
  throw ConfigError("unknown improvement metric '" + std::string(s) + "'");
}

/// Sign test over non-neutral cells. Cells touching the neutral class carry no
/// weight. `margin` is the minimum absolute change required.
inline std::vector<std::string> improvement_failures(const SimilarityReport& report, ImprovementMetric metric,
                                                     double margin = 0.0) {
  std::vector<std::string> failures;
  const bool cos = metric != ImprovementMetric::euclidean;
  const bool euc = metric != ImprovementMetric::cosine;
  for (const auto& c : report.cells) {
    if (c.p == kNeutralLabel || c.q == kNeutralLabel) continue;
    const std::string name = c.p + "/" + c.q;
    if (cos) {
      if (!c.delta_cosine) {
        failures.push_back(name + " cosine undefined");
      } else if (c.within() ? !(*c.delta_cosine > margin) : !(*c.delta_cosine < -margin)) {
        failures.push_back(name + " cosine delta " + format_sig(*c.delta_cosine, 6));
      }
    }
    if (euc) {
      if (!c.delta_euclidean) {
        failures.push_back(name + " euclidean undefined");
      } else if (c.within() ? !(*c.delta_euclidean < -margin) : !(*c.delta_euclidean > margin)) {
        failures.push_back(name + " euclidean delta " + format_sig(*c.delta_euclidean, 6));
      }
    }
  }
  return failures;
}

namespace detail {

inline std::string fixed4(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

inline std::string signed4(double v) {
  auto s = fixed4(v);
  return s.front() == '-' ? s : "+" + s;
}

inline std::string opt_csv(const std::optional<double>& v) { return v ? format_sig(*v, 10) : std::string(); }

// "0.9302 (-10.3896)", "0.9302", or "n/a".
inline std::string cell_text(const std::optional<double>& value, const std::optional<double>& delta) {
  if (!value) return "n/a";
  auto s = fixed4(*value);
  if (delta) s += " (" + signed4(*delta) + ")";
  return s;
}

}  // namespace detail

inline void write_report_csv(const SimilarityReport& report, std::ostream& out) {
  out << "class_p,class_q,pairs,mean_euclidean,delta_euclidean,mean_cosine,delta_cosine\n";
  auto row = [&](const PairStats& c) {
    out << c.p << ',' << c.q << ',' << c.pairs << ',' << detail::opt_csv(c.mean_euclidean) << ','
        << detail::opt_csv(c.delta_euclidean) << ',' << detail::opt_csv(c.mean_cosine) << ','
        << detail::opt_csv(c.delta_cosine) << '\n';
  };
  for (const auto& c : report.cells) row(c);
  row(report.within_aggregate);
  row(report.between_aggregate);
}

/// Upper-triangular table: two rows per class (Dist, Cosine), cells with the
/// parenthesized delta.
inline void write_report_table(const SimilarityReport& report, std::ostream& out) {
  const auto& classes = report.classes;
  std::size_t width = 6;
  std::size_t label_width = 6;
  for (const auto& c : classes) label_width = std::max(label_width, c.size());
  for (const auto& c : report.cells) {
    width = std::max({width, c.p.size(), detail::cell_text(c.mean_euclidean, c.delta_euclidean).size(),
                      detail::cell_text(c.mean_cosine, c.delta_cosine).size()});
  }
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  out << pad("", label_width) << "  " << pad("", 6);
  for (const auto& c : classes) out << " | " << pad(c, width);
  out << '\n';
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (int metric = 0; metric < 2; ++metric) {
      out << pad(metric == 0 ? classes[a] : "", label_width) << "  " << pad(metric == 0 ? "Dist" : "Cosine", 6);
      for (std::size_t b = 0; b < classes.size(); ++b) {
        std::string text;
        if (b >= a) {
          const auto& c = report.at(classes[a], classes[b]);
          text = metric == 0 ? detail::cell_text(c.mean_euclidean, c.delta_euclidean)
                             : detail::cell_text(c.mean_cosine, c.delta_cosine);
        }
        out << " | " << pad(text, width);
      }
      out << '\n';
    }
  }
  out << "within (pair-weighted):  Dist "
      << detail::cell_text(report.within_aggregate.mean_euclidean, report.within_aggregate.delta_euclidean)
      << "  Cosine "
      << detail::cell_text(report.within_aggregate.mean_cosine, report.within_aggregate.delta_cosine) << '\n';
  out << "between (pair-weighted): Dist "
      << detail::cell_text(report.between_aggregate.mean_euclidean, report.between_aggregate.delta_euclidean)
      << "  Cosine "
      << detail::cell_text(report.between_aggregate.mean_cosine, report.between_aggregate.delta_cosine) << '\n';
  if (report.zero_vector_pairs > 0) {
    out << "warning: " << report.zero_vector_pairs << " cosine pairs involved a zero vector (counted as 0)\n";
  }
}

// ---------------------------------------------------------------------------
// Downstream probe

struct ProbeConfig {
  int epochs = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

struct ProbeResult {
  double acc_raw = 0.0;
  double acc_enhanced = 0.0;
};

namespace detail {

// Softmax regression on standardized features, zero-initialized, full-batch
// gradient descent. Returns test accuracy.
inline double linear_probe_accuracy(const Matrix& features, const std::vector<std::size_t>& labels,
                                    std::size_t num_classes, const std::vector<std::size_t>& train_idx,
                                    const std::vector<std::size_t>& test_idx, const ProbeConfig& cfg) {
  const Eigen::Index dim = features.rows();
  auto take = [&](const std::vector<std::size_t>& idx) {
    Matrix m(dim, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = features.col(static_cast<Eigen::Index>(idx[j]));
    return m;
  };
  Matrix xtr = take(train_idx);
  Matrix xte = take(test_idx);
  const Vector mean = xtr.rowwise().mean();
  Vector scale(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double var = (xtr.row(i).array() - mean(i)).square().mean();
    scale(i) = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
  }
  xtr = (xtr.colwise() - mean).array().colwise() * scale.array();
  xte = (xte.colwise() - mean).array().colwise() * scale.array();

  const auto k = static_cast<Eigen::Index>(num_classes);
  const auto n = static_cast<double>(train_idx.size());
  Matrix w = Matrix::Zero(k, dim);
  Vector b = Vector::Zero(k);
  Matrix target = Matrix::Zero(k, xtr.cols());
  for (std::size_t j = 0; j < train_idx.size(); ++j) target(static_cast<Eigen::Index>(labels[train_idx[j]]), static_cast<Eigen::Index>(j)) = 1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Matrix z = w * xtr;
    z.colwise() += b;
    apply_activation(z, Activation::softmax);
    const Matrix delta = (z - target) / n;
    w -= cfg.learning_rate * (delta * xtr.transpose() + cfg.l2 * w);
    b -= cfg.learning_rate * delta.rowwise().sum();
  }
  Matrix z = w * xte;
  z.colwise() += b;
  std::size_t hit = 0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    Eigen::Index best = 0;
    z.col(j).maxCoeff(&best);
    hit += static_cast<std::size_t>(best) == labels[test_idx[static_cast<std::size_t>(j)]] ? 1 : 0;
  }
  return test_idx.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(test_idx.size());
}

}  // namespace detail

/// Trains the same linear classifier on raw and on enhanced sentence vectors
/// (columns) and reports test accuracy of each. The split is a seeded,
/// per-class 50/50 split (the odd item of a class goes to training).
inline ProbeResult downstream_probe(const Matrix& raw, const Matrix& enhanced, const std::vector<std::size_t>& labels,
                                    std::uint64_t seed, const ProbeConfig& cfg = {}) {
  if (static_cast<std::size_t>(raw.cols()) != labels.size() || static_cast<std::size_t>(enhanced.cols()) != labels.size()) {
    throw DimensionError("probe inputs and labels differ in count");
  }
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw ConfigError("probe needs at least two classes");
  Rng rng(seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  std::set<std::size_t> train_classes;
  for (auto& [label, idx] : by_class) {
    shuffle(idx, rng);
    const std::size_t n_train = (idx.size() + 1) / 2;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < n_train ? train_idx : test_idx).push_back(idx[i]);
    if (n_train > 0) train_classes.insert(label);
  }
  if (train_classes.size() < 2 || test_idx.empty()) throw ConfigError("degenerate probe split");
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  const std::size_t num_classes = by_class.rbegin()->first + 1;
  ProbeResult r;
  r.acc_raw = detail::linear_probe_accuracy(raw, labels, num_classes, train_idx, test_idx, cfg);
  r.acc_enhanced = detail::linear_probe_accuracy(enhanced, labels, num_classes, train_idx, test_idx, cfg);
  return r;
}

}  // namespace kvwe
