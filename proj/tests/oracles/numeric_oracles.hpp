#pragma once

// Brute-force reference arithmetic over plain nested vectors.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dist(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double cos_sim(const Vec& a, const Vec& b) {
  double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0 || nb == 0) return 0;
  return dot(a, b) / (na * nb);
}

// Eq. (1)-style masked sum; centers indexed by label.
inline double center_loss_euclidean(const std::vector<Vec>& xs, const std::vector<std::size_t>& labels,
                                    const std::vector<int>& neutral, const std::vector<Vec>& centers) {
  double total = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    double sq = 0;
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      double d = xs[k][i] - centers[labels[k]][i];
      sq += d * d;
    }
    total += (1 - neutral[k]) * sq;
  }
  return total;
}

inline double center_loss_cosine(const std::vector<Vec>& xs, const std::vector<std::size_t>& labels,
                                 const std::vector<int>& neutral, const std::vector<Vec>& centers) {
  double total = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) total += (1 - neutral[k]) * (1 - cos_sim(xs[k], centers[labels[k]]));
  return total;
}

inline double binary_cross_entropy(const std::vector<Vec>& probs, const std::vector<std::size_t>& labels) {
  const double eps = 1e-12;
  double total = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    for (std::size_t c = 0; c < probs[k].size(); ++c) {
      double p = probs[k][c];
      if (p < eps) p = eps;
      if (p > 1 - eps) p = 1 - eps;
      double t = c == labels[k] ? 1.0 : 0.0;
      total += -(t * std::log(p) + (1 - t) * std::log(1 - p));
    }
  }
  return total / static_cast<double>(probs.size());
}

struct CellOracle {
  double mean_euclidean = 0;
  double mean_cosine = 0;
  std::size_t pairs = 0;
};

// Double loop over ordered pairs, keeping i<j within a class.
inline CellOracle brute_cell(const std::vector<Vec>& a, const std::vector<Vec>& b, bool same_class) {
  CellOracle c;
  double se = 0, sc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (same_class && j <= i) continue;
      se += dist(a[i], b[j]);
      sc += cos_sim(a[i], b[j]);
      ++c.pairs;
    }
  }
  if (c.pairs > 0) {
    c.mean_euclidean = se / static_cast<double>(c.pairs);
    c.mean_cosine = sc / static_cast<double>(c.pairs);
  }
  return c;
}

}  // namespace oracle
