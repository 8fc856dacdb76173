#pragma once

// Knowledge-based embedding projection: a five-layer dense network trained with
// a masked center loss on the second layer's output and cross-entropy on the
// final layer. The second layer's output is the projected embedding.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "kvwe/common.hpp"
#include "kvwe/embed_store.hpp"
#include "kvwe/lexicon.hpp"

namespace kvwe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, sigmoid, softmax };
enum class CenterLossKind { euclidean, cosine };
enum class CenterRefresh { per_epoch, per_batch };
enum class OptimizerKind { sgd, momentum, adam };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "?";
}
inline std::string_view to_string(CenterLossKind k) { return k == CenterLossKind::euclidean ? "euclidean" : "cosine"; }
inline std::string_view to_string(CenterRefresh r) { return r == CenterRefresh::per_epoch ? "per_epoch" : "per_batch"; }
inline std::string_view to_string(OptimizerKind o) {
  switch (o) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "softmax") return Activation::softmax;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}
inline CenterLossKind center_loss_from_string(std::string_view s) {
  if (s == "euclidean") return CenterLossKind::euclidean;
  if (s == "cosine") return CenterLossKind::cosine;
  throw ConfigError("unknown center loss '" + std::string(s) + "'");
}
inline CenterRefresh center_refresh_from_string(std::string_view s) {
  if (s == "per_epoch") return CenterRefresh::per_epoch;
  if (s == "per_batch") return CenterRefresh::per_batch;
  throw ConfigError("unknown center refresh '" + std::string(s) + "'");
}
inline OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "momentum") return OptimizerKind::momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::relu;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline constexpr std::size_t kNumLayers = 5;
// Index of the layer whose output is the projected embedding.
inline constexpr std::size_t kRepresentationLayer = 1;

/// Layer shapes for an input of `input_dim` and `num_classes` outputs. The
/// defaults give 768-512-768-512-300-|Class| for 768-dim inputs.
struct Architecture {
  std::size_t input_dim = 768;
  std::size_t num_classes = 3;
  std::size_t hidden1 = 512;
  std::size_t hidden3 = 512;
  std::size_t hidden4 = 300;
  Activation output = Activation::sigmoid;

  std::vector<LayerSpec> layer_specs() const {
    return {
        {input_dim, hidden1, Activation::relu},
        {hidden1, input_dim, Activation::relu},
        {input_dim, hidden3, Activation::relu},
        {hidden3, hidden4, Activation::relu},
        {hidden4, num_classes, output},
    };
  }
};

inline void validate_layer_specs(const std::vector<LayerSpec>& specs) {
  if (specs.size() != kNumLayers) throw ConfigError("projection model needs exactly 5 layers");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (specs[k].in_dim == 0 || specs[k].out_dim == 0) throw ConfigError("layer dimensions must be positive");
    if (k + 1 < specs.size() && specs[k].out_dim != specs[k + 1].in_dim) {
      throw ConfigError("layer " + std::to_string(k) + " output does not match layer " + std::to_string(k + 1) +
                        " input");
    }
    const bool last = k + 1 == specs.size();
    if (!last && specs[k].activation != Activation::relu) throw ConfigError("hidden layers use relu");
    if (last && specs[k].activation == Activation::relu) throw ConfigError("output layer must be sigmoid or softmax");
  }
  if (specs[kRepresentationLayer].out_dim != specs[0].in_dim) {
    throw ConfigError("second layer must map back to the input dimension");
  }
}

struct DenseLayer {
  LayerSpec spec;
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim
};

struct ProjectionModel {
  std::vector<DenseLayer> layers;
  CenterLossKind center_loss_kind = CenterLossKind::euclidean;
  std::uint64_t seed = 0;
  double center_loss_weight = 1.0;
  // Output order of the classifier; "neutral" is last.
  std::vector<std::string> class_labels;

  std::size_t input_dim() const { return layers.front().spec.in_dim; }
  std::size_t num_classes() const { return layers.back().spec.out_dim; }
  std::size_t representation_dim() const { return layers[kRepresentationLayer].spec.out_dim; }
  Activation output_activation() const { return layers.back().spec.activation; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  /// Flat parameter view: layer by layer, weights (column-major) then bias.
  double& parameter(std::size_t index) {
    for (auto& l : layers) {
      auto nw = static_cast<std::size_t>(l.weights.size());
      if (index < nw) return l.weights.data()[index];
      index -= nw;
      auto nb = static_cast<std::size_t>(l.bias.size());
      if (index < nb) return l.bias.data()[index];
      index -= nb;
    }
    throw std::out_of_range("parameter index");
  }
};

/// He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
inline ProjectionModel init_model(const std::vector<LayerSpec>& specs, std::uint64_t seed,
                                  CenterLossKind kind = CenterLossKind::euclidean) {
  validate_layer_specs(specs);
  ProjectionModel model;
  model.seed = seed;
  model.center_loss_kind = kind;
  Rng rng(seed);
  for (const auto& s : specs) {
    DenseLayer layer{s, Matrix(s.out_dim, s.in_dim), Vector::Zero(static_cast<Eigen::Index>(s.out_dim))};
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in_dim));
    for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) layer.weights(i, j) = uniform(rng, -limit, limit);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

inline ProjectionModel zero_model(const std::vector<LayerSpec>& specs) {
  validate_layer_specs(specs);
  ProjectionModel model;
  for (const auto& s : specs) {
    model.layers.push_back({s, Matrix::Zero(static_cast<Eigen::Index>(s.out_dim), static_cast<Eigen::Index>(s.in_dim)),
                            Vector::Zero(static_cast<Eigen::Index>(s.out_dim))});
  }
  return model;
}

namespace detail {

inline void apply_activation(Matrix& z, Activation a) {
  switch (a) {
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      z = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      break;
    case Activation::softmax:
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        auto col = z.col(j);
        const double m = col.maxCoeff();
        col = (col.array() - m).exp().matrix();
        col /= col.sum();
      }
      break;
  }
}

}  // namespace detail

/// Activations of one forward pass. `outputs[k]` is layer k's post-activation
/// output before dropout; `masks[k]` (scaled keep-mask) is applied when that
/// output feeds layer k+1.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> outputs;
  std::vector<Matrix> masks;

  const Matrix& hidden2() const { return outputs[kRepresentationLayer]; }
  const Matrix& probabilities() const { return outputs.back(); }
};

/// Batched forward pass; columns of `x` are samples. Dropout follows each hidden
/// activation only when `rng` is given and `dropout_rate` > 0 (inverted scaling).
inline ForwardCache forward_batch(const ProjectionModel& model, const Matrix& x, Rng* rng = nullptr,
                                  double dropout_rate = 0.0) {
  if (static_cast<std::size_t>(x.rows()) != model.input_dim()) {
    throw DimensionError("input has dimension " + std::to_string(x.rows()) + ", model expects " +
                         std::to_string(model.input_dim()));
  }
  const bool drop = rng != nullptr && dropout_rate > 0.0;
  ForwardCache cache;
  cache.input = x;
  cache.outputs.reserve(model.layers.size());
  cache.masks.resize(model.layers.size());
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& layer = model.layers[k];
    Matrix z;
    if (k == 0) {
      z = layer.weights * x;
    } else if (drop) {
      z = layer.weights * cache.outputs[k - 1].cwiseProduct(cache.masks[k - 1]);
    } else {
      z = layer.weights * cache.outputs[k - 1];
    }
    z.colwise() += layer.bias;
    detail::apply_activation(z, layer.spec.activation);
    if (drop && k + 1 < model.layers.size()) {
      Matrix mask(z.rows(), z.cols());
      const double keep_scale = 1.0 / (1.0 - dropout_rate);
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) {
          mask(i, j) = uniform01(*rng) < dropout_rate ? 0.0 : keep_scale;
        }
      }
      cache.masks[k] = std::move(mask);
    }
    cache.outputs.push_back(std::move(z));
  }
  return cache;
}

struct ForwardResult {
  Vector hidden2;
  Vector output;
};

inline ForwardResult forward(const ProjectionModel& model, const Vector& x, bool train_mode, Rng& rng,
                             double dropout_rate = 0.4) {
  Matrix in = x;
  auto cache = forward_batch(model, in, train_mode ? &rng : nullptr, train_mode ? dropout_rate : 0.0);
  return {cache.hidden2().col(0), cache.probabilities().col(0)};
}

/// Inference-mode projected embedding.
inline Vector project(const ProjectionModel& model, const Vector& x) {
  Matrix in = x;
  return forward_batch(model, in).hidden2().col(0);
}

inline Vector project(const ProjectionModel& model, std::span<const float> x) {
  Vector v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) v(static_cast<Eigen::Index>(i)) = x[i];
  return project(model, v);
}

inline Matrix project_batch(const ProjectionModel& model, const Matrix& x) { return forward_batch(model, x).hidden2(); }

/// One center per non-neutral class, keyed by class index.
using ClassCenters = std::map<std::size_t, Vector>;

/// Items of a training batch. Columns of `inputs` are samples.
struct TrainingBatch {
  Matrix inputs;
  std::vector<std::size_t> labels;
  std::vector<std::uint8_t> neutral;  // 1 iff the label is "neutral"

  static TrainingBatch make(Matrix inputs, std::vector<std::size_t> labels, std::size_t neutral_index) {
    if (static_cast<std::size_t>(inputs.cols()) != labels.size()) throw DimensionError("label count mismatch");
    std::vector<std::uint8_t> mask;
    mask.reserve(labels.size());
    for (auto l : labels) mask.push_back(l == neutral_index ? 1 : 0);
    return {std::move(inputs), std::move(labels), std::move(mask)};
  }
};

namespace detail {

inline const Vector& center_for(const ClassCenters& centers, std::size_t label) {
  auto it = centers.find(label);
  if (it == centers.end()) throw ConfigError("no center for class " + std::to_string(label));
  return it->second;
}

// Zero vectors have cosine similarity 0 with anything.
inline double cosine(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace detail

/// Masked center loss over a batch of second-layer outputs (columns of `hidden`).
///   euclidean: sum (1 - y_k) * ||x_k - c_q||^2
///   cosine:    sum (1 - y_k) * (1 - cos(x_k, c_q))
inline double center_loss(const Matrix& hidden, std::span<const std::size_t> labels,
                          std::span<const std::uint8_t> neutral, const ClassCenters& centers, CenterLossKind kind) {
  double total = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (neutral[k]) continue;
    const auto& c = detail::center_for(centers, labels[k]);
    auto x = hidden.col(static_cast<Eigen::Index>(k));
    if (kind == CenterLossKind::euclidean) {
      total += (x - c).squaredNorm();
    } else {
      total += 1.0 - detail::cosine(x, c);
    }
  }
  return total;
}

/// d(center_loss)/d(hidden); centers are constants.
inline Matrix center_loss_gradient(const Matrix& hidden, std::span<const std::size_t> labels,
                                   std::span<const std::uint8_t> neutral, const ClassCenters& centers,
                                   CenterLossKind kind) {
  Matrix grad = Matrix::Zero(hidden.rows(), hidden.cols());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (neutral[k]) continue;
    const auto& c = detail::center_for(centers, labels[k]);
    const auto col = static_cast<Eigen::Index>(k);
    auto x = hidden.col(col);
    if (kind == CenterLossKind::euclidean) {
      grad.col(col) = 2.0 * (x - c);
    } else {
      const double nx = x.norm();
      const double nc = c.norm();
      if (nx == 0.0 || nc == 0.0) continue;
      const double dot = x.dot(c);
      grad.col(col) = -(c / (nx * nc) - x * (dot / (nx * nx * nx * nc)));
    }
  }
  return grad;
}

inline constexpr double kProbabilityEpsilon = 1e-12;

/// One-hot cross-entropy averaged over the batch. With sigmoid outputs this is
/// the per-class binary cross-entropy summed over classes; with softmax outputs
/// it is -ln p_target. Probabilities are clamped to [eps, 1 - eps].
inline double cross_entropy_loss(const Matrix& probs, std::span<const std::size_t> labels,
                                 Activation output = Activation::sigmoid) {
  const auto classes = static_cast<std::size_t>(probs.rows());
  double total = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] >= classes) throw ConfigError("label index " + std::to_string(labels[k]) + " out of range");
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::clamp(probs(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)),
                                  kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
      const bool target = c == labels[k];
      if (output == Activation::softmax) {
        if (target) total -= std::log(p);
      } else {
        total -= target ? std::log(p) : std::log(1.0 - p);
      }
    }
  }
  return labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
}

/// d(cross_entropy)/d(pre-activation) of the output layer. Clamped entries have
/// zero gradient.
inline Matrix cross_entropy_gradient(const Matrix& probs, std::span<const std::size_t> labels,
                                     Activation output = Activation::sigmoid) {
  Matrix grad = Matrix::Zero(probs.rows(), probs.cols());
  const double inv_batch = labels.empty() ? 0.0 : 1.0 / static_cast<double>(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    if (output == Activation::softmax) {
      const double pt = probs(static_cast<Eigen::Index>(labels[k]), col);
      if (pt < kProbabilityEpsilon || pt > 1.0 - kProbabilityEpsilon) continue;
      grad.col(col) = probs.col(col) * inv_batch;
      grad(static_cast<Eigen::Index>(labels[k]), col) -= inv_batch;
    } else {
      for (Eigen::Index c = 0; c < probs.rows(); ++c) {
        const double p = probs(c, col);
        if (p < kProbabilityEpsilon || p > 1.0 - kProbabilityEpsilon) continue;
        const double t = static_cast<std::size_t>(c) == labels[k] ? 1.0 : 0.0;
        grad(c, col) = (p - t) * inv_batch;
      }
    }
  }
  return grad;
}

struct LossParts {
  double cross_entropy = 0.0;
  double center = 0.0;
  double total = 0.0;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
};

/// Forward + backward for total = cross_entropy + lambda * center_loss.
inline LossParts loss_and_gradients(const ProjectionModel& model, const TrainingBatch& batch,
                                    const ClassCenters& centers, double lambda, Gradients* grads,
                                    Rng* rng = nullptr, double dropout_rate = 0.0) {
  auto cache = forward_batch(model, batch.inputs, rng, dropout_rate);
  const auto out_act = model.output_activation();
  LossParts parts;
  parts.cross_entropy = cross_entropy_loss(cache.probabilities(), batch.labels, out_act);
  parts.center = center_loss(cache.hidden2(), batch.labels, batch.neutral, centers, model.center_loss_kind);
  parts.total = parts.cross_entropy + lambda * parts.center;
  if (grads == nullptr) return parts;

  const std::size_t n = model.layers.size();
  grads->weights.assign(n, Matrix());
  grads->bias.assign(n, Vector());
  Matrix delta = cross_entropy_gradient(cache.probabilities(), batch.labels, out_act);
  for (std::size_t k = n; k-- > 0;) {
    const Matrix& in = k == 0 ? cache.input : cache.outputs[k - 1];
    const bool masked = k > 0 && cache.masks[k - 1].size() > 0;
    if (masked) {
      grads->weights[k] = delta * in.cwiseProduct(cache.masks[k - 1]).transpose();
    } else {
      grads->weights[k] = delta * in.transpose();
    }
    grads->bias[k] = delta.rowwise().sum();
    if (k == 0) break;
    Matrix d_out = model.layers[k].weights.transpose() * delta;
    if (masked) d_out = d_out.cwiseProduct(cache.masks[k - 1]);
    if (k - 1 == kRepresentationLayer && lambda != 0.0) {
      d_out += lambda * center_loss_gradient(cache.hidden2(), batch.labels, batch.neutral, centers,
                                             model.center_loss_kind);
    }
    // Hidden layers are relu: derivative is 1 where the output is positive.
    delta = d_out.cwiseProduct(cache.outputs[k - 1].unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
  }
  return parts;
}

/// Max relative error |g_a - g_n| / max(1, |g_a|, |g_n|) between analytic
/// gradients and central differences (step 1e-5) over a sample of at least 200
/// parameters (all of them when fewer exist). Dropout is off; centers are
/// computed once from the batch and held fixed.
inline double gradient_check(ProjectionModel model, const TrainingBatch& batch, CenterLossKind kind, double lambda,
                             std::uint64_t sample_seed = 0, std::size_t min_samples = 200,
                             const ClassCenters* fixed_centers = nullptr) {
  model.center_loss_kind = kind;
  ClassCenters centers;
  if (fixed_centers != nullptr) {
    centers = *fixed_centers;
  } else {
    auto hidden = forward_batch(model, batch.inputs).hidden2();
    std::map<std::size_t, std::pair<Vector, std::size_t>> sums;
    for (std::size_t k = 0; k < batch.labels.size(); ++k) {
      if (batch.neutral[k]) continue;
      auto& [sum, count] = sums[batch.labels[k]];
      if (count == 0) sum = Vector::Zero(hidden.rows());
      sum += hidden.col(static_cast<Eigen::Index>(k));
      ++count;
    }
    for (auto& [label, sc] : sums) centers[label] = sc.first / static_cast<double>(sc.second);
  }

  Gradients grads;
  loss_and_gradients(model, batch, centers, lambda, &grads);
  std::vector<double> analytic;
  analytic.reserve(model.parameter_count());
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    analytic.insert(analytic.end(), grads.weights[k].data(), grads.weights[k].data() + grads.weights[k].size());
    analytic.insert(analytic.end(), grads.bias[k].data(), grads.bias[k].data() + grads.bias[k].size());
  }

  std::vector<std::size_t> indices(analytic.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  if (indices.size() > min_samples) {
    Rng rng(sample_seed);
    shuffle(indices, rng);
    indices.resize(min_samples);
  }

  constexpr double h = 1e-5;
  double worst = 0.0;
  for (auto idx : indices) {
    double& p = model.parameter(idx);
    const double saved = p;
    p = saved + h;
    const double up = loss_and_gradients(model, batch, centers, lambda, nullptr).total;
    p = saved - h;
    const double down = loss_and_gradients(model, batch, centers, lambda, nullptr).total;
    p = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[idx];
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

/// Labeled lexicon vectors ready for training. Columns follow sorted word order.
struct TrainingData {
  Matrix inputs;
  std::vector<std::size_t> labels;
  std::vector<std::uint8_t> neutral;
  std::vector<std::string> words;
  std::vector<std::string> class_labels;  // classifier output order, neutral last

  std::size_t size() const { return labels.size(); }
  std::size_t neutral_index() const { return class_labels.size() - 1; }

  TrainingBatch gather(std::span<const std::size_t> columns) const {
    TrainingBatch b;
    b.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
      b.inputs.col(static_cast<Eigen::Index>(j)) = inputs.col(static_cast<Eigen::Index>(columns[j]));
      b.labels.push_back(labels[columns[j]]);
      b.neutral.push_back(neutral[columns[j]]);
    }
    return b;
  }
};

inline TrainingData build_training_data(const KnowledgeBase& kv, const EmbeddingTable& table) {
  TrainingData data;
  data.class_labels = kv.all_labels();
  std::map<std::string, std::size_t, std::less<>> label_index;
  for (std::size_t i = 0; i < data.class_labels.size(); ++i) label_index[data.class_labels[i]] = i;
  data.inputs.resize(static_cast<Eigen::Index>(table.dim()), static_cast<Eigen::Index>(kv.entries.size()));
  Eigen::Index col = 0;
  for (const auto& [word, entry] : kv.entries) {
    auto vec = table.lookup(word);
    if (!vec) throw ConfigError("lexicon word '" + word + "' has no embedding");
    for (std::size_t i = 0; i < vec->size(); ++i) data.inputs(static_cast<Eigen::Index>(i), col) = (*vec)[i];
    const auto label = label_index.at(entry.label);
    data.labels.push_back(label);
    data.neutral.push_back(label == data.neutral_index() ? 1 : 0);
    data.words.push_back(word);
    ++col;
  }
  return data;
}

/// Mean inference-mode second-layer output of each non-neutral class.
inline ClassCenters compute_centers(const ProjectionModel& model, const TrainingData& data) {
  ClassCenters centers;
  const Matrix hidden = project_batch(model, data.inputs);
  std::vector<std::size_t> counts(data.class_labels.size(), 0);
  for (std::size_t q = 0; q + 1 < data.class_labels.size(); ++q) centers[q] = Vector::Zero(hidden.rows());
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (data.neutral[k]) continue;
    centers[data.labels[k]] += hidden.col(static_cast<Eigen::Index>(k));
    ++counts[data.labels[k]];
  }
  for (auto& [q, c] : centers) {
    if (counts[q] == 0) throw ConfigError("class '" + data.class_labels[q] + "' has no lexicon words");
    c /= static_cast<double>(counts[q]);
  }
  return centers;
}

struct TrainConfig {
  double learning_rate = 5e-5;
  double dropout_rate = 0.4;
  double center_loss_weight = 1.0;
  int epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  CenterRefresh center_refresh = CenterRefresh::per_epoch;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
    if (!(center_loss_weight >= 0.0)) throw ConfigError("center_loss_weight must be non-negative");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
  }
};

struct EpochStats {
  int epoch = 0;
  double ce_loss = 0.0;
  double center_loss = 0.0;
  double total = 0.0;
  double train_acc = 0.0;
};

using TrainLog = std::vector<EpochStats>;

inline void write_train_log(const TrainLog& log, std::ostream& out) {
  out << "epoch,ce_loss,center_loss,total,train_acc\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_sig(e.ce_loss, 10) << ',' << format_sig(e.center_loss, 10) << ','
        << format_sig(e.total, 10) << ',' << format_sig(e.train_acc, 6) << '\n';
  }
}

inline std::vector<std::size_t> predict(const ProjectionModel& model, const Matrix& x) {
  const Matrix probs = forward_batch(model, x).probabilities();
  std::vector<std::size_t> out(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    Eigen::Index best = 0;
    probs.col(j).maxCoeff(&best);
    out[static_cast<std::size_t>(j)] = static_cast<std::size_t>(best);
  }
  return out;
}

inline double accuracy(const ProjectionModel& model, const TrainingData& data) {
  if (data.size() == 0) return 0.0;
  auto pred = predict(model, data.inputs);
  std::size_t hit = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) hit += pred[k] == data.labels[k] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// Inference-mode objective on the whole data set, with centers from the
/// current model.
inline LossParts evaluate_objective(const ProjectionModel& model, const TrainingData& data, double lambda) {
  auto centers = compute_centers(model, data);
  TrainingBatch all{data.inputs, data.labels, data.neutral};
  return loss_and_gradients(model, all, centers, lambda, nullptr);
}

namespace detail {

class Optimizer {
 public:
  Optimizer(const ProjectionModel& model, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& l : model.layers) {
      m_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      m_b_.push_back(Vector::Zero(l.bias.size()));
      v_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      v_b_.push_back(Vector::Zero(l.bias.size()));
    }
  }

  void step(ProjectionModel& model, const Gradients& g) {
    ++t_;
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
      update(model.layers[k].weights, g.weights[k], m_w_[k], v_w_[k]);
      update(model.layers[k].bias, g.bias[k], m_b_[k], v_b_[k]);
    }
  }

 private:
  template <typename Param, typename State>
  void update(Param& p, const State& g, State& m, State& v) {
    const double lr = cfg_.learning_rate;
    switch (cfg_.optimizer) {
      case OptimizerKind::sgd:
        p -= lr * g;
        break;
      case OptimizerKind::momentum:
        m = cfg_.momentum * m + g;
        p -= lr * m;
        break;
      case OptimizerKind::adam: {
        const double b1 = cfg_.adam_beta1;
        const double b2 = cfg_.adam_beta2;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        const double eps = cfg_.adam_epsilon;
        p -= lr * (m / c1).binaryExpr(v, [c2, eps](double mi, double vi) { return mi / (std::sqrt(vi / c2) + eps); });
        break;
      }
    }
  }

  TrainConfig cfg_;
  long t_ = 0;
  std::vector<Matrix> m_w_, v_w_;
  std::vector<Vector> m_b_, v_b_;
};

}  // namespace detail

struct TrainResult {
  ProjectionModel model;
  TrainLog log;
};

/// Mini-batch training on total = CE + lambda * center loss. Centers are
/// recomputed in inference mode per epoch or per batch and receive no gradient.
/// Log rows average the batch losses of the epoch; train_acc is measured in
/// inference mode after the epoch.
inline TrainResult train(ProjectionModel model, const TrainingData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw ConfigError("training data is empty");
  if (static_cast<std::size_t>(data.inputs.rows()) != model.input_dim()) {
    throw DimensionError("embedding dimension does not match model input");
  }
  if (data.class_labels.size() != model.num_classes()) {
    throw ConfigError("model has " + std::to_string(model.num_classes()) + " outputs but lexicon has " +
                      std::to_string(data.class_labels.size()) + " classes");
  }
  model.center_loss_weight = cfg.center_loss_weight;
  model.class_labels = data.class_labels;

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  detail::Optimizer opt(model, cfg);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainLog log;
  ClassCenters centers;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.center_refresh == CenterRefresh::per_epoch) centers = compute_centers(model, data);
    shuffle(order, rng);
    double ce_sum = 0.0;
    double center_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (cfg.center_refresh == CenterRefresh::per_batch) centers = compute_centers(model, data);
      auto batch = data.gather(std::span<const std::size_t>(order).subspan(start, end - start));
      Gradients grads;
      auto parts = loss_and_gradients(model, batch, centers, cfg.center_loss_weight, &grads, &rng, cfg.dropout_rate);
      if (!std::isfinite(parts.total)) throw NanLossError(epoch, batches + 1);
      opt.step(model, grads);
      ce_sum += parts.cross_entropy;
      center_sum += parts.center;
      ++batches;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.ce_loss = ce_sum / batches;
    stats.center_loss = center_sum / batches;
    stats.total = stats.ce_loss + cfg.center_loss_weight * stats.center_loss;
    stats.train_acc = accuracy(model, data);
    log.push_back(stats);
  }
  return {std::move(model), std::move(log)};
}

// Model file: optional leading '#' comment lines, then a JSON object. Numbers
// are written with 17 significant digits so they reparse exactly.
inline constexpr int kModelFormatVersion = 1;

inline void write_model(const ProjectionModel& model, std::ostream& out) {
  auto num = [](double v) { return format_sig(v, 17); };
  auto str = [](std::string_view s) { return nlohmann::json(std::string(s)).dump(); };
  out << "{\n";
  out << "  \"format\": \"kvwe-projection\",\n";
  out << "  \"version\": " << kModelFormatVersion << ",\n";
  out << "  \"input_dim\": " << model.input_dim() << ",\n";
  out << "  \"center_loss\": " << str(to_string(model.center_loss_kind)) << ",\n";
  out << "  \"center_loss_weight\": " << num(model.center_loss_weight) << ",\n";
  out << "  \"seed\": " << model.seed << ",\n";
  out << "  \"class_labels\": [";
  for (std::size_t i = 0; i < model.class_labels.size(); ++i) out << (i ? ", " : "") << str(model.class_labels[i]);
  out << "],\n";
  out << "  \"layers\": [\n";
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& l = model.layers[k];
    out << "    {\"in\": " << l.spec.in_dim << ", \"out\": " << l.spec.out_dim
        << ", \"activation\": " << str(to_string(l.spec.activation)) << ",\n";
    out << "     \"weights\": [";
    // Row-major.
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) {
        out << ((i == 0 && j == 0) ? "" : ",") << num(l.weights(i, j));
      }
    }
    out << "],\n     \"bias\": [";
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out << (i ? "," : "") << num(l.bias(i));
    out << "]}" << (k + 1 < model.layers.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
}

inline ProjectionModel read_model(std::istream& in) {
  std::string text;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '#') continue;
    text += line;
    text += '\n';
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "kvwe-projection") throw ConfigError("not a projection model file");
    if (j.at("version").get<int>() != kModelFormatVersion) throw ConfigError("unsupported model file version");
    ProjectionModel model;
    model.center_loss_kind = center_loss_from_string(j.at("center_loss").get<std::string>());
    model.center_loss_weight = j.at("center_loss_weight").get<double>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.class_labels = j.at("class_labels").get<std::vector<std::string>>();
    std::vector<LayerSpec> specs;
    for (const auto& jl : j.at("layers")) {
      LayerSpec s{jl.at("in").get<std::size_t>(), jl.at("out").get<std::size_t>(),
                  activation_from_string(jl.at("activation").get<std::string>())};
      const auto& w = jl.at("weights");
      const auto& b = jl.at("bias");
      if (w.size() != s.in_dim * s.out_dim || b.size() != s.out_dim) throw ConfigError("layer array size mismatch");
      DenseLayer layer{s, Matrix(s.out_dim, s.in_dim), Vector(static_cast<Eigen::Index>(s.out_dim))};
      std::size_t idx = 0;
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = w[idx++].get<double>();
      }
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = b[static_cast<std::size_t>(r)].get<double>();
      specs.push_back(s);
      model.layers.push_back(std::move(layer));
    }
    validate_layer_specs(specs);
    if (j.at("input_dim").get<std::size_t>() != model.input_dim()) throw ConfigError("input_dim mismatch");
    if (!model.class_labels.empty() && model.class_labels.size() != model.num_classes()) {
      throw ConfigError("class label count does not match output layer");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

inline ProjectionModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace kvwe
