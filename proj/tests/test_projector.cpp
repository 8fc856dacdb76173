#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kvwe/projector.hpp"
#include "oracles/numeric_oracles.hpp"

using namespace kvwe;

namespace {

std::vector<LayerSpec> small_specs(std::size_t d, std::size_t classes, Activation out = Activation::sigmoid) {
  Architecture a;
  a.input_dim = d;
  a.num_classes = classes;
  a.hidden1 = 6;
  a.hidden3 = 5;
  a.hidden4 = 4;
  a.output = out;
  return a.layer_specs();
}

// Loop-based forward pass over plain vectors, independent of Eigen products.
struct NaiveOut {
  oracle::Vec hidden2, output;
};

NaiveOut naive_forward(const ProjectionModel& m, const oracle::Vec& x) {
  oracle::Vec cur = x;
  NaiveOut out;
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& l = m.layers[k];
    oracle::Vec next(l.spec.out_dim);
    for (std::size_t i = 0; i < l.spec.out_dim; ++i) {
      double s = l.bias(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < l.spec.in_dim; ++j) s += l.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * cur[j];
      next[i] = s;
    }
    if (l.spec.activation == Activation::relu) {
      for (auto& v : next) v = v > 0 ? v : 0;
    } else if (l.spec.activation == Activation::sigmoid) {
      for (auto& v : next) v = 1.0 / (1.0 + std::exp(-v));
    } else {
      double mx = *std::max_element(next.begin(), next.end()), z = 0;
      for (auto& v : next) z += std::exp(v - mx);
      for (auto& v : next) v = std::exp(v - mx) / z;
    }
    cur = next;
    if (k == kRepresentationLayer) out.hidden2 = cur;
  }
  out.output = cur;
  return out;
}

TrainingBatch random_batch(std::size_t d, std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = normal(rng);
  }
  std::vector<std::size_t> labels(n);
  for (std::size_t k = 0; k < n; ++k) labels[k] = k % classes;
  return TrainingBatch::make(x, labels, classes - 1);
}

// Two well separated classes plus neutral, in `d` dims.
TrainingData toy_data(std::size_t d, std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  TrainingData data;
  data.class_labels = {"pos", "neg", "neutral"};
  const std::size_t n = per_class * 3;
  data.inputs.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t q = k % 3;
    for (std::size_t i = 0; i < d; ++i) {
      double mean = (i == q) ? 3.0 : 0.0;
      data.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = mean + 0.3 * normal(rng);
    }
    data.labels.push_back(q);
    data.neutral.push_back(q == 2 ? 1 : 0);
    data.words.push_back("w" + std::to_string(k));
  }
  return data;
}

}  // namespace

TEST(Architecture, DefaultShapes) {
  auto specs = Architecture{}.layer_specs();
  ASSERT_EQ(specs.size(), 5u);
  std::vector<std::size_t> dims{768, 512, 768, 512, 300, 3};
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(specs[k].in_dim, dims[k]);
    EXPECT_EQ(specs[k].out_dim, dims[k + 1]);
  }
  EXPECT_EQ(specs[4].activation, Activation::sigmoid);
  auto m = init_model(specs, 1);
  EXPECT_EQ(m.representation_dim(), 768u);
}

TEST(Architecture, RejectsBadSpecs) {
  auto specs = small_specs(4, 3);
  auto broken = specs;
  broken[1].out_dim = 5;
  EXPECT_THROW(validate_layer_specs(broken), ConfigError);
  broken = specs;
  broken[4].activation = Activation::relu;
  EXPECT_THROW(validate_layer_specs(broken), ConfigError);
  broken = specs;
  broken.pop_back();
  EXPECT_THROW(validate_layer_specs(broken), ConfigError);
}

TEST(Forward, ZeroNetwork) {
  auto m = zero_model(small_specs(4, 3));
  Vector x = Vector::Constant(4, 2.5);
  Rng rng(0);
  auto r = forward(m, x, false, rng);
  EXPECT_TRUE(r.hidden2.isZero());
  for (Eigen::Index i = 0; i < r.output.size(); ++i) EXPECT_DOUBLE_EQ(r.output(i), 0.5);
}

TEST(Forward, MatchesLoopOracle) {
  for (auto act : {Activation::sigmoid, Activation::softmax}) {
    auto m = init_model(small_specs(2, 3, act), 5);
    for (auto& l : m.layers) l.bias.setConstant(0.05);
    for (std::vector<double> x : {std::vector<double>{1.0, -2.0}, {0.25, 0.5}, {0.0, 0.0}}) {
      Vector v(2);
      v << x[0], x[1];
      Rng rng(0);
      auto r = forward(m, v, false, rng);
      auto o = naive_forward(m, x);
      for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(r.hidden2(static_cast<Eigen::Index>(i)), o.hidden2[i], 1e-12);
      for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.output(static_cast<Eigen::Index>(i)), o.output[i], 1e-12);
    }
  }
}

TEST(Forward, InferenceIsDeterministicAndTrainModeDrops) {
  auto m = init_model(small_specs(4, 3), 9);
  Vector x = Vector::LinSpaced(4, -1, 1);
  Rng a(1), b(2);
  EXPECT_EQ(forward(m, x, false, a).hidden2, forward(m, x, false, b).hidden2);
  EXPECT_EQ(project(m, x), forward(m, x, false, a).hidden2);
  Rng c(3), d(3);
  EXPECT_EQ(forward(m, x, true, c).output, forward(m, x, true, d).output);
}

TEST(Forward, DimensionMismatch) {
  auto m = init_model(small_specs(4, 3), 9);
  EXPECT_THROW(project(m, Vector::Zero(5)), DimensionError);
}

TEST(Init, SeededAndBounded) {
  auto specs = small_specs(8, 3);
  auto a = init_model(specs, 42), b = init_model(specs, 42), c = init_model(specs, 43);
  EXPECT_EQ(a.layers[0].weights, b.layers[0].weights);
  EXPECT_NE(a.layers[0].weights, c.layers[0].weights);
  for (const auto& l : a.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.spec.in_dim));
    EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), limit);
    EXPECT_TRUE(l.bias.isZero());
  }
}

TEST(CenterLoss, SpecExamples) {
  Matrix h(2, 1);
  h << 1, 0;
  ClassCenters c{{0, (Vector(2) << 0, 1).finished()}};
  std::vector<std::size_t> labels{0};
  std::vector<std::uint8_t> live{0}, neutral{1};
  EXPECT_DOUBLE_EQ(center_loss(h, labels, live, c, CenterLossKind::euclidean), 2.0);
  EXPECT_DOUBLE_EQ(center_loss(h, labels, live, c, CenterLossKind::cosine), 1.0);
  EXPECT_DOUBLE_EQ(center_loss(h, labels, neutral, c, CenterLossKind::euclidean), 0.0);
  EXPECT_DOUBLE_EQ(center_loss(h, labels, neutral, c, CenterLossKind::cosine), 0.0);
}

TEST(CenterLoss, ZeroVectorHasZeroCosineAndGradient) {
  Matrix h = Matrix::Zero(3, 1);
  ClassCenters c{{0, Vector::Ones(3)}};
  std::vector<std::size_t> labels{0};
  std::vector<std::uint8_t> live{0};
  EXPECT_DOUBLE_EQ(center_loss(h, labels, live, c, CenterLossKind::cosine), 1.0);
  EXPECT_TRUE(center_loss_gradient(h, labels, live, c, CenterLossKind::cosine).isZero());
}

TEST(CenterLoss, MatchesOracleOnRandomBatches) {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + uniform_index(rng, 10), n = 1 + uniform_index(rng, 20), classes = 2 + uniform_index(rng, 3);
    Matrix h(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
    std::vector<oracle::Vec> xs(n, oracle::Vec(d));
    std::vector<std::size_t> labels(n);
    std::vector<std::uint8_t> neutral(n);
    std::vector<int> neutral_i(n);
    for (std::size_t k = 0; k < n; ++k) {
      labels[k] = uniform_index(rng, classes);
      neutral[k] = labels[k] == classes - 1;
      neutral_i[k] = neutral[k];
      for (std::size_t i = 0; i < d; ++i) xs[k][i] = h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = normal(rng);
    }
    ClassCenters centers;
    std::vector<oracle::Vec> cs(classes, oracle::Vec(d));
    for (std::size_t q = 0; q < classes; ++q) {
      Vector c(static_cast<Eigen::Index>(d));
      for (std::size_t i = 0; i < d; ++i) cs[q][i] = c(static_cast<Eigen::Index>(i)) = normal(rng);
      centers[q] = c;
    }
    EXPECT_NEAR(center_loss(h, labels, neutral, centers, CenterLossKind::euclidean),
                oracle::center_loss_euclidean(xs, labels, neutral_i, cs), 1e-9);
    EXPECT_NEAR(center_loss(h, labels, neutral, centers, CenterLossKind::cosine),
                oracle::center_loss_cosine(xs, labels, neutral_i, cs), 1e-9);
  }
}

TEST(CenterLoss, NeutralItemsDoNotMatter) {
  auto batch = random_batch(4, 9, 3, 1);
  ClassCenters c{{0, Vector::Ones(4)}, {1, -Vector::Ones(4)}};
  const double before = center_loss(batch.inputs, batch.labels, batch.neutral, c, CenterLossKind::euclidean);
  for (std::size_t k = 0; k < batch.labels.size(); ++k) {
    if (batch.neutral[k]) batch.inputs.col(static_cast<Eigen::Index>(k)).setConstant(1e6);
  }
  EXPECT_DOUBLE_EQ(center_loss(batch.inputs, batch.labels, batch.neutral, c, CenterLossKind::euclidean), before);
}

TEST(CenterLoss, ScalingProperties) {
  auto batch = random_batch(4, 8, 3, 2);
  ClassCenters c{{0, Vector::Ones(4)}, {1, Vector::LinSpaced(4, -1, 2)}};
  ClassCenters c3;
  for (auto& [q, v] : c) c3[q] = 3.0 * v;
  Matrix h3 = 3.0 * batch.inputs;
  EXPECT_NEAR(center_loss(h3, batch.labels, batch.neutral, c3, CenterLossKind::euclidean),
              9.0 * center_loss(batch.inputs, batch.labels, batch.neutral, c, CenterLossKind::euclidean), 1e-9);
  EXPECT_NEAR(center_loss(h3, batch.labels, batch.neutral, c3, CenterLossKind::cosine),
              center_loss(batch.inputs, batch.labels, batch.neutral, c, CenterLossKind::cosine), 1e-12);
}

TEST(CrossEntropy, Examples) {
  std::vector<std::size_t> labels{1};
  Matrix half = Matrix::Constant(3, 1, 0.5);
  EXPECT_NEAR(cross_entropy_loss(half, labels), 3.0 * std::log(2.0), 1e-12);
  Matrix perfect(3, 1);
  perfect << 1e-15, 1 - 1e-15, 1e-15;
  EXPECT_LT(cross_entropy_loss(perfect, labels), 1e-10);
  Matrix wrong(3, 1);
  wrong << 1.0, 0.0, 1.0;
  const double l = cross_entropy_loss(wrong, labels);
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, -std::log(1e-12) - 2.0 * std::log(1.0 - (1.0 - 1e-12)), 1e-9);
}

TEST(CrossEntropy, MatchesOracle) {
  Rng rng(3);
  Matrix p(4, 6);
  std::vector<oracle::Vec> ps(6, oracle::Vec(4));
  std::vector<std::size_t> labels(6);
  for (Eigen::Index j = 0; j < 6; ++j) {
    labels[static_cast<std::size_t>(j)] = static_cast<std::size_t>(j % 4);
    for (Eigen::Index i = 0; i < 4; ++i) ps[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = p(i, j) = uniform01(rng);
  }
  EXPECT_NEAR(cross_entropy_loss(p, labels), oracle::binary_cross_entropy(ps, labels), 1e-12);
}

TEST(GradientCheck, AllLossKindsOverSeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t d = 3 + seed % 5, classes = 2 + seed % 3;
    auto m = init_model(small_specs(d, classes, seed % 4 == 3 ? Activation::softmax : Activation::sigmoid), seed);
    for (auto& l : m.layers) l.bias.setConstant(0.01);
    auto batch = random_batch(d, 7, classes, seed + 100);
    EXPECT_LT(gradient_check(m, batch, CenterLossKind::euclidean, 0.7, seed), 1e-4) << seed;
    EXPECT_LT(gradient_check(m, batch, CenterLossKind::cosine, 0.7, seed), 1e-4) << seed;
    EXPECT_LT(gradient_check(m, batch, CenterLossKind::euclidean, 0.0, seed), 1e-4) << seed;
  }
}

TEST(GradientCheck, DropoutGradientMatchesFixedMask) {
  // With a fixed dropout mask the network is an ordinary function of the
  // parameters, so replaying the same rng state gives a consistent check.
  auto m = init_model(small_specs(5, 3), 4);
  auto batch = random_batch(5, 6, 3, 9);
  ClassCenters centers{{0, Vector::Ones(5)}, {1, Vector::Zero(5)}};
  Gradients g;
  Rng r0(12);
  loss_and_gradients(m, batch, centers, 0.5, &g, &r0, 0.3);
  const double h = 1e-5;
  for (std::size_t idx : {0u, 7u, 19u, 29u}) {
    double& p = m.parameter(idx);
    const double saved = p;
    p = saved + h;
    Rng r1(12);
    const double up = loss_and_gradients(m, batch, centers, 0.5, nullptr, &r1, 0.3).total;
    p = saved - h;
    Rng r2(12);
    const double down = loss_and_gradients(m, batch, centers, 0.5, nullptr, &r2, 0.3).total;
    p = saved;
    // Layer 0 weights are the first block of the flat parameter view.
    const double analytic = g.weights[0].data()[idx];
    EXPECT_NEAR(analytic, (up - down) / (2 * h), 1e-6);
  }
}

TEST(Centers, MeanPerNonNeutralClass) {
  auto specs = small_specs(3, 3);
  auto m = init_model(specs, 1);
  TrainingData data;
  data.class_labels = {"a", "b", "neutral"};
  data.inputs = Matrix::Random(3, 5);
  data.labels = {0, 0, 1, 2, 1};
  data.neutral = {0, 0, 0, 1, 0};
  auto centers = compute_centers(m, data);
  ASSERT_EQ(centers.size(), 2u);
  Matrix h = project_batch(m, data.inputs);
  EXPECT_TRUE(centers.at(0).isApprox((h.col(0) + h.col(1)) / 2.0, 1e-14));
  EXPECT_TRUE(centers.at(1).isApprox((h.col(2) + h.col(4)) / 2.0, 1e-14));

  data.labels = {0, 0, 0, 2, 0};
  EXPECT_THROW(compute_centers(m, data), ConfigError);
}

TEST(Training, ToyProblemConverges) {
  auto data = toy_data(6, 20, 5);
  auto m = init_model(small_specs(6, 3), 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.optimizer = OptimizerKind::adam;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.dropout_rate = 0.1;
  cfg.center_loss_weight = 0.1;
  auto before = evaluate_objective(m, data, cfg.center_loss_weight);
  auto r = train(m, data, cfg);
  EXPECT_EQ(r.log.size(), 60u);
  EXPECT_DOUBLE_EQ(accuracy(r.model, data), 1.0);
  EXPECT_LT(evaluate_objective(r.model, data, cfg.center_loss_weight).total, before.total);
  EXPECT_LT(r.log.back().total, r.log.front().total);
  EXPECT_EQ(r.model.class_labels, data.class_labels);
}

TEST(Training, SameSeedIsBitwiseIdentical) {
  auto data = toy_data(4, 10, 6);
  auto m = init_model(small_specs(4, 3), 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 5;
  cfg.batch_size = 7;
  cfg.seed = 99;
  for (auto opt : {OptimizerKind::sgd, OptimizerKind::momentum, OptimizerKind::adam}) {
    cfg.optimizer = opt;
    auto a = train(m, data, cfg), b = train(m, data, cfg);
    std::ostringstream sa, sb;
    write_model(a.model, sa);
    write_model(b.model, sb);
    EXPECT_EQ(sa.str(), sb.str());
  }
}

TEST(Training, LambdaZeroAndPerBatchRefresh) {
  auto data = toy_data(4, 10, 7);
  auto m = init_model(small_specs(4, 3), 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.optimizer = OptimizerKind::adam;
  cfg.epochs = 40;
  cfg.batch_size = 8;
  cfg.center_loss_weight = 0.0;
  cfg.center_refresh = CenterRefresh::per_batch;
  auto r = train(m, data, cfg);
  EXPECT_DOUBLE_EQ(r.log.back().total, r.log.back().ce_loss);
  EXPECT_GT(accuracy(r.model, data), 0.9);
}

TEST(Training, RejectsMismatchesAndNan) {
  auto data = toy_data(4, 5, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(init_model(small_specs(5, 3), 1), data, cfg), DimensionError);
  EXPECT_THROW(train(init_model(small_specs(4, 4), 1), data, cfg), ConfigError);
  cfg.learning_rate = 0;
  EXPECT_THROW(train(init_model(small_specs(4, 3), 1), data, cfg), ConfigError);

  cfg.learning_rate = 1e300;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.epochs = 5;
  cfg.dropout_rate = 0;
  try {
    train(init_model(small_specs(4, 3), 1), data, cfg);
    FAIL() << "expected NanLossError";
  } catch (const NanLossError& e) {
    EXPECT_GE(e.epoch(), 1);
    EXPECT_GE(e.batch(), 1);
  }
}

TEST(ModelFile, RoundTripIsExact) {
  auto m = init_model(small_specs(4, 3, Activation::softmax), 21, CenterLossKind::cosine);
  m.center_loss_weight = 0.3;
  m.class_labels = {"pos", "neg", "neutral"};
  for (auto& l : m.layers) l.bias.setConstant(1.0 / 3.0);
  std::ostringstream os;
  os << "# kvwe 0.1.0 config=0\n";
  write_model(m, os);
  std::istringstream in(os.str());
  auto back = read_model(in);
  EXPECT_EQ(back.center_loss_kind, CenterLossKind::cosine);
  EXPECT_EQ(back.center_loss_weight, 0.3);
  EXPECT_EQ(back.seed, 21u);
  EXPECT_EQ(back.class_labels, m.class_labels);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(back.layers[k].spec, m.layers[k].spec);
    EXPECT_EQ(back.layers[k].weights, m.layers[k].weights);
    EXPECT_EQ(back.layers[k].bias, m.layers[k].bias);
  }
}

TEST(ModelFile, RejectsGarbage) {
  std::istringstream a("not json");
  EXPECT_THROW(read_model(a), ConfigError);
  std::istringstream b("{\"format\": \"other\"}");
  EXPECT_THROW(read_model(b), ConfigError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), ConfigError);
}

TEST(TrainLog, CsvHeader) {
  std::ostringstream os;
  write_train_log({{1, 0.5, 0.25, 0.75, 1.0}}, os);
  EXPECT_EQ(os.str(), "epoch,ce_loss,center_loss,total,train_acc\n1,0.5,0.25,0.75,1\n");
}
