#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sessat/error.hpp"
#include "sessat/learners.hpp"
#include "sessat/rng.hpp"

using namespace sessat;

namespace {

struct Data {
  Matrix x;
  std::vector<int> y;
};

// Two Gaussian blobs per class, centers spread on a circle.
Data blobs(std::size_t n, int k, double spread, std::uint64_t seed) {
  Rng rng(seed);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(k));
    const double a = 2 * M_PI * c / k;
    std::vector<double> row{3 * std::cos(a) + rng.normal(0, spread),
                            3 * std::sin(a) + rng.normal(0, spread)};
    d.x.append_row(row);
    d.y.push_back(c);
  }
  return d;
}

double accuracy(const Classifier& m, const Data& d) {
  std::size_t ok = 0;
  for (std::size_t r = 0; r < d.x.rows(); ++r) ok += m.predict(d.x.row(r)) == d.y[r];
  return static_cast<double>(ok) / static_cast<double>(d.y.size());
}

void expect_normalized(const Classifier& m, const Matrix& x) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto p = m.predict_proba(x.row(r));
    ASSERT_EQ(p.size(), static_cast<std::size_t>(m.num_classes()));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (double v : p) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

}  // namespace

TEST(Argmax, TiesGoLow) {
  std::vector<double> v{0.3, 0.3, 0.2, 0.2};
  EXPECT_EQ(argmax(v), 0);
  std::vector<double> w{0.1, 0.2, 0.5, 0.2};
  EXPECT_EQ(argmax(w), 2);
}

TEST(Cart, SingleClassLeaf) {
  Data d = blobs(20, 1, 1.0, 1);
  auto m = train_cart(d.x, d.y, 4);
  ASSERT_EQ(m->nodes().size(), 1u);
  EXPECT_EQ(m->predict_proba(d.x.row(0))[0], 1.0);
}

TEST(Cart, LeafDistributionCounts) {
  Matrix x(3, 1, 0.0);
  std::vector<int> y{2, 2, 3};
  auto m = train_cart(x, y, 4);
  auto p = m->predict_proba(x.row(0));
  EXPECT_DOUBLE_EQ(p[0], 0.0);
  EXPECT_DOUBLE_EQ(p[1], 0.0);
  EXPECT_DOUBLE_EQ(p[2], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p[3], 1.0 / 3.0);
}

TEST(Cart, OneDimensionalSign) {
  Matrix x;
  std::vector<int> y;
  for (int i = -10; i <= 10; ++i) {
    if (i == 0) continue;
    x.append_row(std::vector<double>{static_cast<double>(i)});
    y.push_back(i > 0);
  }
  auto m = train_cart(x, y, 2, {1, 1.0, 0});
  const auto& root = m->nodes()[0];
  ASSERT_FALSE(root.is_leaf());
  EXPECT_GE(root.threshold, -1.0);
  EXPECT_LT(root.threshold, 1.0);
  EXPECT_EQ(accuracy(*m, {x, y}), 1.0);
  EXPECT_LE(m->depth(), 1);
}

TEST(Cart, Xor) {
  Matrix x;
  std::vector<int> y;
  const int counts[4] = {30, 20, 10, 25};
  for (int cell = 0; cell < 4; ++cell) {
    for (int i = 0; i < counts[cell]; ++i) {
      x.append_row(std::vector<double>{double(cell & 1), double(cell >> 1)});
      y.push_back((cell & 1) ^ (cell >> 1));
    }
  }
  auto m = train_cart(x, y, 2, {2, 1.0, 0});
  EXPECT_EQ(accuracy(*m, {x, y}), 1.0);
  EXPECT_LE(m->depth(), 2);
}

TEST(Cart, EmptyData) {
  Matrix x;
  std::vector<int> y;
  EXPECT_THROW(train_cart(x, y, 2), Error);
}

TEST(Forest, SingleTreeWithoutRandomnessEqualsCart) {
  Data d = blobs(120, 4, 1.2, 3);
  ForestParams fp;
  fp.n_trees = 1;
  fp.bootstrap = false;
  fp.max_features = 0;
  fp.max_depth = 5;
  auto forest = train_forest(d.x, d.y, 4, fp);
  auto cart = train_cart(d.x, d.y, 4, {5, 1.0, 0});
  EXPECT_EQ(nodes_to_json(forest->trees()[0]->nodes()), nodes_to_json(cart->nodes()));
  for (std::size_t r = 0; r < d.x.rows(); ++r) {
    EXPECT_EQ(forest->predict_proba(d.x.row(r)), cart->predict_proba(d.x.row(r)));
  }
}

TEST(Forest, SingleClass) {
  Data d = blobs(30, 1, 1.0, 2);
  auto m = train_forest(d.x, d.y, 3, {10, 4, 1.0, -1, true, 1});
  EXPECT_DOUBLE_EQ(m->predict_proba(d.x.row(3))[0], 1.0);
}

TEST(Forest, SeparableBlobsHeldOut) {
  Data train = blobs(200, 2, 0.5, 10), test = blobs(200, 2, 0.5, 11);
  ForestParams fp;
  fp.n_trees = 50;
  fp.seed = 4;
  auto m = train_forest(train.x, train.y, 2, fp);
  EXPECT_GE(accuracy(*m, test), 0.95);
  expect_normalized(*m, test.x);
}

TEST(Gbt, ZeroRoundsGivesPrior) {
  const std::vector<std::size_t> counts{182, 182, 413, 223};
  Matrix x;
  std::vector<int> y;
  for (int c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      x.append_row(std::vector<double>{double(i)});
      y.push_back(c);
    }
  }
  GbtParams p;
  p.rounds = 0;
  auto m = train_gbt(x, y, 4, p);
  for (double v : {-5.0, 0.0, 300.0}) {
    auto prob = m->predict_proba(std::vector<double>{v});
    EXPECT_NEAR(prob[0], 0.182, 1e-12);
    EXPECT_NEAR(prob[1], 0.182, 1e-12);
    EXPECT_NEAR(prob[2], 0.413, 1e-12);
    EXPECT_NEAR(prob[3], 0.223, 1e-12);
  }
}

TEST(Gbt, SingleClassConvergesMonotonically) {
  Data d = blobs(40, 1, 1.0, 6);
  double prev = 0.0;
  for (int rounds = 0; rounds <= 8; ++rounds) {
    GbtParams p;
    p.rounds = rounds;
    p.learning_rate = 0.3;
    auto m = train_gbt(d.x, d.y, 2, p);
    const double p0 = m->predict_proba(d.x.row(0))[0];
    EXPECT_GE(p0, prev);
    prev = p0;
  }
  EXPECT_GT(prev, 0.999);
}

TEST(Gbt, LossDecreasesOnThresholdData) {
  Matrix x;
  std::vector<int> y;
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.between(-1.0, 1.0);
    x.append_row(std::vector<double>{v});
    y.push_back(v > 0.1);
  }
  GbtParams p;
  p.rounds = 10;
  p.learning_rate = 0.3;
  auto m = train_gbt(x, y, 2, p);
  const auto& loss = m->training_loss();
  ASSERT_EQ(loss.size(), 11u);
  for (std::size_t i = 1; i < loss.size(); ++i) EXPECT_LT(loss[i], loss[i - 1]);
}

TEST(Gbt, Deterministic) {
  Data d = blobs(150, 4, 1.5, 8);
  GbtParams p;
  p.rounds = 15;
  auto a = train_gbt(d.x, d.y, 4, p);
  auto b = train_gbt(d.x, d.y, 4, p);
  EXPECT_EQ(classifier_to_json(*a).dump(), classifier_to_json(*b).dump());
  expect_normalized(*a, d.x);
}

TEST(LogReg, ZeroEpochsUniform) {
  Data d = blobs(40, 4, 1.0, 1);
  LogRegParams p;
  p.epochs = 0;
  auto m = train_logreg(d.x, d.y, 4, p);
  for (double v : m->predict_proba(d.x.row(5))) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(LogReg, SeparableReachesFullAccuracy) {
  Data d = blobs(100, 2, 0.3, 4);
  LogRegParams p;
  p.epochs = 500;
  auto m = train_logreg(d.x, d.y, 2, p);
  EXPECT_EQ(accuracy(*m, d), 1.0);
  expect_normalized(*m, d.x);
}

TEST(LogReg, GradientMatchesFiniteDifferences) {
  Data d = blobs(30, 3, 1.0, 21);
  Rng rng(3);
  Matrix w(3, 2);
  std::vector<double> b(3);
  for (std::size_t c = 0; c < 3; ++c) {
    b[c] = rng.normal();
    for (std::size_t j = 0; j < 2; ++j) w(c, j) = rng.normal();
  }
  Matrix gw;
  std::vector<double> gb;
  logreg_objective(w, b, d.x, d.y, 0.1, &gw, &gb);
  const double h = 1e-5;
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max(1.0, std::abs(n)); };
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < 2; ++j) {
      Matrix up = w, dn = w;
      up(c, j) += h;
      dn(c, j) -= h;
      const double num = (logreg_objective(up, b, d.x, d.y, 0.1, nullptr, nullptr) -
                          logreg_objective(dn, b, d.x, d.y, 0.1, nullptr, nullptr)) /
                         (2 * h);
      EXPECT_LE(rel(gw(c, j), num), 1e-5);
    }
    auto bu = b, bd = b;
    bu[c] += h;
    bd[c] -= h;
    const double num = (logreg_objective(w, bu, d.x, d.y, 0.1, nullptr, nullptr) -
                        logreg_objective(w, bd, d.x, d.y, 0.1, nullptr, nullptr)) /
                       (2 * h);
    EXPECT_LE(rel(gb[c], num), 1e-5);
  }
}

TEST(LinSvm, SeparableZeroHinge) {
  Data d = blobs(100, 2, 0.2, 5);
  SvmParams p;
  p.c = 100.0;
  p.epochs = 800;
  auto m = train_linsvm(d.x, d.y, p);
  EXPECT_EQ(accuracy(*m, d), 1.0);
  EXPECT_LT(hinge_loss(*m, d.x, d.y), 0.01);
}

TEST(LinSvm, CalibrationIdentity) {
  Sigmoid s{-2.0, 0.7};
  EXPECT_DOUBLE_EQ(s(0.0), 1.0 / (1.0 + std::exp(0.7)));
}

TEST(LinSvm, FlippedLabelsNegateBoundary) {
  Data d = blobs(80, 2, 0.8, 9);
  std::vector<int> flipped;
  for (int v : d.y) flipped.push_back(1 - v);
  auto a = train_linsvm(d.x, d.y);
  auto b = train_linsvm(d.x, flipped);
  for (std::size_t r = 0; r < d.x.rows(); ++r) {
    EXPECT_NEAR(a->margins(d.x.row(r))[0], -b->margins(d.x.row(r))[0], 1e-9);
  }
}

TEST(LinSvm, OneVsRestNormalized) {
  Data d = blobs(160, 4, 0.8, 14);
  auto m = train_linsvm_ovr(d.x, d.y, 4);
  expect_normalized(*m, d.x);
  EXPECT_GE(accuracy(*m, d), 0.9);
}

TEST(Persistence, RoundTripAllKinds) {
  Data d = blobs(120, 4, 1.0, 30);
  LearnerSpec spec;
  spec.forest.n_trees = 5;
  spec.gbt.rounds = 5;
  spec.logreg.epochs = 20;
  spec.svm.epochs = 20;
  for (auto kind : {LearnerKind::Cart, LearnerKind::Forest, LearnerKind::Gbt, LearnerKind::LogReg,
                    LearnerKind::LinSvm}) {
    spec.kind = kind;
    auto m = train_learner(spec, d.x, d.y, 4);
    auto j = classifier_to_json(*m);
    auto back = classifier_from_json(json::parse(j.dump()));
    EXPECT_EQ(back->kind(), std::string(to_string(kind)));
    for (std::size_t r = 0; r < d.x.rows(); r += 7) {
      EXPECT_EQ(back->predict_proba(d.x.row(r)), m->predict_proba(d.x.row(r)));
    }
    EXPECT_EQ(parse_learner_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_learner_kind("perceptron"), Error);
}

TEST(Persistence, EnvelopeVersioning) {
  ModelEnvelope env;
  env.model_kind = "cart";
  env.class_list = {0, 1, 2, 3};
  env.feature_schema = {"a"};
  env.parameters = json::object();
  env.structure = json::object();
  auto j = envelope_to_json(env);
  EXPECT_EQ(j.at("format_version"), kModelFormatVersion);
  EXPECT_EQ(envelope_from_json(j).class_list, env.class_list);

  auto newer = j;
  newer["format_version"] = kModelFormatVersion + 1;
  try {
    envelope_from_json(newer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "model.UnsupportedVersion");
  }
  auto broken = j;
  broken.erase("class_list");
  try {
    envelope_from_json(broken);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "model.Malformed");
  }
}
