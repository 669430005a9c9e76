#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "fixtures.hpp"
#include "sessat/error.hpp"
#include "sessat/hybrid.hpp"
#include "sessat/pipeline.hpp"
#include "sessat/rng.hpp"
#include "sessat/synth.hpp"
#include "stubs.hpp"

using namespace sessat;

namespace {

std::vector<std::vector<double>> table(int n, double fill) {
  return std::vector<std::vector<double>>(n, std::vector<double>(n, fill));
}

std::set<std::pair<int, int>> all_pairs(int n) {
  std::set<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) out.insert({i, j});
  }
  return out;
}

// Multi-class layer reading its distribution from the first four inputs.
ClassifierPtr passthrough(int n) {
  return std::make_shared<stubs::FnClassifier>(n, [n](std::span<const double> x) {
    return LabelDistribution(x.begin(), x.begin() + n);
  });
}

HybridModel stub_model(int n, std::vector<std::vector<double>> pair, std::vector<double> w) {
  HybridModel m;
  m.num_classes = n;
  m.multiclass = passthrough(n);
  m.bank = stubs::bank(n, pair);
  m.weights = std::move(w);
  return m;
}

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST(ScoreHybrid, TwoClassHandEvaluation) {
  auto p = table(2, 0.5);
  p[0][1] = 0.7;
  auto m = stub_model(2, p, {1.0, 1.0});
  std::vector<double> x{0.6, 0.4};
  auto s = score_hybrid(m, x);
  EXPECT_NEAR(s[0], 0.6 * 0.7 + 0.4 * 0.7, 1e-12);
  EXPECT_NEAR(s[1], 0.6 * 0.3 + 0.4 * 0.3, 1e-12);
  EXPECT_EQ(predict_hybrid(m, x), 0);
}

TEST(ScoreHybrid, IdentityReducesToMulticlass) {
  auto m = stub_model(4, table(4, 0.5), {1, 1, 1, 1});
  m.pruned = all_pairs(4);
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(4);
    double sum = 0;
    for (double& v : x) sum += v = rng.uniform();
    for (double& v : x) v /= sum;
    EXPECT_EQ(predict_hybrid(m, x), argmax(x));
    auto s = score_hybrid(m, x);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(s[i], x[i], 1e-15);
  }
}

TEST(ScoreHybrid, ScalingWeightsKeepsArgmax) {
  auto p = table(4, 0.5);
  p[0][1] = 0.9;
  p[1][3] = 0.2;
  p[2][3] = 0.65;
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> w{rng.uniform() + 0.01, rng.uniform() + 0.01, rng.uniform() + 0.01,
                          rng.uniform() + 0.01};
    std::vector<double> x{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    auto base = predict_hybrid(stub_model(4, p, w), x);
    for (double k : {0.01, 7.5}) {
      auto scaled = w;
      for (double& v : scaled) v *= k;
      EXPECT_EQ(predict_hybrid(stub_model(4, p, scaled), x), base);
    }
  }
}

TEST(ScoreHybrid, TieAndArgmax) {
  auto m = stub_model(4, table(4, 0.5), {1, 1, 1, 1});
  m.pruned = all_pairs(4);
  EXPECT_EQ(predict_hybrid(m, std::vector<double>{0.1, 0.2, 0.5, 0.2}), 2);
  EXPECT_EQ(predict_hybrid(m, std::vector<double>{0.3, 0.3, 0.2, 0.2}), 0);
}

TEST(ScoreHybrid, AllWeightsZero) {
  auto m = stub_model(4, table(4, 0.5), {0, 0, 0, 0});
  EXPECT_EQ(code_of([&] { score_hybrid(m, std::vector<double>{0.25, 0.25, 0.25, 0.25}); }),
            "hybrid.AllWeightsZero");
}

TEST(FitWeights, PerfectLayerPicksSmallestUniform) {
  auto m = stub_model(4, table(4, 0.5), {1, 1, 1, 1});
  m.pruned = all_pairs(4);
  Matrix x;
  std::vector<int> y;
  for (int r = 0; r < 10; ++r) {
    std::vector<double> row(4, 0.1);
    row[r % 4] = 0.7;
    x.append_row(row);
    y.push_back(r % 4);
  }
  auto fit = fit_weights(m, x, y, 0.1);
  EXPECT_EQ(fit.evaluated, 14640u);
  EXPECT_DOUBLE_EQ(fit.macro_f1, 1.0);
  for (double w : fit.weights) EXPECT_NEAR(w, 0.1, 1e-12);

  auto coarse = fit_weights(m, x, y, 0.5);
  EXPECT_EQ(coarse.evaluated, 80u);
  for (double w : coarse.weights) EXPECT_NEAR(w, 0.5, 1e-12);
}

TEST(FitWeights, NeverWorseThanUniform) {
  Rng rng(7);
  auto p = table(4, 0.5);
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) p[i][j] = rng.uniform();
  }
  auto m = stub_model(4, p, {1, 1, 1, 1});
  Matrix x;
  std::vector<int> y;
  for (int r = 0; r < 60; ++r) {
    std::vector<double> row{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    x.append_row(row);
    y.push_back(r % 4);
  }
  std::vector<int> pred;
  for (std::size_t r = 0; r < x.rows(); ++r) pred.push_back(predict_hybrid(m, x.row(r)));
  auto fit = fit_weights(m, x, y, 0.25);
  EXPECT_GE(fit.macro_f1, macro_f1(y, pred, 4));
}

TEST(FitWeights, Preconditions) {
  auto m = stub_model(4, table(4, 0.5), {1, 1, 1, 1});
  Matrix x(3, 4, 0.25);
  std::vector<int> y{0, 1, 2};
  EXPECT_EQ(code_of([&] { fit_weights(m, x, y, 0.1); }), "hybrid.MissingLabel");
  Matrix x4(4, 4, 0.25);
  std::vector<int> y4{0, 1, 2, 3};
  EXPECT_EQ(code_of([&] { fit_weights(m, x4, y4, 0.3); }), "hybrid.InvalidGridStep");
}

TEST(PrunePaths, Semantics) {
  auto m = stub_model(4, table(4, 0.5), {1, 1, 1, 1});
  std::vector<std::vector<std::size_t>> diag{{5, 0, 0, 0}, {0, 5, 0, 0}, {0, 0, 5, 0}, {0, 0, 0, 5}};
  EXPECT_EQ(prune_paths(m, diag, 0.8).pruned, all_pairs(4));

  auto only12 = diag;
  only12[1][2] = 3;
  only12[2][1] = 2;
  auto kept = prune_paths(m, only12, 0.8);
  EXPECT_EQ(kept.pruned.size(), 5u);
  EXPECT_FALSE(kept.is_pruned(1, 2));
  EXPECT_FALSE(kept.is_pruned(2, 1));

  auto mixed = only12;
  mixed[0][3] = 1;
  mixed[3][2] = 4;
  EXPECT_TRUE(prune_paths(m, mixed, 1.0).pruned.empty());
  // masses: {1,2} 5, {2,3} 4, {0,3} 1 of 10 total; 0.5 keeps {1,2} alone
  auto half = prune_paths(m, mixed, 0.5);
  EXPECT_EQ(half.pruned.size(), 5u);
  EXPECT_FALSE(half.is_pruned(1, 2));
  auto most = prune_paths(m, mixed, 0.85);
  EXPECT_EQ(most.pruned.size(), 4u);
  EXPECT_FALSE(most.is_pruned(2, 3));
}

TEST(PrunePaths, FullKeepIsNoOp) {
  auto p = table(4, 0.5);
  p[0][2] = 0.9;
  p[1][2] = 0.1;
  auto m = stub_model(4, p, {1, 0.5, 1, 0.7});
  std::vector<std::vector<std::size_t>> c{{5, 1, 0, 0}, {2, 5, 1, 0}, {0, 1, 5, 3}, {1, 0, 2, 5}};
  auto pruned = prune_paths(m, c, 1.0);
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    EXPECT_EQ(score_hybrid(pruned, x), score_hybrid(m, x));
  }
}

TEST(SingleQuery, Rules) {
  SingleQueryThresholds th{100.0, 10.0, 10.0};
  auto row = [](double freq, double clicks, double dur) {
    ReducedFeatureVector r;
    for (std::size_t i = 0; i < kNumReducedFeatures; ++i) r[static_cast<ReducedId>(i)] = 0.0;
    r[ReducedId::QueryFrequency] = freq;
    r[ReducedId::S_NumClick] = clicks;
    r[ReducedId::SessionDuration] = dur;
    return r;
  };
  std::vector<ReducedFeatureVector> rows;
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) {
    rows.push_back(row(50.0, 1.0 + i % 2, 30.0 + i));
    labels.push_back(1 + i % 2);
  }
  auto m = train_single_query(rows, labels, 4, th);

  auto hot = m.predict(row(500.0, 0.0, 4.0));
  EXPECT_EQ(hot.label, 3);
  EXPECT_EQ(hot.rule, "R1");
  auto rare = m.predict(row(2.0, 0.0, 3.0));
  EXPECT_EQ(rare.label, 0);
  EXPECT_EQ(rare.rule, "R2");
  auto clicked = m.predict(row(500.0, 2.0, 4.0));
  EXPECT_EQ(clicked.rule, "tree");
  EXPECT_EQ(m.matching_rule(row(50.0, 0.0, 4.0)), -1);
  EXPECT_EQ(m.matching_rule(row(500.0, 0.0, 40.0)), -1);

  auto back = SingleQueryModel::from_json(json::parse(m.to_json().dump()));
  EXPECT_EQ(back.predict(row(50.0, 2.0, 35.0)).label, m.predict(row(50.0, 2.0, 35.0)).label);
}

TEST(SingleQuery, ThresholdsFromTable) {
  QueryStatsTable t;
  for (int i = 1; i <= 100; ++i) t.set("q" + std::to_string(i), {double(i), 0.5});
  auto th = thresholds_from_table(t);
  EXPECT_NEAR(th.hot_frequency, 1 + 0.99 * 99, 1e-9);
  EXPECT_NEAR(th.cold_frequency, 50.5, 1e-9);
  EXPECT_EQ(th.short_duration_s, 10.0);
}

class FinalModelTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SynthConfig cfg;
    cfg.n_sessions = 800;
    cfg.seed = 21;
    data_ = new SynthOutput(synth_generate(cfg));
    std::map<std::string, int> labels;
    for (std::size_t i = 0; i < data_->goal_ids.size(); ++i) labels[data_->goal_ids[i]] = data_->labels[i];
    TrainConfig tc;
    tc.hybrid.multiclass.rounds = 20;
    tc.hybrid.pairwise.gbt.rounds = 10;
    tc.compare_learners = false;
    result_ = new TrainResult(train_final_model(data_->sessions, labels, data_->query_stats, tc));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete data_;
  }
  static SynthOutput* data_;
  static TrainResult* result_;
};

SynthOutput* FinalModelTest::data_ = nullptr;
TrainResult* FinalModelTest::result_ = nullptr;

TEST_F(FinalModelTest, DispatchByQueryCount) {
  using fixtures::make_session;
  const auto& model = result_->model;
  auto one = predict_final(model, make_session({{"apple", {{20, 1}}}}), data_->query_stats);
  EXPECT_EQ(one.tag, "single");
  auto three = predict_final(model, make_session({{"a", {}}, {"b", {{5, 2}}}, {"c", {{90, 1}}}}),
                             data_->query_stats);
  EXPECT_EQ(three.tag, "hybrid");
  EXPECT_GE(three.label, 0);
  EXPECT_LT(three.label, 4);
}

TEST_F(FinalModelTest, ReportsBothTags) {
  auto rows = predict_sessions(result_->model, data_->sessions, data_->query_stats);
  std::map<std::string, int> truth;
  for (std::size_t i = 0; i < data_->goal_ids.size(); ++i) truth[data_->goal_ids[i]] = data_->labels[i];
  auto report = evaluate_predictions(rows, truth);
  EXPECT_TRUE(report.contains("hybrid"));
  EXPECT_TRUE(report.contains("single"));
  EXPECT_TRUE(report.at("total").contains("macro_f1"));
  EXPECT_GE(result_->hybrid_valid_f1, result_->multiclass_valid_f1);
}

TEST_F(FinalModelTest, ArtifactRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "sessat_model_roundtrip.json").string();
  write_final_model(path, result_->model);
  auto back = read_final_model(path);
  std::remove(path.c_str());
  for (std::size_t i = 0; i < data_->sessions.size(); i += 5) {
    auto a = predict_final(result_->model, data_->sessions[i], data_->query_stats);
    auto b = predict_final(back, data_->sessions[i], data_->query_stats);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.tag, b.tag);
    EXPECT_EQ(a.scores, b.scores);
  }
  EXPECT_EQ(code_of([] { read_final_model("/nonexistent/model.json"); }), "model.NotFound");
}
