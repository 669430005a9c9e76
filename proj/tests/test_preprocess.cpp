#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "sessat/error.hpp"
#include "sessat/preprocess.hpp"
#include "sessat/rng.hpp"

using namespace sessat;

namespace {

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

LabeledDataset labeled(const std::vector<int>& y) {
  LabeledDataset d;
  d.y = y;
  d.x = Matrix(y.size(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) {
    d.x(i, 0) = static_cast<double>(i);
    d.goal_ids.push_back("g" + std::to_string(i));
  }
  d.feature_names = {"f"};
  return d;
}

}  // namespace

TEST(Labels, SessionBoundaries) {
  EXPECT_EQ(discretize_session_label(0.0), SessionLabel::Low);
  EXPECT_EQ(discretize_session_label(0.67), SessionLabel::Low);
  EXPECT_EQ(discretize_session_label(0.68), SessionLabel::Medium);
  EXPECT_EQ(discretize_session_label(1.67), SessionLabel::Medium);
  EXPECT_EQ(discretize_session_label(2.0), SessionLabel::High);
  EXPECT_EQ(discretize_session_label(2.67), SessionLabel::High);
  EXPECT_EQ(discretize_session_label(3.0), SessionLabel::VeryHigh);
  EXPECT_EQ(code_of([] { discretize_session_label(3.5); }), "preprocess.OutOfRange");
  EXPECT_EQ(code_of([] { discretize_session_label(-0.1); }), "preprocess.OutOfRange");
}

TEST(Labels, SearchBoundaries) {
  EXPECT_EQ(discretize_search_label(0.0), 0);
  EXPECT_EQ(discretize_search_label(1.0), 1);
  EXPECT_EQ(discretize_search_label(2.0), 2);
  EXPECT_EQ(code_of([] { discretize_search_label(2.1); }), "preprocess.OutOfRange");
}

TEST(Annotations, AveragesAnnotators) {
  std::istringstream in(
      "goal_id,annotator_id,session_score,q1,q2\n"
      "g1,a,2,1,2\n"
      "g1,b,3,2,2\n"
      "g2,a,0,0\n");
  auto ann = read_annotations(in);
  ASSERT_EQ(ann.size(), 2u);
  EXPECT_EQ(ann[0].goal_id, "g1");
  EXPECT_DOUBLE_EQ(ann[0].s, 2.5);
  ASSERT_EQ(ann[0].q.size(), 2u);
  EXPECT_DOUBLE_EQ(ann[0].q[0], 1.5);
  EXPECT_DOUBLE_EQ(ann[0].q[1], 2.0);
  EXPECT_DOUBLE_EQ(ann[1].s, 0.0);

  std::stringstream buf;
  write_annotations(buf, ann);
  auto back = read_annotations(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_DOUBLE_EQ(back[0].s, 2.5);
  EXPECT_EQ(back[0].annotator_ids, ann[0].annotator_ids);
}

TEST(Outliers, PlantedRowFlagged) {
  Rng rng(5);
  Matrix x(101, 4);
  for (std::size_t r = 0; r < 100; ++r) {
    for (std::size_t c = 0; c < 4; ++c) x(r, c) = rng.normal(0.0, 1.0);
  }
  for (std::size_t c = 0; c < 3; ++c) x(100, c) = 50.0;
  IsolationForestParams p;
  p.contamination = 0.01;
  p.seed = 3;
  auto res = detect_outliers(x, p);
  ASSERT_EQ(res.flagged.size(), 1u);
  EXPECT_EQ(res.flagged[0], 100u);
  EXPECT_TRUE(res.flags[100]);
  EXPECT_EQ(*std::max_element(res.scores.begin(), res.scores.end()), res.scores[100]);

  auto again = detect_outliers(x, p);
  EXPECT_EQ(again.flags, res.flags);
  EXPECT_EQ(again.scores, res.scores);
}

TEST(Outliers, IdenticalRowsFlagNothing) {
  Matrix x(50, 3, 1.5);
  IsolationForestParams p;
  p.contamination = 0.1;
  auto res = detect_outliers(x, p);
  EXPECT_TRUE(res.degenerate);
  EXPECT_TRUE(res.flagged.empty());
}

TEST(Impute, MedianFill) {
  FeatureMatrix m{{1.0, 5.0}, {3.0, std::nullopt}, {std::nullopt, 7.0}};
  auto out = impute_missing(m, {"a", "b"});
  EXPECT_EQ(out.x(2, 0), 2.0);
  EXPECT_EQ(out.x(1, 1), 6.0);
  EXPECT_EQ(out.stats.medians, (std::vector<double>{2.0, 6.0}));
  auto again = apply_imputation(m, out.stats);
  EXPECT_EQ(again, out.x);
}

TEST(Impute, NoMissingUnchanged) {
  FeatureMatrix m{{1.0, 2.0}, {3.0, 4.0}};
  auto out = impute_missing(m, {"a", "b"});
  EXPECT_EQ(out.x(0, 0), 1.0);
  EXPECT_EQ(out.x(1, 1), 4.0);
}

TEST(Impute, AllMissingSlot) {
  FeatureMatrix m{{1.0, std::nullopt}, {2.0, std::nullopt}};
  EXPECT_EQ(code_of([&] { impute_missing(m, {"a", "b"}); }), "preprocess.AllMissingSlot");
}

TEST(Standardize, PopulationStats) {
  Matrix x(4, 2);
  for (std::size_t r = 0; r < 4; ++r) {
    x(r, 0) = static_cast<double>(r);
    x(r, 1) = 3.0;
  }
  auto st = fit_standardization(x);
  EXPECT_DOUBLE_EQ(st.mean[0], 1.5);
  EXPECT_DOUBLE_EQ(st.stddev[0], std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(st.stddev[1], 1.0);
}

TEST(Rebalance, OversamplesMinority) {
  std::vector<int> y(40, 0);
  std::fill(y.begin(), y.begin() + 10, 2);
  auto out = rebalance(labeled(y), 2, 9);
  const auto pos = std::count(out.y.begin(), out.y.end(), 2);
  EXPECT_EQ(pos, 30);
  EXPECT_EQ(out.size() - static_cast<std::size_t>(pos), 30u);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(out.goal_ids[i], "g" + std::to_string(i));
}

TEST(Rebalance, BalancedUnchanged) {
  std::vector<int> y{1, 0, 1, 0};
  auto out = rebalance(labeled(y), 1, 1);
  EXPECT_EQ(out.size(), 4u);
}

TEST(Rebalance, SingleClass) {
  std::vector<int> y(5, 0);
  EXPECT_EQ(code_of([&] { rebalance(labeled(y), 3, 1); }), "preprocess.SingleClass");
}

TEST(Split, Stratified) {
  std::vector<int> y;
  for (int i = 0; i < 100; ++i) y.push_back(i % 4);
  auto d = labeled(y);
  auto s = split(d, {}, 17);
  EXPECT_EQ(s.train.size(), 60u);
  EXPECT_EQ(s.valid.size(), 20u);
  EXPECT_EQ(s.test.size(), 20u);
  for (int c = 0; c < 4; ++c) {
    EXPECT_NEAR(static_cast<double>(s.train.label_counts()[c]), 15.0, 1.0);
    EXPECT_NEAR(static_cast<double>(s.valid.label_counts()[c]), 5.0, 1.0);
  }
  std::set<std::string> ids;
  for (auto* part : {&s.train, &s.valid, &s.test}) ids.insert(part->goal_ids.begin(), part->goal_ids.end());
  EXPECT_EQ(ids.size(), 100u);
  const auto order = s.train.x.column(0);
  EXPECT_TRUE(std::is_sorted(order.begin(), order.end()));
}

TEST(Split, AllTrain) {
  auto d = labeled({0, 1, 2, 3, 0, 1});
  auto s = split(d, {1.0, 0.0, 0.0}, 1);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.valid.size(), 0u);
  EXPECT_EQ(s.test.size(), 0u);
}

TEST(Split, RatiosMustSumToOne) {
  auto d = labeled({0, 1, 2, 3});
  EXPECT_EQ(code_of([&] { split(d, {0.6, 0.2, 0.1}, 1); }), "preprocess.InvalidRatios");
}

TEST(Split, Deterministic) {
  std::vector<int> y;
  for (int i = 0; i < 50; ++i) y.push_back(i % 3);
  EXPECT_EQ(split_assignment(y, {}, 4), split_assignment(y, {}, 4));
}
