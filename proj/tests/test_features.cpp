#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "feature_oracle.hpp"
#include "fixtures.hpp"
#include "sessat/error.hpp"
#include "sessat/features.hpp"
#include "sessat/synth.hpp"

using namespace sessat;
using fixtures::make_session;

TEST(EditDistance, Basics) {
  EXPECT_EQ(edit_distance("apple", "apple"), 0);
  EXPECT_EQ(edit_distance("abc", ""), 3);
  EXPECT_EQ(edit_distance("", "abc"), 3);
  EXPECT_EQ(edit_distance("kitten", "sitting"), 3);
}

TEST(EditDistance, MatchesTableOracle) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"apple id", "apple id registration tutorial"},
      {"apple id registration tutorial", "apple id"},
      {"iphone price", "iphone 14 price"},
      {"\xe8\x8b\xb9\xe6\x9e\x9c", "\xe8\x8b\xb9\xe6\x9e\x9c\xe6\x89\x8b\xe6\x9c\xba"},
      {"flaw", "lawn"},
  };
  for (const auto& [a, b] : cases) {
    EXPECT_EQ(edit_distance(a, b), oracle::levenshtein(a, b)) << a << " / " << b;
  }
  EXPECT_EQ(edit_distance("apple id", "apple id registration tutorial"), 22);
}

TEST(EditDistance, CountsCodePoints) {
  // two CJK characters vs one: a single deletion.
  EXPECT_EQ(edit_distance("\xe8\x8b\xb9\xe6\x9e\x9c", "\xe8\x8b\xb9"), 1);
}

TEST(Jaccard, CharacterTokens) {
  EXPECT_DOUBLE_EQ(jaccard_sim("apple", "apple"), 1.0);
  EXPECT_DOUBLE_EQ(jaccard_sim("ab", "cd"), 0.0);
  EXPECT_DOUBLE_EQ(jaccard_sim("ab", "bc"), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(jaccard_sim("", ""), 1.0);
  EXPECT_DOUBLE_EQ(jaccard_sim("a b", "ab"), 1.0);
}

TEST(Jaccard, WhitespaceTokens) {
  EXPECT_DOUBLE_EQ(jaccard_sim("apple id", "apple phone", JaccardTokens::Whitespace), 1.0 / 3.0);
}

TEST(Features, TwoQueryExample) {
  auto s = make_session({{"apple", {{70, 1}}}, {"apple id", {{10, 3}}}});
  auto f = extract_features(s);
  EXPECT_EQ(f[FeatureId::S_NumClick], 2.0);
  EXPECT_EQ(f[FeatureId::Q_NumClickGe60], 0.5);
  EXPECT_EQ(f[FeatureId::S_MaxClickPos], 3.0);
  EXPECT_EQ(f[FeatureId::Delta_Q_NumClickGe60], -1.0);
  EXPECT_EQ(f[FeatureId::S_SumClickDwell], 80.0);
  EXPECT_EQ(f[FeatureId::S_ClickDwell], 40.0);
}

TEST(Features, ZeroClicks) {
  auto s = make_session({{"a", {}}, {"b", {}}});
  auto f = extract_features(s);
  EXPECT_EQ(f[FeatureId::S_NumClick], 0.0);
  EXPECT_EQ(f[FeatureId::S_NumQueryNoClick], 2.0);
  for (auto id : {FeatureId::S_AvgClickPos, FeatureId::S_MinClickPos, FeatureId::Q_MinClickPos,
                  FeatureId::Q_AvgClickPos, FeatureId::S_MaxClickPos, FeatureId::Q_MaxClickPos,
                  FeatureId::Delta_QMaxClickPos}) {
    EXPECT_FALSE(f[id].has_value()) << feature_name(id);
  }
}

TEST(Features, IdenticalQueries) {
  auto s = make_session({{"apple", {}}, {"apple", {}}, {"apple", {}}});
  auto f = extract_features(s);
  EXPECT_EQ(f[FeatureId::QEditDistance], 0.0);
  EXPECT_EQ(f[FeatureId::QJaccardSim], 1.0);
  EXPECT_EQ(f[FeatureId::Delta_QEditDistance], 0.0);
}

TEST(Features, SingleQueryRejected) {
  auto s = make_session({{"a", {}}});
  try {
    extract_features(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "features.SingleQuerySession");
  }
}

TEST(Features, CatalogNames) {
  const auto& names = feature_names();
  ASSERT_EQ(names.size(), kNumFeatures);
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), kNumFeatures);
  EXPECT_EQ(names.front(), "Q_SumClickDwell");
  EXPECT_EQ(feature_by_name("Q_num_click_ge60"), FeatureId::Q_NumClickGe60);
  EXPECT_FALSE(feature_by_name("nope").has_value());
  EXPECT_EQ(feature_category(FeatureId::S_NumQuery), FeatureCategory::Cost);
  EXPECT_EQ(feature_category(FeatureId::Delta_Qlength), FeatureCategory::Change);
}

TEST(Features, InvariantsOnGeneratedSessions) {
  SynthConfig cfg;
  cfg.n_sessions = 300;
  cfg.single_query_fraction = 0.0;
  cfg.seed = 11;
  auto out = synth_generate(cfg);
  for (const auto& s : out.sessions) {
    auto f = extract_features(s);
    auto v = [&](FeatureId id) { return *f[id]; };
    EXPECT_LE(v(FeatureId::Q_NumClickGe60), v(FeatureId::Q_NumClickGe40));
    EXPECT_LE(v(FeatureId::Q_NumClickLt5), v(FeatureId::Q_NumClickLt20));
    EXPECT_EQ(v(FeatureId::S_NumInpQuery) + v(FeatureId::S_NumHisQuery) +
                  v(FeatureId::S_NumSugQuery) + v(FeatureId::S_NumRSQuery),
              v(FeatureId::S_NumQuery));
    if (v(FeatureId::S_NumClick) > 0) {
      EXPECT_LE(v(FeatureId::S_MinClickPos), v(FeatureId::S_AvgClickPos));
      EXPECT_LE(v(FeatureId::S_AvgClickPos), v(FeatureId::S_MaxClickPos));
      EXPECT_NEAR(v(FeatureId::S_ClickDwell) * v(FeatureId::S_NumClick),
                  v(FeatureId::S_SumClickDwell), 1e-9);
    }
  }
}

TEST(Features, ThresholdsAreConfigurable) {
  auto s = make_session({{"a", {{50, 1}}}, {"b", {{30, 1}}}});
  FeatureConfig cfg;
  cfg.dwell.long60 = 45.0;
  EXPECT_EQ(*extract_features(s)[FeatureId::Q_NumClickGe60], 0.0);
  EXPECT_EQ(*extract_features(s, cfg)[FeatureId::Q_NumClickGe60], 0.5);
}

TEST(SingleQueryFeatures, LongClick) {
  auto s = make_session({{"a", {{120, 1}}}});
  auto r = extract_single_query_features(s, {});
  EXPECT_EQ(r[ReducedId::Q_NumClickGe60], 1.0);
  EXPECT_EQ(r[ReducedId::S_NumClickGe185], 0.0);
  EXPECT_EQ(r[ReducedId::S_NumQueryNoClick], 0.0);
}

TEST(SingleQueryFeatures, StatsLookup) {
  auto s = make_session({{"rare query", {}}});
  auto absent = extract_single_query_features(s, {});
  EXPECT_EQ(absent[ReducedId::QueryFrequency], 0.0);
  EXPECT_EQ(absent[ReducedId::QueryClickRatio], 0.0);
  EXPECT_EQ(absent[ReducedId::S_NumQueryNoClick], 1.0);

  QueryStatsTable table;
  table.set("rare query", {1e6, 0.2});
  auto present = extract_single_query_features(s, table);
  EXPECT_EQ(present[ReducedId::QueryFrequency], 1e6);
  EXPECT_EQ(present[ReducedId::QueryClickRatio], 0.2);
}

TEST(SingleQueryFeatures, MultiQueryRejected) {
  auto s = make_session({{"a", {}}, {"b", {}}});
  try {
    extract_single_query_features(s, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "features.MultiQuerySession");
  }
}

TEST(QueryStats, TsvRoundTrip) {
  QueryStatsTable t;
  t.set("apple", {120.0, 0.5});
  t.set("pear tart", {3.0, 0.0});
  std::stringstream buf;
  t.write_tsv(buf);
  auto back = QueryStatsTable::read_tsv(buf);
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back.find("pear tart")->frequency, 3.0);
  EXPECT_EQ(back.find("apple")->click_ratio, 0.5);
}
