#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "sessat/error.hpp"
#include "sessat/explain.hpp"
#include "sessat/rng.hpp"
#include "stubs.hpp"

using namespace sessat;

namespace {

Matrix uniform_train(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) m(r, c) = rng.uniform();
  }
  return m;
}

std::vector<std::string> slot_names(std::size_t d) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < d; ++i) out.push_back("f" + std::to_string(i));
  return out;
}

Explanation with_signals(int label, std::vector<std::tuple<std::string, double, Bin>> signals) {
  Explanation e;
  e.label = label;
  for (auto& [name, weight, bin] : signals) {
    SignalFeature s;
    s.name = name;
    s.weight = weight;
    s.direction = weight >= 0 ? '+' : '-';
    s.bin = bin;
    e.signals.push_back(s);
  }
  return e;
}

}  // namespace

TEST(Perturbations, SingleRowIsX) {
  auto train = uniform_train(50, 3, 1);
  std::vector<double> x{0.1, 0.2, 0.3};
  auto m = sample_perturbations(x, train, 1, 5);
  ASSERT_EQ(m.rows(), 1u);
  EXPECT_EQ(std::vector<double>(m.row(0).begin(), m.row(0).end()), x);
}

TEST(Perturbations, ConstantMarginals) {
  Matrix train(20, 2, 4.0);
  std::vector<double> x{4.0, 4.0};
  auto m = sample_perturbations(x, train, 100, 3);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    EXPECT_EQ(m(r, 0), 4.0);
    EXPECT_EQ(m(r, 1), 4.0);
  }
}

TEST(Perturbations, ResampleFrequency) {
  auto train = uniform_train(500, 4, 2);
  std::vector<double> x{-1.0, -1.0, -1.0, -1.0};  // outside every training column
  auto m = sample_perturbations(x, train, 1000, 9);
  ASSERT_EQ(m.rows(), 1000u);
  for (std::size_t c = 0; c < 4; ++c) {
    std::size_t changed = 0;
    for (std::size_t r = 1; r < m.rows(); ++r) changed += m(r, c) != x[c];
    const double freq = static_cast<double>(changed) / 999.0;
    EXPECT_GE(freq, 0.45);
    EXPECT_LE(freq, 0.55);
  }
}

TEST(Surrogate, RecoversPlantedLinearSignals) {
  const std::size_t d = 10;
  auto train = uniform_train(400, d, 3);
  auto model = std::make_shared<stubs::FnClassifier>(2, [](std::span<const double> x) {
    const double p = 0.6 + 0.2 * (x[2] - 0.5) - 0.15 * (x[5] - 0.5) + 0.1 * (x[7] - 0.5);
    return LabelDistribution{1.0 - p, p};
  });
  std::vector<double> x(d, 0.5);
  SurrogateParams params;
  params.top_k = 3;
  params.seed = 4;
  auto expl = fit_local_surrogate(*model, x, train, fit_standardization(train), slot_names(d), params);
  EXPECT_EQ(expl.label, 1);
  ASSERT_EQ(expl.signals.size(), 3u);
  std::map<std::size_t, char> found;
  for (const auto& s : expl.signals) found[s.slot] = s.direction;
  EXPECT_EQ(found, (std::map<std::size_t, char>{{2, '+'}, {5, '-'}, {7, '+'}}));
  EXPECT_EQ(expl.signals[0].slot, 2u);
  EXPECT_GT(expl.fidelity, 0.99);
  EXPECT_LE(expl.fidelity, 1.0);

  auto again = fit_local_surrogate(*model, x, train, fit_standardization(train), slot_names(d), params);
  ASSERT_EQ(again.signals.size(), expl.signals.size());
  for (std::size_t i = 0; i < expl.signals.size(); ++i) {
    EXPECT_EQ(again.signals[i].slot, expl.signals[i].slot);
    EXPECT_EQ(again.signals[i].weight, expl.signals[i].weight);
  }
  EXPECT_EQ(again.fidelity, expl.fidelity);
}

TEST(Surrogate, ConstantModelIsDegenerate) {
  auto train = uniform_train(100, 4, 5);
  auto model = stubs::constant({0.3, 0.7});
  std::vector<double> x(4, 0.5);
  auto expl = fit_local_surrogate(*model, x, train, fit_standardization(train), slot_names(4));
  EXPECT_TRUE(expl.degenerate);
  EXPECT_TRUE(expl.signals.empty());
  EXPECT_EQ(expl.fidelity, 0.0);
}

TEST(Quantiles, Bins) {
  Matrix train;
  for (int v = 0; v <= 100; ++v) train.append_row(std::vector<double>{double(v)});
  auto q = QuantileTable::fit(train);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(q.cuts[0][k], 20.0 * (k + 1), 1e-9);
  EXPECT_EQ(q.bin(0, 50.0), Bin::Medium);
  EXPECT_EQ(q.bin(0, 10.0), Bin::VeryLow);
  EXPECT_EQ(q.bin(0, q.cuts[0][0]), Bin::VeryLow);
  EXPECT_EQ(q.bin(0, q.cuts[0][2]), Bin::Medium);
  EXPECT_EQ(q.bin(0, 20.5), Bin::Low);
  EXPECT_EQ(q.bin(0, 79.0), Bin::High);
  EXPECT_EQ(q.bin(0, 99.0), Bin::VeryHigh);
  Bin prev = Bin::VeryLow;
  for (double v = 0; v <= 100; v += 0.5) {
    EXPECT_GE(static_cast<int>(q.bin(0, v)), static_cast<int>(prev));
    prev = q.bin(0, v);
  }
}

TEST(Quantiles, RenderMentionsBins) {
  auto e = with_signals(2, {{"S_num_click", 1.0, Bin::VeryLow}, {"Q_MaxClickPos", -0.5, Bin::High}});
  EXPECT_EQ(render_explanation(e), "very low S_num_click, high Q_MaxClickPos");
  EXPECT_EQ(coarsen(Bin::VeryLow), CoarseBin::Low);
  EXPECT_EQ(coarsen(Bin::Medium), CoarseBin::Mid);
  EXPECT_EQ(coarsen(Bin::VeryHigh), CoarseBin::High);
}

TEST(Rules, SingleSignature) {
  std::vector<Explanation> corpus(
      25, with_signals(3, {{"S_num_click", 1.0, Bin::High}, {"S_num_query", -1.0, Bin::Low}}));
  auto rs = abstract_rules(corpus, CategoryTable(), 0.98);
  ASSERT_EQ(rs.rules.size(), 1u);
  EXPECT_EQ(rs.rules[0].support, 25u);
  EXPECT_DOUBLE_EQ(rs.coverage, 1.0);
}

TEST(Rules, CoarseBinsMerge) {
  std::vector<Explanation> corpus{with_signals(1, {{"S_num_click", 1.0, Bin::High}}),
                                  with_signals(1, {{"Q_num_click", 1.0, Bin::VeryHigh}})};
  // S_num_click is an outcome slot, Q_num_click an effort slot.
  auto rs = abstract_rules(corpus, CategoryTable(), 1.0);
  EXPECT_EQ(rs.distinct_signatures, 2u);
  std::vector<Explanation> same{with_signals(1, {{"S_num_click", 1.0, Bin::High}}),
                                with_signals(1, {{"S_num_click_ge185", 2.0, Bin::VeryHigh}})};
  EXPECT_EQ(abstract_rules(same, CategoryTable(), 1.0).distinct_signatures, 1u);
}

TEST(Rules, TwoEqualSignaturesHalfTarget) {
  std::vector<Explanation> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(with_signals(0, {{"S_num_click", -1.0, Bin::Low}}));
  for (int i = 0; i < 10; ++i) corpus.push_back(with_signals(2, {{"S_num_query", 1.0, Bin::High}}));
  auto rs = abstract_rules(corpus, CategoryTable(), 0.5);
  EXPECT_EQ(rs.rules.size(), 1u);
  EXPECT_DOUBLE_EQ(rs.coverage, 0.5);
}

TEST(Rules, CoverageMonotoneInTarget) {
  Rng rng(6);
  const std::vector<std::string> names{"S_num_click", "S_num_query", "S_MaxClickPos",
                                       "Delta_Qlength", "QueryInterval"};
  std::vector<Explanation> corpus;
  for (int i = 0; i < 300; ++i) {
    std::vector<std::tuple<std::string, double, Bin>> sig;
    for (int k = 0; k < 2; ++k) {
      sig.emplace_back(names[rng.index(names.size())], rng.uniform() - 0.5,
                       static_cast<Bin>(rng.index(5)));
    }
    corpus.push_back(with_signals(static_cast<int>(rng.index(4)), sig));
  }
  std::size_t prev_rules = 0;
  double prev_cov = 0.0;
  for (double target : {0.1, 0.5, 0.9, 0.98, 1.0}) {
    auto rs = abstract_rules(corpus, CategoryTable(), target);
    EXPECT_GE(rs.coverage, target - 1e-12);
    EXPECT_GE(rs.coverage, prev_cov);
    EXPECT_GE(rs.rules.size(), prev_rules);
    EXPECT_LE(rs.rules.size(), rs.distinct_signatures);
    for (std::size_t i = 1; i < rs.rules.size(); ++i) {
      EXPECT_GE(rs.rules[i - 1].support, rs.rules[i].support);
    }
    prev_cov = rs.coverage;
    prev_rules = rs.rules.size();
  }
  auto all = abstract_rules(corpus, CategoryTable(), 1.0);
  std::size_t total = 0;
  for (const auto& r : all.rules) total += r.support;
  EXPECT_EQ(total, corpus.size());
  EXPECT_EQ(all.rules.size(), all.distinct_signatures);
}

TEST(Categories, CsvOverride) {
  CategoryTable t;
  EXPECT_EQ(t.at("S_num_click"), FeatureCategory::Outcome);
  std::istringstream in("feature,category\nS_num_click,cost\n");
  t.read_csv(in);
  EXPECT_EQ(t.at("S_num_click"), FeatureCategory::Cost);
  std::istringstream bad("S_num_click,nonsense\n");
  EXPECT_THROW(t.read_csv(bad), Error);
}
