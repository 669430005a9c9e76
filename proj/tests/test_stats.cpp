#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sessat/error.hpp"
#include "sessat/rng.hpp"
#include "sessat/stats.hpp"

using namespace sessat;

namespace {

// Two-tailed Student-t p-value by Simpson integration of the density.
double t_two_tailed(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) /
                   std::sqrt(df * M_PI);
  auto pdf = [&](double u) { return c * std::pow(1 + u * u / df, -(df + 1) / 2); };
  const int n = 20000;
  const double h = std::abs(t) / n;
  double s = pdf(0) + pdf(std::abs(t));
  for (int i = 1; i < n; ++i) s += pdf(i * h) * (i % 2 ? 4 : 2);
  return 1.0 - 2.0 * s * h / 3.0;
}

LabeledDataset one_feature(const std::vector<double>& f, const std::vector<int>& y) {
  LabeledDataset d;
  d.y = y;
  d.x = Matrix(y.size(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) d.x(i, 0) = f[i];
  d.feature_names = {"f"};
  return d;
}

}  // namespace

TEST(Pearson, Examples) {
  std::vector<double> x{1, 2, 3, 4}, lin{3, 5, 7, 9}, neg{-1, -2, -3, -4}, y{1, 3, 2, 4};
  EXPECT_NEAR(*pearson(x, lin), 1.0, 1e-12);
  EXPECT_NEAR(*pearson(x, neg), -1.0, 1e-12);
  EXPECT_NEAR(*pearson(x, y), 0.8, 1e-12);
}

TEST(Pearson, Undefined) {
  std::vector<double> x{1, 2, 3}, c{5, 5, 5};
  EXPECT_FALSE(pearson(x, c).has_value());
  std::vector<double> two{1, 2};
  EXPECT_FALSE(pearson(two, two).has_value());
}

TEST(Significance, Examples) {
  EXPECT_DOUBLE_EQ(significance(0.0, 30), 1.0);
  EXPECT_NEAR(significance(0.999999, 10), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(significance(1.0, 10), 0.0);
  const double t = 0.5 * std::sqrt(28.0 / 0.75);
  EXPECT_NEAR(t, 3.055, 1e-3);
  EXPECT_NEAR(significance(0.5, 30), t_two_tailed(t, 28), 1e-8);
  EXPECT_NEAR(significance(0.5, 30), 0.00487, 5e-5);
  EXPECT_DOUBLE_EQ(significance(-0.5, 30), significance(0.5, 30));
}

TEST(Significance, MatchesIntegrationOracle) {
  for (double r : {0.1, 0.3, 0.7}) {
    for (std::size_t n : {5u, 12u, 100u}) {
      const double t = r * std::sqrt((n - 2.0) / (1 - r * r));
      EXPECT_NEAR(significance(r, n), t_two_tailed(t, n - 2.0), 1e-8) << r << " " << n;
    }
  }
}

TEST(Correlation, FeatureEqualsLabel) {
  std::vector<int> y;
  std::vector<double> f;
  for (int i = 0; i < 80; ++i) {
    y.push_back(i % 4);
    f.push_back(i % 4);
  }
  auto rep = correlation_report(one_feature(f, y));
  for (int g = 0; g < 4; ++g) {
    const auto& cell = rep.at("f", static_cast<CorrelationGroup>(g));
    ASSERT_TRUE(cell.r.has_value());
    EXPECT_NEAR(*cell.r, 1.0, 1e-12);
  }
}

TEST(Correlation, NoiseMostlyOmitted) {
  Rng rng(2024);
  std::vector<int> y;
  std::vector<double> f;
  for (int i = 0; i < 400; ++i) {
    y.push_back(i % 4);
    f.push_back(rng.normal());
  }
  auto rep = correlation_report(one_feature(f, y), 0.05);
  int omitted = 0;
  for (int g = 0; g < 4; ++g) omitted += !rep.at("f", static_cast<CorrelationGroup>(g)).r;
  EXPECT_GE(omitted, 3);
}

TEST(Correlation, VShape) {
  // |label - 1.5| plus noise: flat overall, falling from L to M and rising from
  // H to VH. The M/H pair has no signal.
  Rng rng(8);
  std::vector<int> y;
  std::vector<double> f;
  for (int i = 0; i < 400; ++i) {
    y.push_back(i % 4);
    f.push_back(std::abs(y.back() - 1.5) + rng.normal(0.0, 0.3));
  }
  auto rep = correlation_report(one_feature(f, y));
  EXPECT_LT(std::abs(rep.at("f", CorrelationGroup::All).raw_r), 0.1);
  const auto& lm = rep.at("f", CorrelationGroup::LowMedium);
  const auto& hv = rep.at("f", CorrelationGroup::HighVeryHigh);
  ASSERT_TRUE(lm.r && hv.r);
  EXPECT_LT(*lm.r, 0.0);
  EXPECT_GT(*hv.r, 0.0);
  EXPECT_EQ(lm.n, 200u);
}

TEST(Correlation, WritersProduceAllFeatures) {
  std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3};
  std::vector<double> f{0, 1, 2, 3, 0, 1, 2, 3};
  auto rep = correlation_report(one_feature(f, y));
  std::ostringstream csv, txt;
  rep.write_csv(csv);
  rep.write_text(txt);
  EXPECT_NE(csv.str().find("f,"), std::string::npos);
  EXPECT_NE(txt.str().find("L/M"), std::string::npos);
  EXPECT_THROW(rep.at("missing", CorrelationGroup::All), Error);
}

TEST(Quantile, Interpolates) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.99), 9.9);
  EXPECT_THROW(quantile({}, 0.5), Error);
}
