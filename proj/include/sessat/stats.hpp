#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sessat/preprocess.hpp"

namespace sessat {

// Sample Pearson coefficient; std::nullopt when either side has zero variance
// or fewer than 3 points are given.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// Two-tailed p-value of r under H0: rho = 0, using t = r sqrt((n-2)/(1-r^2))
// with n-2 degrees of freedom. |r| = 1 gives 0.
double significance(double r, std::size_t n);

enum class CorrelationGroup { All = 0, LowMedium = 1, MediumHigh = 2, HighVeryHigh = 3 };
inline constexpr std::array<const char*, 4> kGroupNames{"All", "L/M", "M/H", "H/VH"};

struct CorrelationCell {
  std::optional<double> r;  // empty when omitted (not significant or undefined)
  double raw_r = 0.0;       // coefficient before gating (0 when undefined)
  double p = 1.0;
  std::size_t n = 0;
};

struct CorrelationReport {
  std::vector<std::string> features;
  std::vector<std::array<CorrelationCell, 4>> cells;  // [feature][group]
  double alpha = 0.05;

  const CorrelationCell& at(const std::string& feature, CorrelationGroup g) const;

  void write_csv(std::ostream& out) const;
  // Aligned text table, "-" for omitted cells.
  void write_text(std::ostream& out) const;
};

// r of each feature against the label over all rows, and against the {0,1}
// coded label within each adjacent-level pair; cells with p >= alpha omitted.
CorrelationReport correlation_report(const LabeledDataset& data, double alpha = 0.05);

// q-quantile of `values` (q in [0, 1]) interpolating linearly between order
// statistics at position q * (n - 1). Throws stats.Empty on empty input.
double quantile(std::vector<double> values, double q);

}  // namespace sessat
