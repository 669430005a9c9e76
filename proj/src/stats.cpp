#include "sessat/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include <boost/math/distributions/students_t.hpp>

#include "sessat/error.hpp"
#include "sessat/text_format.hpp"

namespace sessat {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("stats.LengthMismatch", "pearson inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double significance(double r, std::size_t n) {
  if (n < 3) throw Error("stats.TooFewSamples", "significance needs n >= 3");
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

const CorrelationCell& CorrelationReport::at(const std::string& feature, CorrelationGroup g) const {
  const auto it = std::find(features.begin(), features.end(), feature);
  if (it == features.end()) throw Error("stats.UnknownFeature", feature);
  return cells[static_cast<std::size_t>(it - features.begin())][static_cast<std::size_t>(g)];
}

CorrelationReport correlation_report(const LabeledDataset& data, double alpha) {
  CorrelationReport report;
  report.alpha = alpha;
  report.features = data.feature_names;

  // Row subsets: all rows, then each adjacent pair (lo, lo+1) coded {0, 1}.
  std::array<std::vector<std::size_t>, 4> rows;
  std::array<std::vector<double>, 4> labels;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.y[i];
    rows[0].push_back(i);
    labels[0].push_back(y);
    for (int lo = 0; lo < 3; ++lo) {
      if (y == lo || y == lo + 1) {
        rows[static_cast<std::size_t>(lo + 1)].push_back(i);
        labels[static_cast<std::size_t>(lo + 1)].push_back(y == lo ? 0.0 : 1.0);
      }
    }
  }

  for (std::size_t f = 0; f < data.x.cols(); ++f) {
    std::array<CorrelationCell, 4> row_cells;
    for (std::size_t g = 0; g < 4; ++g) {
      std::vector<double> xs;
      xs.reserve(rows[g].size());
      for (std::size_t i : rows[g]) xs.push_back(data.x(i, f));
      CorrelationCell& cell = row_cells[g];
      cell.n = xs.size();
      const auto r = pearson(xs, labels[g]);
      if (!r) continue;
      cell.raw_r = *r;
      cell.p = significance(*r, cell.n);
      if (cell.p < alpha) cell.r = *r;
    }
    report.cells.push_back(row_cells);
  }
  return report;
}

void CorrelationReport::write_csv(std::ostream& out) const {
  out << "feature";
  for (const char* g : kGroupNames) out << ',' << g;
  for (const char* g : kGroupNames) out << ",p_" << g;
  for (const char* g : kGroupNames) out << ",n_" << g;
  out << '\n';
  for (std::size_t f = 0; f < features.size(); ++f) {
    out << features[f];
    for (const auto& c : cells[f]) out << ',' << (c.r ? format_fixed(*c.r, 3) : "-");
    for (const auto& c : cells[f]) out << ',' << format_double(c.p);
    for (const auto& c : cells[f]) out << ',' << c.n;
    out << '\n';
  }
}

void CorrelationReport::write_text(std::ostream& out) const {
  std::size_t width = std::string("Features").size();
  for (const auto& f : features) width = std::max(width, f.size());
  out << std::left << std::setw(static_cast<int>(width)) << "Features";
  for (const char* g : kGroupNames) out << std::right << std::setw(9) << g;
  out << '\n';
  for (std::size_t f = 0; f < features.size(); ++f) {
    out << std::left << std::setw(static_cast<int>(width)) << features[f];
    for (const auto& c : cells[f]) {
      out << std::right << std::setw(9) << (c.r ? format_fixed(*c.r, 3) : "-");
    }
    out << '\n';
  }
  out << "Non-significant values (p >= " << format_double(alpha) << ") are shown as \"-\".\n";
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("stats.Empty", "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace sessat
