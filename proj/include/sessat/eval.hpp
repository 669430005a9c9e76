#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sessat/features.hpp"
#include "sessat/hybrid.hpp"
#include "sessat/metrics.hpp"
#include "sessat/session.hpp"

namespace sessat {

// ---------------------------------------------------------------------------
// Page-level metrics, averaged over the queries of one session

struct PageMetrics {
  double has_click_ratio = 0.0;   // queries with >= 1 click / queries
  double click_ratio = 0.0;       // clicks / queries
  double long_click_ratio = 0.0;  // clicks with dwell >= long threshold / max(1, clicks)
};

PageMetrics page_metrics(const Session& session, double long_click_s = 60.0);

enum class PageMetric { HasClick, Click, LongClick };

inline constexpr std::array<PageMetric, 3> kPageMetrics{PageMetric::HasClick, PageMetric::Click,
                                                        PageMetric::LongClick};

const char* to_string(PageMetric m);  // "has_click_ratio", ...
PageMetric parse_page_metric(std::string_view name);
double metric_value(const PageMetrics& m, PageMetric which);

// ---------------------------------------------------------------------------
// A/B comparison

// Per-session values compared between groups, in report order.
inline constexpr std::array<const char*, 4> kAbMetrics{"model_score", "has_click_ratio",
                                                       "click_ratio", "long_click_ratio"};
using AbRow = std::array<double, 4>;

struct AbInterval {
  double lo = 0.0;
  double hi = 0.0;
};

struct AbReport {
  std::size_t control_size = 0;
  std::size_t treatment_size = 0;
  AbRow control_mean{};
  AbRow treatment_mean{};
  AbRow delta{};  // treatment - control; positive favors the treatment
  std::array<AbInterval, 4> ci95{};
  std::size_t bootstrap_n = 0;

  nlohmann::ordered_json to_json() const;
};

// Percentile bootstrap of the difference of means, resampling each group
// independently. Throws eval.EmptyGroup.
AbReport ab_compare_rows(const std::vector<AbRow>& control, const std::vector<AbRow>& treatment,
                         std::size_t bootstrap_n = 1000, std::uint64_t seed = 0);

// model_score is the predicted satisfaction label (0..3) of each session.
AbRow ab_row(const FinalModel& model, const Session& session, const QueryStatsTable& stats);

AbReport ab_compare(const std::vector<Session>& control, const std::vector<Session>& treatment,
                    const FinalModel& model, const QueryStatsTable& stats,
                    std::size_t bootstrap_n = 1000, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Good/Same/Bad judging against ground truth

// Maps a page metric onto the satisfaction scale: cut points sit at the
// training quantiles matching the cumulative label proportions, so a value at
// or below cuts[k] maps to label k.
struct PageLabelMap {
  std::vector<double> cuts;  // num_classes - 1 ascending cut points

  static PageLabelMap fit(std::span<const double> train_values, std::span<const int> train_labels,
                          int num_classes);
  int label(double value) const;
};

enum class Verdict { Good, Same, Bad };
const char* to_string(Verdict v);

// Good if the model is strictly closer to the truth than the page label, Bad
// if strictly farther, Same otherwise.
Verdict judge(int truth, int model_label, int page_label);

struct GsbTally {
  std::string metric;
  std::size_t good = 0;
  std::size_t same = 0;
  std::size_t bad = 0;
  std::size_t total() const { return good + same + bad; }
};

// Uniform sample (without replacement) of min(sample_size, n) rows.
std::vector<std::size_t> gsb_sample(std::size_t n, std::size_t sample_size, std::uint64_t seed);

GsbTally gsb_judge(std::span<const int> truth, std::span<const int> model_labels,
                   std::span<const int> page_labels, std::span<const std::size_t> sample,
                   const std::string& metric_name);

void write_gsb_csv(std::ostream& out, const std::vector<GsbTally>& tallies);

}  // namespace sessat
