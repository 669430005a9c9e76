#include "sessat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "sessat/error.hpp"
#include "sessat/rng.hpp"
#include "sessat/stats.hpp"

namespace sessat {

PageMetrics page_metrics(const Session& session, double long_click_s) {
  PageMetrics m;
  if (session.queries.empty()) return m;
  std::size_t with_click = 0, clicks = 0, long_clicks = 0;
  const auto threshold_ms = static_cast<std::int64_t>(std::llround(long_click_s * 1000.0));
  for (const QueryRecord& q : session.queries) {
    if (!q.clicks.empty()) ++with_click;
    clicks += q.clicks.size();
    for (const ClickRecord& c : q.clicks) {
      if (c.dwell_ms >= threshold_ms) ++long_clicks;
    }
  }
  const auto nq = static_cast<double>(session.queries.size());
  m.has_click_ratio = static_cast<double>(with_click) / nq;
  m.click_ratio = static_cast<double>(clicks) / nq;
  m.long_click_ratio =
      static_cast<double>(long_clicks) / static_cast<double>(std::max<std::size_t>(1, clicks));
  return m;
}

const char* to_string(PageMetric m) {
  switch (m) {
    case PageMetric::HasClick: return "has_click_ratio";
    case PageMetric::Click: return "click_ratio";
    case PageMetric::LongClick: return "long_click_ratio";
  }
  return "?";
}

PageMetric parse_page_metric(std::string_view name) {
  for (PageMetric m : kPageMetrics) {
    if (name == to_string(m)) return m;
  }
  throw Error("config.UnknownMetric", "unknown page metric '" + std::string(name) + "'");
}

double metric_value(const PageMetrics& m, PageMetric which) {
  switch (which) {
    case PageMetric::HasClick: return m.has_click_ratio;
    case PageMetric::Click: return m.click_ratio;
    case PageMetric::LongClick: return m.long_click_ratio;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// A/B

nlohmann::ordered_json AbReport::to_json() const {
  nlohmann::ordered_json j;
  j["group_sizes"] = {{"control", control_size}, {"treatment", treatment_size}};
  nlohmann::ordered_json means, deltas, ci;
  for (std::size_t m = 0; m < kAbMetrics.size(); ++m) {
    means[kAbMetrics[m]] = {{"control", control_mean[m]}, {"treatment", treatment_mean[m]}};
    deltas[kAbMetrics[m]] = delta[m];
    ci[kAbMetrics[m]] = {ci95[m].lo, ci95[m].hi};
  }
  j["means"] = means;
  j["deltas"] = deltas;
  j["ci95"] = ci;
  j["bootstrap_n"] = bootstrap_n;
  return j;
}

namespace {

AbRow mean_of(const std::vector<AbRow>& rows) {
  AbRow m{};
  for (const AbRow& r : rows) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += r[i];
  }
  for (double& v : m) v /= static_cast<double>(rows.size());
  return m;
}

}  // namespace

AbReport ab_compare_rows(const std::vector<AbRow>& control, const std::vector<AbRow>& treatment,
                         std::size_t bootstrap_n, std::uint64_t seed) {
  if (control.empty() || treatment.empty()) {
    throw Error("eval.EmptyGroup", "both A/B groups need at least one session");
  }
  AbReport r;
  r.control_size = control.size();
  r.treatment_size = treatment.size();
  r.bootstrap_n = bootstrap_n;
  r.control_mean = mean_of(control);
  r.treatment_mean = mean_of(treatment);
  for (std::size_t m = 0; m < r.delta.size(); ++m) {
    r.delta[m] = r.treatment_mean[m] - r.control_mean[m];
  }
  if (bootstrap_n == 0) {
    for (std::size_t m = 0; m < r.delta.size(); ++m) r.ci95[m] = {r.delta[m], r.delta[m]};
    return r;
  }
  std::array<std::vector<double>, 4> draws;
  Rng rng(seed);
  for (std::size_t b = 0; b < bootstrap_n; ++b) {
    AbRow sc{}, st{};
    for (std::size_t i = 0; i < control.size(); ++i) {
      const AbRow& row = control[rng.index(control.size())];
      for (std::size_t m = 0; m < sc.size(); ++m) sc[m] += row[m];
    }
    for (std::size_t i = 0; i < treatment.size(); ++i) {
      const AbRow& row = treatment[rng.index(treatment.size())];
      for (std::size_t m = 0; m < st.size(); ++m) st[m] += row[m];
    }
    for (std::size_t m = 0; m < sc.size(); ++m) {
      draws[m].push_back(st[m] / static_cast<double>(treatment.size()) -
                         sc[m] / static_cast<double>(control.size()));
    }
  }
  for (std::size_t m = 0; m < draws.size(); ++m) {
    r.ci95[m] = {quantile(draws[m], 0.025), quantile(draws[m], 0.975)};
  }
  return r;
}

AbRow ab_row(const FinalModel& model, const Session& session, const QueryStatsTable& stats) {
  const PageMetrics pm = page_metrics(session, model.features.dwell.long60);
  return {static_cast<double>(predict_final(model, session, stats).label), pm.has_click_ratio,
          pm.click_ratio, pm.long_click_ratio};
}

AbReport ab_compare(const std::vector<Session>& control, const std::vector<Session>& treatment,
                    const FinalModel& model, const QueryStatsTable& stats,
                    std::size_t bootstrap_n, std::uint64_t seed) {
  std::vector<AbRow> c, t;
  for (const Session& s : control) c.push_back(ab_row(model, s, stats));
  for (const Session& s : treatment) t.push_back(ab_row(model, s, stats));
  return ab_compare_rows(c, t, bootstrap_n, seed);
}

// ---------------------------------------------------------------------------
// GSB

PageLabelMap PageLabelMap::fit(std::span<const double> train_values,
                               std::span<const int> train_labels, int num_classes) {
  if (train_values.empty() || train_values.size() != train_labels.size()) {
    throw Error("eval.InvalidInput", "page label mapping needs labeled training values");
  }
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int l : train_labels) counts[static_cast<std::size_t>(l)] += 1.0;
  const std::vector<double> values(train_values.begin(), train_values.end());
  PageLabelMap map;
  double cum = 0.0;
  for (int k = 0; k + 1 < num_classes; ++k) {
    cum += counts[static_cast<std::size_t>(k)];
    map.cuts.push_back(quantile(values, cum / static_cast<double>(train_values.size())));
  }
  return map;
}

int PageLabelMap::label(double value) const {
  for (std::size_t k = 0; k < cuts.size(); ++k) {
    if (value <= cuts[k]) return static_cast<int>(k);
  }
  return static_cast<int>(cuts.size());
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Good: return "good";
    case Verdict::Same: return "same";
    case Verdict::Bad: return "bad";
  }
  return "?";
}

Verdict judge(int truth, int model_label, int page_label) {
  const int dm = std::abs(model_label - truth);
  const int dp = std::abs(page_label - truth);
  if (dm < dp) return Verdict::Good;
  if (dm > dp) return Verdict::Bad;
  return Verdict::Same;
}

std::vector<std::size_t> gsb_sample(std::size_t n, std::size_t sample_size, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (sample_size >= n) return idx;
  Rng rng(seed);
  // Partial Fisher-Yates: the first sample_size slots are a uniform sample.
  for (std::size_t i = 0; i < sample_size; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(sample_size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

GsbTally gsb_judge(std::span<const int> truth, std::span<const int> model_labels,
                   std::span<const int> page_labels, std::span<const std::size_t> sample,
                   const std::string& metric_name) {
  if (truth.size() != model_labels.size() || truth.size() != page_labels.size()) {
    throw Error("eval.InvalidInput", "GSB inputs differ in length");
  }
  GsbTally t;
  t.metric = metric_name;
  for (std::size_t i : sample) {
    switch (judge(truth[i], model_labels[i], page_labels[i])) {
      case Verdict::Good: ++t.good; break;
      case Verdict::Same: ++t.same; break;
      case Verdict::Bad: ++t.bad; break;
    }
  }
  return t;
}

void write_gsb_csv(std::ostream& out, const std::vector<GsbTally>& tallies) {
  out << "metric,good,same,bad\n";
  for (const GsbTally& t : tallies) {
    out << t.metric << ',' << t.good << ',' << t.same << ',' << t.bad << '\n';
  }
}

}  // namespace sessat
