#include "sessat/features.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "sessat/error.hpp"
#include "sessat/text_format.hpp"
#include "sessat/utf8.hpp"

namespace sessat {

namespace {

struct FeatureInfo {
  FeatureId id;
  const char* name;
  FeatureCategory category;
};

constexpr std::array<FeatureInfo, kNumFeatures> kCatalog{{
    {FeatureId::Q_SumClickDwell, "Q_SumClickDwell", FeatureCategory::Outcome},
    {FeatureId::S_SumClickDwell, "S_SumClickDwell", FeatureCategory::Outcome},
    {FeatureId::S_ClickDwell, "S_ClickDwell", FeatureCategory::Outcome},
    {FeatureId::QueryInterval, "QueryInterval", FeatureCategory::Outcome},
    {FeatureId::S_SumQueryInterval, "S_SumQueryInterval", FeatureCategory::Outcome},
    {FeatureId::SessionDuration, "SessionDuration", FeatureCategory::Outcome},
    {FeatureId::Q_NumClickGe40, "Q_num_click_ge40", FeatureCategory::Outcome},
    {FeatureId::Q_NumClickGe60, "Q_num_click_ge60", FeatureCategory::Outcome},
    {FeatureId::Q_NumClickLt20, "Q_num_click_lt20", FeatureCategory::Outcome},
    {FeatureId::Q_NumClickLt5, "Q_num_click_lt5", FeatureCategory::Outcome},
    {FeatureId::S_NumClick, "S_num_click", FeatureCategory::Outcome},
    {FeatureId::S_NumClickGe185, "S_num_click_ge185", FeatureCategory::Outcome},
    {FeatureId::S_NumClickLt10, "S_num_click_lt10", FeatureCategory::Outcome},
    {FeatureId::S_Qlength, "S_Qlength", FeatureCategory::Cost},
    {FeatureId::S_NumQuery, "S_num_query", FeatureCategory::Cost},
    {FeatureId::S_NumInpQuery, "S_num_inp_query", FeatureCategory::Cost},
    {FeatureId::S_NumHisQuery, "S_num_his_query", FeatureCategory::Cost},
    {FeatureId::S_NumSugQuery, "S_num_sug_query", FeatureCategory::Cost},
    {FeatureId::S_NumRSQuery, "S_num_rs_query", FeatureCategory::Cost},
    {FeatureId::S_AvgClickPos, "S_AvgClickPos", FeatureCategory::Cost},
    {FeatureId::S_MinClickPos, "S_MinClickPos", FeatureCategory::Cost},
    {FeatureId::Q_MinClickPos, "Q_MinClickPos", FeatureCategory::Cost},
    {FeatureId::Q_AvgClickPos, "Q_AvgClickPos", FeatureCategory::Cost},
    {FeatureId::S_NumQueryNoClick, "S_num_query_noclick", FeatureCategory::Effort},
    {FeatureId::S_MaxClickPos, "S_MaxClickPos", FeatureCategory::Effort},
    {FeatureId::Q_MaxClickPos, "Q_MaxClickPos", FeatureCategory::Effort},
    {FeatureId::S_NumForwQuery, "S_num_forw_query", FeatureCategory::Effort},
    {FeatureId::S_MaxQlength, "S_MaxQlength", FeatureCategory::Effort},
    {FeatureId::QEditDistance, "QEditDistance", FeatureCategory::Effort},
    {FeatureId::QJaccardSim, "QJaccardSim", FeatureCategory::Effort},
    {FeatureId::Q_NumClick, "Q_num_click", FeatureCategory::Effort},
    {FeatureId::Delta_Q_SumClickDwell, "Delta_Q_SumClickDwell", FeatureCategory::Change},
    {FeatureId::Delta_Q_NumClickGe60, "Delta_Q_num_click_ge60", FeatureCategory::Change},
    {FeatureId::Delta_Q_NumClickLt50, "Delta_Q_num_click_lt50", FeatureCategory::Change},
    {FeatureId::Delta_QEditDistance, "Delta_QEditDistance", FeatureCategory::Change},
    {FeatureId::Delta_QJaccardSim, "Delta_QJaccardSim", FeatureCategory::Change},
    {FeatureId::Delta_Qlength, "Delta_Qlength", FeatureCategory::Change},
    {FeatureId::Delta_QMaxClickPos, "Delta_QMaxClickPos", FeatureCategory::Change},
}};

constexpr std::array<const char*, kNumReducedFeatures> kReducedNames{{
    "S_SumClickDwell", "S_ClickDwell", "Q_num_click_ge40", "Q_num_click_ge60",
    "Q_num_click_lt20", "Q_num_click_lt5", "S_num_click_ge185", "S_num_click_lt10",
    "S_num_click", "S_AvgClickPos", "S_MinClickPos", "S_MaxClickPos",
    "S_num_query_noclick", "S_Qlength", "SessionDuration", "query_frequency",
    "query_click_ratio",
}};

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' ||
         c == U'\u3000' || c == U'\u00A0';
}

std::set<std::u32string> tokenize(std::string_view text, JaccardTokens mode) {
  const std::u32string cps = decode_utf8(text);
  std::set<std::u32string> tokens;
  if (mode == JaccardTokens::Character) {
    for (char32_t c : cps) {
      if (!is_space(c)) tokens.insert(std::u32string(1, c));
    }
  } else {
    std::u32string current;
    for (char32_t c : cps) {
      if (is_space(c)) {
        if (!current.empty()) tokens.insert(current);
        current.clear();
      } else {
        current.push_back(c);
      }
    }
    if (!current.empty()) tokens.insert(current);
  }
  return tokens;
}

double seconds(std::int64_t ms) { return static_cast<double>(ms) / 1000.0; }

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct QuerySummary {
  double sum_dwell = 0.0;
  int clicks = 0;
  int ge40 = 0, ge60 = 0, lt20 = 0, lt5 = 0, delta_ge60 = 0, delta_lt50 = 0;
  std::optional<int> min_pos, max_pos;
  std::optional<double> avg_pos;
  double length = 0.0;
};

QuerySummary summarize(const QueryRecord& q, const DwellThresholdConfig& t) {
  QuerySummary s;
  s.length = static_cast<double>(scalar_count(q.text));
  double pos_sum = 0.0;
  for (const auto& c : q.clicks) {
    const double d = seconds(c.dwell_ms);
    s.sum_dwell += d;
    ++s.clicks;
    s.ge40 += d >= t.long40;
    s.ge60 += d >= t.long60;
    s.lt20 += d < t.short20;
    s.lt5 += d < t.short5;
    s.delta_ge60 += d >= t.delta_long60;
    s.delta_lt50 += d < t.delta_short50;
    s.min_pos = std::min(s.min_pos.value_or(c.rank_pos), c.rank_pos);
    s.max_pos = std::max(s.max_pos.value_or(c.rank_pos), c.rank_pos);
    pos_sum += c.rank_pos;
  }
  if (s.clicks > 0) s.avg_pos = pos_sum / s.clicks;
  return s;
}

// Full catalog for any session with >= 1 query. Adjacent-pair slots are
// missing below two queries and the adjacent-pair deltas below three.
FeatureVector compute_catalog(const Session& session, const FeatureConfig& config) {
  using F = FeatureId;
  const auto& t = config.dwell;
  const auto& qs = session.queries;
  const std::size_t n = qs.size();

  std::vector<QuerySummary> sums;
  sums.reserve(n);
  for (const auto& q : qs) sums.push_back(summarize(q, t));

  FeatureVector fv;
  std::vector<double> per_query(n);
  auto per_query_mean = [&](auto&& fn) {
    for (std::size_t i = 0; i < n; ++i) per_query[i] = fn(sums[i]);
    return mean(per_query);
  };

  // outcome
  double total_dwell = 0.0;
  int total_clicks = 0, s_ge185 = 0, s_lt10 = 0;
  double pos_sum = 0.0;
  std::optional<int> s_min, s_max;
  for (const auto& q : qs) {
    for (const auto& c : q.clicks) {
      const double d = seconds(c.dwell_ms);
      total_dwell += d;
      ++total_clicks;
      s_ge185 += d >= t.very_long185;
      s_lt10 += d < t.short10;
      pos_sum += c.rank_pos;
      s_min = std::min(s_min.value_or(c.rank_pos), c.rank_pos);
      s_max = std::max(s_max.value_or(c.rank_pos), c.rank_pos);
    }
  }
  double interval_sum = 0.0;
  for (const auto& q : qs) interval_sum += seconds(q.interval_ms);

  fv[F::Q_SumClickDwell] = per_query_mean([](const QuerySummary& s) { return s.sum_dwell; });
  fv[F::S_SumClickDwell] = total_dwell;
  if (total_clicks > 0) fv[F::S_ClickDwell] = total_dwell / total_clicks;
  fv[F::QueryInterval] = interval_sum / static_cast<double>(n);
  fv[F::S_SumQueryInterval] = interval_sum;
  fv[F::SessionDuration] = seconds(session.duration_ms);
  fv[F::Q_NumClickGe40] = per_query_mean([](const QuerySummary& s) { return double(s.ge40); });
  fv[F::Q_NumClickGe60] = per_query_mean([](const QuerySummary& s) { return double(s.ge60); });
  fv[F::Q_NumClickLt20] = per_query_mean([](const QuerySummary& s) { return double(s.lt20); });
  fv[F::Q_NumClickLt5] = per_query_mean([](const QuerySummary& s) { return double(s.lt5); });
  fv[F::S_NumClick] = total_clicks;
  fv[F::S_NumClickGe185] = s_ge185;
  fv[F::S_NumClickLt10] = s_lt10;

  // cost
  int inp = 0, his = 0, sug = 0, rs = 0;
  double max_len = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    switch (qs[i].input_type) {
      case InputType::Manual: ++inp; break;
      case InputType::History: ++his; break;
      case InputType::Suggestion: ++sug; break;
      case InputType::RelatedSearch: ++rs; break;
    }
    max_len = std::max(max_len, sums[i].length);
  }
  fv[F::S_Qlength] = per_query_mean([](const QuerySummary& s) { return s.length; });
  fv[F::S_NumQuery] = static_cast<double>(n);
  fv[F::S_NumInpQuery] = inp;
  fv[F::S_NumHisQuery] = his;
  fv[F::S_NumSugQuery] = sug;
  fv[F::S_NumRSQuery] = rs;
  if (total_clicks > 0) {
    fv[F::S_AvgClickPos] = pos_sum / total_clicks;
    fv[F::S_MinClickPos] = *s_min;
    fv[F::S_MaxClickPos] = *s_max;
    // Per-query position stats average over the queries that have clicks.
    double min_sum = 0.0, avg_sum = 0.0, max_sum = 0.0;
    int clicked = 0;
    for (const auto& s : sums) {
      if (s.clicks == 0) continue;
      min_sum += *s.min_pos;
      avg_sum += *s.avg_pos;
      max_sum += *s.max_pos;
      ++clicked;
    }
    fv[F::Q_MinClickPos] = min_sum / clicked;
    fv[F::Q_AvgClickPos] = avg_sum / clicked;
    fv[F::Q_MaxClickPos] = max_sum / clicked;
  }

  // effort
  int no_click = 0;
  double page_turns = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    no_click += sums[i].clicks == 0;
    page_turns += static_cast<double>(qs[i].page_turns());
  }
  fv[F::S_NumQueryNoClick] = no_click;
  fv[F::S_NumForwQuery] = page_turns;
  fv[F::S_MaxQlength] = max_len;
  std::vector<double> edits, jaccards;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    edits.push_back(edit_distance(qs[i].text, qs[i + 1].text));
    jaccards.push_back(jaccard_sim(qs[i].text, qs[i + 1].text, config.tokens));
  }
  if (!edits.empty()) {
    fv[F::QEditDistance] = mean(edits);
    fv[F::QJaccardSim] = mean(jaccards);
  }
  fv[F::Q_NumClick] = static_cast<double>(total_clicks) / static_cast<double>(n);

  // change: last minus first
  const QuerySummary& first = sums.front();
  const QuerySummary& last = sums.back();
  fv[F::Delta_Q_SumClickDwell] = last.sum_dwell - first.sum_dwell;
  fv[F::Delta_Q_NumClickGe60] = last.delta_ge60 - first.delta_ge60;
  fv[F::Delta_Q_NumClickLt50] = last.delta_lt50 - first.delta_lt50;
  if (edits.size() >= 2) {
    fv[F::Delta_QEditDistance] = edits.back() - edits.front();
    fv[F::Delta_QJaccardSim] = jaccards.back() - jaccards.front();
  }
  fv[F::Delta_Qlength] = last.length - first.length;
  if (first.max_pos && last.max_pos) {
    fv[F::Delta_QMaxClickPos] = *last.max_pos - *first.max_pos;
  }
  return fv;
}

}  // namespace

const char* to_string(FeatureCategory category) {
  switch (category) {
    case FeatureCategory::Outcome: return "outcome";
    case FeatureCategory::Cost: return "cost";
    case FeatureCategory::Effort: return "effort";
    case FeatureCategory::Change: return "change";
  }
  return "unknown";
}

std::optional<FeatureCategory> parse_feature_category(std::string_view name) {
  if (name == "outcome") return FeatureCategory::Outcome;
  if (name == "cost") return FeatureCategory::Cost;
  if (name == "effort") return FeatureCategory::Effort;
  if (name == "change") return FeatureCategory::Change;
  return std::nullopt;
}

std::string_view feature_name(FeatureId id) { return kCatalog[static_cast<std::size_t>(id)].name; }

FeatureCategory feature_category(FeatureId id) {
  return kCatalog[static_cast<std::size_t>(id)].category;
}

std::optional<FeatureId> feature_by_name(std::string_view name) {
  for (const auto& info : kCatalog) {
    if (name == info.name) return info.id;
  }
  return std::nullopt;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& info : kCatalog) out.emplace_back(info.name);
    return out;
  }();
  return names;
}

int edit_distance(std::string_view a, std::string_view b) {
  const std::u32string x = decode_utf8(a);
  const std::u32string y = decode_utf8(b);
  std::vector<int> prev(y.size() + 1), cur(y.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const int sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

double jaccard_sim(std::string_view a, std::string_view b, JaccardTokens tokens) {
  const auto ta = tokenize(a, tokens);
  const auto tb = tokenize(b, tokens);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& tok : ta) common += tb.count(tok);
  const std::size_t uni = ta.size() + tb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

FeatureVector extract_features(const Session& session, const FeatureConfig& config) {
  if (session.queries.size() < 2) {
    throw Error("features.SingleQuerySession",
                "session " + session.goal_id + " has a single query");
  }
  return compute_catalog(session, config);
}

std::optional<QueryStats> QueryStatsTable::find(const std::string& query) const {
  auto it = table_.find(query);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> QueryStatsTable::frequencies() const {
  std::vector<double> out;
  out.reserve(table_.size());
  for (const auto& [_, s] : table_) out.push_back(s.frequency);
  std::sort(out.begin(), out.end());
  return out;
}

QueryStatsTable QueryStatsTable::read_tsv(std::istream& in) {
  QueryStatsTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error("features.MalformedQueryStats", "line " + std::to_string(line_no));
    }
    try {
      QueryStats s;
      s.frequency = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
      s.click_ratio = std::stod(line.substr(t2 + 1));
      table.set(line.substr(0, t1), s);
    } catch (const std::logic_error&) {
      throw Error("features.MalformedQueryStats", "line " + std::to_string(line_no));
    }
  }
  return table;
}

void QueryStatsTable::write_tsv(std::ostream& out) const {
  std::vector<const std::pair<const std::string, QueryStats>*> rows;
  for (const auto& kv : table_) rows.push_back(&kv);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
  for (const auto* kv : rows) {
    out << kv->first << '\t' << format_double(kv->second.frequency) << '\t'
        << format_double(kv->second.click_ratio) << '\n';
  }
}

std::string_view reduced_feature_name(ReducedId id) {
  return kReducedNames[static_cast<std::size_t>(id)];
}

const std::vector<std::string>& reduced_feature_names() {
  static const std::vector<std::string> names(kReducedNames.begin(), kReducedNames.end());
  return names;
}

std::optional<FeatureId> reduced_to_full(ReducedId id) {
  using R = ReducedId;
  using F = FeatureId;
  switch (id) {
    case R::S_SumClickDwell: return F::S_SumClickDwell;
    case R::S_ClickDwell: return F::S_ClickDwell;
    case R::Q_NumClickGe40: return F::Q_NumClickGe40;
    case R::Q_NumClickGe60: return F::Q_NumClickGe60;
    case R::Q_NumClickLt20: return F::Q_NumClickLt20;
    case R::Q_NumClickLt5: return F::Q_NumClickLt5;
    case R::S_NumClickGe185: return F::S_NumClickGe185;
    case R::S_NumClickLt10: return F::S_NumClickLt10;
    case R::S_NumClick: return F::S_NumClick;
    case R::S_AvgClickPos: return F::S_AvgClickPos;
    case R::S_MinClickPos: return F::S_MinClickPos;
    case R::S_MaxClickPos: return F::S_MaxClickPos;
    case R::S_NumQueryNoClick: return F::S_NumQueryNoClick;
    case R::S_Qlength: return F::S_Qlength;
    case R::SessionDuration: return F::SessionDuration;
    case R::QueryFrequency:
    case R::QueryClickRatio:
      return std::nullopt;
  }
  return std::nullopt;
}

ReducedFeatureVector extract_single_query_features(const Session& session,
                                                   const QueryStatsTable& stats,
                                                   const FeatureConfig& config) {
  if (session.queries.size() != 1) {
    throw Error("features.MultiQuerySession",
                "session " + session.goal_id + " has " +
                    std::to_string(session.queries.size()) + " queries");
  }
  const FeatureVector full = compute_catalog(session, config);
  ReducedFeatureVector out;
  for (std::size_t i = 0; i < kNumReducedFeatures; ++i) {
    const auto id = static_cast<ReducedId>(i);
    if (auto f = reduced_to_full(id)) out[id] = full[*f];
  }
  const auto found = stats.find(session.queries.front().text);
  out[ReducedId::QueryFrequency] = found ? found->frequency : 0.0;
  out[ReducedId::QueryClickRatio] = found ? found->click_ratio : 0.0;
  return out;
}

namespace {

template <typename Row>
void write_rows(std::ostream& out, const std::vector<std::string>& header,
                const std::vector<std::string>& goal_ids, const std::vector<Row>& rows) {
  out << "goal_id";
  for (const auto& name : header) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << goal_ids[r];
    for (const auto& slot : rows[r].slots()) out << ',' << format_slot(slot);
    out << '\n';
  }
}

}  // namespace

void write_feature_csv(std::ostream& out, const std::vector<std::string>& goal_ids,
                       const std::vector<FeatureVector>& rows) {
  write_rows(out, feature_names(), goal_ids, rows);
}

void write_reduced_feature_csv(std::ostream& out, const std::vector<std::string>& goal_ids,
                               const std::vector<ReducedFeatureVector>& rows) {
  write_rows(out, reduced_feature_names(), goal_ids, rows);
}

}  // namespace sessat
