#pragma once

#include <array>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sessat/session.hpp"

namespace sessat {

enum class FeatureCategory { Outcome, Cost, Effort, Change };

const char* to_string(FeatureCategory category);
std::optional<FeatureCategory> parse_feature_category(std::string_view name);

// The session feature catalog, in export column order.
enum class FeatureId : int {
  // search outcome
  Q_SumClickDwell,
  S_SumClickDwell,
  S_ClickDwell,
  QueryInterval,
  S_SumQueryInterval,
  SessionDuration,
  Q_NumClickGe40,
  Q_NumClickGe60,
  Q_NumClickLt20,
  Q_NumClickLt5,
  S_NumClick,
  S_NumClickGe185,
  S_NumClickLt10,
  // search cost
  S_Qlength,
  S_NumQuery,
  S_NumInpQuery,
  S_NumHisQuery,
  S_NumSugQuery,
  S_NumRSQuery,
  S_AvgClickPos,
  S_MinClickPos,
  Q_MinClickPos,
  Q_AvgClickPos,
  // user effort
  S_NumQueryNoClick,
  S_MaxClickPos,
  Q_MaxClickPos,
  S_NumForwQuery,
  S_MaxQlength,
  QEditDistance,
  QJaccardSim,
  Q_NumClick,
  // outcome and effort change (last query minus first query)
  Delta_Q_SumClickDwell,
  Delta_Q_NumClickGe60,
  Delta_Q_NumClickLt50,
  Delta_QEditDistance,
  Delta_QJaccardSim,
  Delta_Qlength,
  Delta_QMaxClickPos,
};

inline constexpr std::size_t kNumFeatures = 38;

// Canonical export name, e.g. "Q_num_click_ge60".
std::string_view feature_name(FeatureId id);
FeatureCategory feature_category(FeatureId id);
std::optional<FeatureId> feature_by_name(std::string_view name);
const std::vector<std::string>& feature_names();

// Dwell thresholds in seconds. The names of the slots keep their default
// spelling even when a threshold is changed.
struct DwellThresholdConfig {
  double long40 = 40.0;
  double long60 = 60.0;
  double short20 = 20.0;
  double short5 = 5.0;
  double very_long185 = 185.0;
  double short10 = 10.0;
  double delta_long60 = 60.0;
  double delta_short50 = 50.0;
};

enum class JaccardTokens { Character, Whitespace };

struct FeatureConfig {
  DwellThresholdConfig dwell;
  JaccardTokens tokens = JaccardTokens::Character;
};

using FeatureSlot = std::optional<double>;

// One value per catalog slot; std::nullopt marks a slot that is undefined for
// the session (no clicks, too few queries) and awaits imputation.
class FeatureVector {
 public:
  FeatureSlot& operator[](FeatureId id) { return slots_[static_cast<std::size_t>(id)]; }
  const FeatureSlot& operator[](FeatureId id) const {
    return slots_[static_cast<std::size_t>(id)];
  }
  const std::array<FeatureSlot, kNumFeatures>& slots() const { return slots_; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  std::array<FeatureSlot, kNumFeatures> slots_{};
};

// Levenshtein distance over Unicode scalar values.
int edit_distance(std::string_view a, std::string_view b);

// |T(a) ∩ T(b)| / |T(a) ∪ T(b)| over token sets; 1.0 when both are empty.
double jaccard_sim(std::string_view a, std::string_view b,
                   JaccardTokens tokens = JaccardTokens::Character);

// Requires >= 2 queries (throws features.SingleQuerySession otherwise).
FeatureVector extract_features(const Session& session, const FeatureConfig& config = {});

// ---------------------------------------------------------------------------
// Single-query sessions

struct QueryStats {
  double frequency = 0.0;
  double click_ratio = 0.0;
};

class QueryStatsTable {
 public:
  void set(std::string query, QueryStats stats) { table_[std::move(query)] = stats; }
  std::optional<QueryStats> find(const std::string& query) const;
  std::size_t size() const { return table_.size(); }
  std::vector<double> frequencies() const;

  // TSV: query<TAB>frequency<TAB>click_ratio
  static QueryStatsTable read_tsv(std::istream& in);
  void write_tsv(std::ostream& out) const;

 private:
  std::unordered_map<std::string, QueryStats> table_;
};

enum class ReducedId : int {
  S_SumClickDwell,
  S_ClickDwell,
  Q_NumClickGe40,
  Q_NumClickGe60,
  Q_NumClickLt20,
  Q_NumClickLt5,
  S_NumClickGe185,
  S_NumClickLt10,
  S_NumClick,
  S_AvgClickPos,
  S_MinClickPos,
  S_MaxClickPos,
  S_NumQueryNoClick,  // 1 when the only query has no click
  S_Qlength,
  SessionDuration,
  QueryFrequency,
  QueryClickRatio,
};

inline constexpr std::size_t kNumReducedFeatures = 17;

std::string_view reduced_feature_name(ReducedId id);
const std::vector<std::string>& reduced_feature_names();
// Catalog slot with the same definition, if any.
std::optional<FeatureId> reduced_to_full(ReducedId id);

class ReducedFeatureVector {
 public:
  FeatureSlot& operator[](ReducedId id) { return slots_[static_cast<std::size_t>(id)]; }
  const FeatureSlot& operator[](ReducedId id) const {
    return slots_[static_cast<std::size_t>(id)];
  }
  const std::array<FeatureSlot, kNumReducedFeatures>& slots() const { return slots_; }

  friend bool operator==(const ReducedFeatureVector&, const ReducedFeatureVector&) = default;

 private:
  std::array<FeatureSlot, kNumReducedFeatures> slots_{};
};

// Requires exactly one query (throws features.MultiQuerySession otherwise).
ReducedFeatureVector extract_single_query_features(const Session& session,
                                                   const QueryStatsTable& stats,
                                                   const FeatureConfig& config = {});

// CSV with header "goal_id,<slot names>"; an empty cell is a missing slot.
void write_feature_csv(std::ostream& out, const std::vector<std::string>& goal_ids,
                       const std::vector<FeatureVector>& rows);
void write_reduced_feature_csv(std::ostream& out, const std::vector<std::string>& goal_ids,
                               const std::vector<ReducedFeatureVector>& rows);

}  // namespace sessat
