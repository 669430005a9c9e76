#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sessat/features.hpp"
#include "sessat/matrix.hpp"

namespace sessat {

inline constexpr int kNumLabels = 4;

enum class SessionLabel : int { Low = 0, Medium = 1, High = 2, VeryHigh = 3 };

const char* label_name(int label);

// ---------------------------------------------------------------------------
// Annotations

struct AnnotatedSession {
  std::string goal_id;
  std::vector<std::string> annotator_ids;
  std::vector<double> annotator_scores;              // session scores in [0, 3]
  std::vector<std::vector<double>> per_query_scores;  // per annotator, each in [0, 2]
  double s = 0.0;                                   // mean session score
  std::vector<double> q;                            // mean per-query search score
};

// CSV rows "goal_id,annotator_id,session_score,q1,q2,..."; an optional header
// line starting with "goal_id" is skipped. Rows of one goal are averaged.
std::vector<AnnotatedSession> read_annotations(std::istream& in);
void write_annotations(std::ostream& out, const std::vector<AnnotatedSession>& sessions);

// 0 if s <= 0.67; 1 if s <= 1.67; 2 if s <= 2.67; 3 otherwise.
SessionLabel discretize_session_label(double s);
// 0 if q <= 0.67; 1 if q <= 1.33; 2 otherwise.
int discretize_search_label(double q);

// ---------------------------------------------------------------------------
// Outliers

struct IsolationForestParams {
  int trees = 100;
  int subsample = 256;
  double contamination = 0.02;
  std::uint64_t seed = 0;
};

struct OutlierResult {
  std::vector<double> scores;  // anomaly score in (0, 1], higher = more isolated
  std::vector<bool> flags;
  std::vector<std::size_t> flagged;  // indices, most anomalous first
  bool degenerate = false;           // every row identical; nothing flagged
};

// Flags the floor(contamination * n) rows with the highest isolation-forest
// anomaly scores (ties go to the lower row index).
OutlierResult detect_outliers(const Matrix& x, const IsolationForestParams& params = {});

// ---------------------------------------------------------------------------
// Missing values and scaling

using FeatureRow = std::vector<std::optional<double>>;
using FeatureMatrix = std::vector<FeatureRow>;

FeatureMatrix to_feature_matrix(const std::vector<FeatureVector>& rows);
FeatureMatrix to_feature_matrix(const std::vector<ReducedFeatureVector>& rows);

struct ImputationStats {
  std::vector<double> medians;
};

struct Imputed {
  Matrix x;
  ImputationStats stats;
};

// Fills missing cells with the per-slot median of the observed values. Throws
// preprocess.AllMissingSlot when a slot has no observed value.
Imputed impute_missing(const FeatureMatrix& m, const std::vector<std::string>& slot_names);
Matrix apply_imputation(const FeatureMatrix& m, const ImputationStats& stats);
std::vector<double> apply_imputation(const FeatureRow& row, const ImputationStats& stats);

struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population stddev; 1 for constant slots
};

StandardizationStats fit_standardization(const Matrix& x);

// ---------------------------------------------------------------------------
// Datasets

struct OutlierReport {
  std::vector<std::string> removed_goal_ids;
  std::vector<double> removed_scores;
};

struct LabeledDataset {
  std::vector<std::string> goal_ids;
  Matrix x;
  std::vector<int> y;
  std::vector<std::string> feature_names;
  ImputationStats imputation;
  StandardizationStats standardization;
  OutlierReport outliers;

  std::size_t size() const { return y.size(); }
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;
  std::array<std::size_t, kNumLabels> label_counts() const;
};

// Oversamples the minority side of (label == target) vs (label != target)
// with replacement until both sides have equal counts. Original rows come
// first, in order, followed by the drawn duplicates.
LabeledDataset rebalance(const LabeledDataset& data, int target_label, std::uint64_t seed);

struct SplitRatios {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
};

struct Splits {
  LabeledDataset train, valid, test;
};

// Stratified by label, disjoint, exhaustive. Row order within each part
// follows the input.
Splits split(const LabeledDataset& data, const SplitRatios& ratios, std::uint64_t seed);

// Index form of split(): for each row, 0 = train, 1 = valid, 2 = test.
std::vector<int> split_assignment(const std::vector<int>& labels, const SplitRatios& ratios,
                                  std::uint64_t seed);

}  // namespace sessat
