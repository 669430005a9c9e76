#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sessat/combine.hpp"
#include "sessat/eval.hpp"
#include "sessat/hybrid.hpp"
#include "sessat/preprocess.hpp"
#include "sessat/session.hpp"

namespace sessat {

struct TrainConfig {
  std::uint64_t seed = 7;
  SplitRatios ratios;
  FeatureConfig features;
  std::int64_t dwell_cap_ms = kDefaultDwellCapMs;
  bool remove_outliers = true;
  IsolationForestParams outliers;
  HybridParams hybrid;
  CartParams single_tree{5, 5.0, 0};
  double hot_quantile = 0.99;
  double cold_quantile = 0.5;
  double short_duration_s = 10.0;
  // Extra baselines reported next to the hybrid model.
  bool compare_learners = true;
  ForestParams forest;
  LogRegParams logreg;
  SvmParams svm;
};

// Labels from annotations, keyed by goal_id.
std::map<std::string, int> labels_from_annotations(const std::vector<AnnotatedSession>& ann);

struct TrainResult {
  FinalModel model;
  double multiclass_valid_f1 = 0.0;
  double hybrid_valid_f1 = 0.0;
  std::map<std::string, double> learner_valid_f1;   // cart, forest, gbt, logreg, linsvm
  std::map<std::string, double> combiner_valid_f1;  // ovo, ovr, dag_classic, dag_sat_dissat
  std::vector<std::pair<std::string, int>> split;   // goal_id -> 0 train, 1 valid, 2 test
  nlohmann::ordered_json report;                    // validation_metrics.json content
};

// Splits multi-query and single-query sessions separately (stratified), fits
// imputation and outlier removal on the multi-query training part, trains the
// hybrid model and the single-query model, and scores everything on the
// validation and test parts. Sessions without a label are skipped.
TrainResult train_final_model(const std::vector<Session>& sessions,
                              const std::map<std::string, int>& labels,
                              const QueryStatsTable& query_stats, const TrainConfig& config);

struct PredictionRow {
  std::string goal_id;
  FinalPrediction prediction;
};

std::vector<PredictionRow> predict_sessions(const FinalModel& model,
                                            const std::vector<Session>& sessions,
                                            const QueryStatsTable& query_stats);

void write_predictions_csv(std::ostream& out, const std::vector<PredictionRow>& rows);

// Per-tag ("single", "hybrid") and total metrics of predictions against truth;
// sessions without truth are ignored.
nlohmann::ordered_json evaluate_predictions(const std::vector<PredictionRow>& rows,
                                            const std::map<std::string, int>& truth);

}  // namespace sessat
