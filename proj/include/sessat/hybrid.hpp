#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sessat/combine.hpp"
#include "sessat/features.hpp"
#include "sessat/learners.hpp"
#include "sessat/session.hpp"

namespace sessat {

// Two-layer model: a multi-class layer P_j(x) reweighted through pairwise
// conditionals,
//   score_i(x) = w_i * sum_j P_j(x) * cond(i, j, x)
// with cond(i, j) = P(i | pair {i, j}) for i != j and cond(j, j) the mean of
// P(j | pair {j, k}) over k != j. A pruned pair {i, j} contributes identity
// conditionals: cond(i, j) = cond(j, i) = 0 and it drops out of the diagonal
// means (a diagonal with every pair pruned is 1).
struct HybridModel {
  int num_classes = 0;
  ClassifierPtr multiclass;
  PairwiseBank bank;
  std::vector<double> weights;
  std::set<std::pair<int, int>> pruned;  // unordered pairs stored as (min, max)

  bool is_pruned(int i, int j) const;
  json to_json() const;
  static HybridModel from_json(const json& j);
};

// Model outputs at one input, computed once and reused across weight choices.
struct HybridInputs {
  std::vector<double> multiclass;          // P_j(x)
  std::vector<std::vector<double>> pair;   // pair[a][b] = P(a | pair {a, b})
};

HybridInputs hybrid_inputs(const HybridModel& model, std::span<const double> x);

// sum_j P_j(x) cond(i, j, x) for each i (the scores with w = 1).
std::vector<double> unweighted_scores(const HybridModel& model, const HybridInputs& in);

// Raw (unnormalized) per-label scores. Throws hybrid.AllWeightsZero.
std::vector<double> score_hybrid(const HybridModel& model, std::span<const double> x);

// argmax of score_hybrid; ties go to the lower label.
int predict_hybrid(const HybridModel& model, std::span<const double> x);

struct WeightFit {
  std::vector<double> weights;
  double macro_f1 = 0.0;
  std::size_t evaluated = 0;  // grid points tried
};

// Exhaustive search over {0, step, ..., 1}^N without the all-zero point,
// maximizing validation macro-F1; ties go to the lexicographically smallest
// weight vector. Throws hybrid.MissingLabel if a label is absent from
// valid_y and hybrid.InvalidGridStep unless 1/step is a whole number.
WeightFit fit_weights(const HybridModel& model, const Matrix& valid_x,
                      std::span<const int> valid_y, double grid_step = 0.1);

// Keeps the smallest prefix of pairs, ranked by C[i][j] + C[j][i] (ties: lower
// pair first), whose confusion mass reaches keep_fraction of the total
// off-diagonal mass; every other pair is pruned. keep_fraction >= 1 keeps all
// pairs. Weights are left unchanged.
HybridModel prune_paths(const HybridModel& model,
                        const std::vector<std::vector<std::size_t>>& confusion,
                        double keep_fraction);

// prune_paths followed by fit_weights on the same validation data.
HybridModel prune_and_refit(const HybridModel& model, const Matrix& valid_x,
                            std::span<const int> valid_y,
                            const std::vector<std::vector<std::size_t>>& confusion,
                            double keep_fraction, double grid_step);

// Exposes normalized hybrid scores through the Classifier contract so the
// explanation module can probe the hybrid model.
class HybridClassifier : public Classifier {
 public:
  explicit HybridClassifier(HybridModel model) : model_(std::move(model)) {}
  int num_classes() const override { return model_.num_classes; }
  LabelDistribution predict_proba(std::span<const double> x) const override;
  std::string kind() const override { return "hybrid"; }
  json structure() const override { return model_.to_json(); }

 private:
  HybridModel model_;
};

struct HybridParams {
  GbtParams multiclass;
  LearnerSpec pairwise;  // gradient-boosted trees by default
  std::size_t min_pair_rows = 5;
  double grid_step = 0.1;
  double keep_fraction = 0.8;
  HybridParams() { pairwise.kind = LearnerKind::Gbt; pairwise.gbt.rounds = 100; }
};

struct HybridCandidate {
  double keep_fraction = 0.0;
  std::size_t kept_pairs = 0;
  std::vector<double> weights;
  double valid_macro_f1 = 0.0;
};

struct HybridTraining {
  HybridModel model;
  double multiclass_valid_f1 = 0.0;
  double hybrid_valid_f1 = 0.0;
  std::vector<HybridCandidate> candidates;  // in evaluation order
  std::size_t chosen = 0;
};

// Trains the multi-class layer and the pairwise bank on (x, y), then fits
// weights and pruning on the validation data. Pruning levels tried, in order:
// keep_fraction, 1.0 (no pruning), 0.0 (every pair pruned); the first one with
// the highest validation macro-F1 is kept.
HybridTraining train_hybrid(const Matrix& x, std::span<const int> y, const Matrix& valid_x,
                            std::span<const int> valid_y, int num_classes,
                            const HybridParams& params = {});

// ---------------------------------------------------------------------------
// Single-query sessions

struct SingleQueryThresholds {
  double hot_frequency = 0.0;   // R1: frequency >= hot
  double cold_frequency = 0.0;  // R2: frequency < cold
  double short_duration_s = 10.0;
};

// hot = hot_quantile and cold = cold_quantile of the table's frequencies
// (linear interpolation between order statistics).
SingleQueryThresholds thresholds_from_table(const QueryStatsTable& table,
                                            double hot_quantile = 0.99,
                                            double cold_quantile = 0.5,
                                            double short_duration_s = 10.0);

struct SinglePrediction {
  int label = 0;
  std::string rule;  // "R1", "R2" or "tree"
  LabelDistribution scores;
};

struct SingleQueryModel {
  int num_classes = 0;
  SingleQueryThresholds thresholds;
  std::shared_ptr<TreeModel> fallback;
  ImputationStats imputation;

  // Index of the first matching rule (0 = R1, 1 = R2), or -1.
  int matching_rule(const ReducedFeatureVector& row) const;
  SinglePrediction predict(const ReducedFeatureVector& row) const;

  json to_json() const;
  static SingleQueryModel from_json(const json& j);
};

// The fallback tree is trained on rows no rule matches (on every row when the
// rules cover all of them).
SingleQueryModel train_single_query(const std::vector<ReducedFeatureVector>& rows,
                                    std::span<const int> labels, int num_classes,
                                    const SingleQueryThresholds& thresholds,
                                    const CartParams& tree = {});

// ---------------------------------------------------------------------------
// Dispatcher

struct FinalModel {
  HybridModel hybrid;
  ImputationStats imputation;  // for the full catalog
  StandardizationStats standardization;
  SingleQueryModel single;
  FeatureConfig features;
  std::int64_t dwell_cap_ms = kDefaultDwellCapMs;
  // Training-set cut points mapping each page metric (has-click, click,
  // long-click ratio) onto the label scale; see PageLabelMap.
  std::vector<std::vector<double>> page_label_cuts;
};

struct FinalPrediction {
  int label = 0;
  std::string tag;     // "single" or "hybrid"
  std::string detail;  // rule that fired for single-query sessions
  std::vector<double> scores;
};

// One query -> single-query model; otherwise the hybrid model.
FinalPrediction predict_final(const FinalModel& model, const Session& session,
                              const QueryStatsTable& query_stats);

json final_model_to_json(const FinalModel& model);
FinalModel final_model_from_json(const json& envelope);

// Versioned artifact file I/O. read_final_model throws model.NotFound when the
// file is missing.
void write_final_model(const std::string& path, const FinalModel& model);
FinalModel read_final_model(const std::string& path);

}  // namespace sessat
