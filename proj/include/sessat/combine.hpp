#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sessat/learners.hpp"
#include "sessat/preprocess.hpp"

namespace sessat {

// Binary classifier for labels i < j. Class 0 of `model` is i, class 1 is j.
struct PairEntry {
  int i = 0;
  int j = 1;
  ClassifierPtr model;
  // Validation scores of the pair task, macro-averaged over its two labels.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

class PairwiseBank {
 public:
  PairwiseBank() = default;
  // Entries may come in any order; exactly one per pair i < j is required.
  PairwiseBank(int num_classes, std::vector<PairEntry> entries);

  int num_classes() const { return num_classes_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<PairEntry>& entries() const { return entries_; }
  const PairEntry& at(int i, int j) const;

  // Probability of label a in the a-vs-b classifier (a != b, either order).
  double prob(int a, int b, std::span<const double> x) const;
  // All pairwise probabilities at x: m[a][b] = prob(a, b, x), diagonal 0.
  std::vector<std::vector<double>> prob_matrix(std::span<const double> x) const;

  json to_json() const;
  static PairwiseBank from_json(const json& j);

 private:
  std::size_t index(int i, int j) const;

  int num_classes_ = 0;
  std::vector<PairEntry> entries_;  // sorted by (i, j)
};

struct BankParams {
  LearnerSpec learner;  // linear SVM unless configured otherwise
  std::size_t min_pair_rows = 5;  // per label of the pair
};

// One classifier per label pair, trained on the rows of those two labels and
// scored on the matching rows of `valid`. Throws
// combine.InsufficientPairData when a label of some pair has fewer than
// min_pair_rows training rows.
PairwiseBank train_pairwise_bank(const Matrix& x, std::span<const int> y, const Matrix& valid_x,
                                 std::span<const int> valid_y, int num_classes,
                                 const BankParams& params = {});

struct OvoResult {
  int label = 0;
  std::vector<int> votes;
  std::vector<double> mass;  // summed pairwise probability per label
};

// Majority vote; ties go to the larger probability mass, then the lower label.
OvoResult predict_ovo(const PairwiseBank& bank, std::span<const double> x);

// Per-label binary classifiers; class 1 of models[c] means "label c".
struct OvrModels {
  std::vector<ClassifierPtr> models;
};

// Each label-vs-rest task is rebalanced by oversampling before training.
OvrModels train_ovr(const LabeledDataset& train, int num_classes, const LearnerSpec& learner,
                    std::uint64_t seed);

struct OvrResult {
  int label = 0;
  std::vector<double> positive;  // per-label positive probability
};

OvrResult predict_ovr(const OvrModels& models, std::span<const double> x);

// ---------------------------------------------------------------------------
// Decision DAGs

enum class DagVariant { Classic, SatDissat };

const char* to_string(DagVariant v);

struct DagNode {
  int leaf_label = -1;    // >= 0 for a leaf
  std::vector<int> a, b;  // label sides tested at a decision node
  int pair_i = -1, pair_j = -1;  // bank pair used, or -1 for a grouped classifier
  ClassifierPtr model;    // class 0 = side a
  int child_a = -1;       // followed when P(a) >= 0.5
  int child_b = -1;

  bool is_leaf() const { return leaf_label >= 0; }
};

struct DagSpec {
  DagVariant variant = DagVariant::Classic;
  int num_classes = 0;
  int root = 0;
  std::vector<DagNode> nodes;

  json to_json() const;
  // Bank-backed nodes are re-linked to `bank`.
  static DagSpec from_json(const json& j, const PairwiseBank& bank);
};

struct DagStep {
  int node = 0;
  std::vector<int> a, b;
  double p_a = 0.0;
  bool chose_a = false;
};

struct DagResult {
  int label = 0;
  std::vector<DagStep> trace;
};

// Label-elimination DAG. At each remaining label set, the pair with the best
// validation F1 (ties: lowest (i, j)) is tested and its losing label removed,
// so the root is the best pair overall.
DagSpec build_classic_dag(const PairwiseBank& bank);

// Root: grouped classifier {0,1} vs {2,3}; children: bank pairs (0,1), (2,3).
DagSpec build_sat_dissat_dag(const PairwiseBank& bank, ClassifierPtr root);

// Trains the grouped root on labels collapsed to {0,1} -> 0, {2,3} -> 1.
ClassifierPtr train_sat_dissat_root(const Matrix& x, std::span<const int> y,
                                    const LearnerSpec& learner);

DagResult predict_dag(const DagSpec& spec, std::span<const double> x);

}  // namespace sessat
