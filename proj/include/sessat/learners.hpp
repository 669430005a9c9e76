#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sessat/matrix.hpp"
#include "sessat/preprocess.hpp"

namespace sessat {

using json = nlohmann::json;

// Probability per class; entries in [0, 1] summing to 1.
using LabelDistribution = std::vector<double>;

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

// Shared probabilistic contract of every trained model. Implementations are
// immutable after training and safe to share across threads.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int num_classes() const = 0;
  virtual LabelDistribution predict_proba(std::span<const double> x) const = 0;
  virtual std::string kind() const = 0;
  virtual json structure() const = 0;
  virtual json parameters() const { return json::object(); }

  int predict(std::span<const double> x) const { return argmax(predict_proba(x)); }
};

using ClassifierPtr = std::shared_ptr<const Classifier>;

// ---------------------------------------------------------------------------
// Decision trees

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  std::vector<double> value;  // leaf: class distribution or a single score
  double count = 0.0;         // training row weight reaching the node

  bool is_leaf() const { return feature < 0; }
};

// Index of the leaf reached by x; x[feature] <= threshold goes left.
int descend(const std::vector<TreeNode>& nodes, std::span<const double> x);
json nodes_to_json(const std::vector<TreeNode>& nodes);
std::vector<TreeNode> nodes_from_json(const json& j);

struct CartParams {
  int max_depth = 6;
  double min_leaf = 1.0;
  std::uint64_t seed = 0;
};

class TreeModel : public Classifier {
 public:
  TreeModel(int num_classes, std::vector<TreeNode> nodes, CartParams params = {})
      : num_classes_(num_classes), nodes_(std::move(nodes)), params_(params) {}

  int num_classes() const override { return num_classes_; }
  LabelDistribution predict_proba(std::span<const double> x) const override;
  std::string kind() const override { return "cart"; }
  json structure() const override;
  json parameters() const override;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int depth() const;

  static std::shared_ptr<TreeModel> from_json(const json& structure, const json& parameters);

 private:
  int num_classes_;
  std::vector<TreeNode> nodes_;
  CartParams params_;
};

// Greedy Gini splits. A node becomes a leaf when it is pure, at max_depth, or
// no split leaves min_leaf rows on both sides with a positive impurity decrease.
std::shared_ptr<TreeModel> train_cart(const Matrix& x, std::span<const int> y, int num_classes,
                                      const CartParams& params = {});

// Weighted variant (row multiplicities); used by the forest.
std::shared_ptr<TreeModel> train_cart_weighted(const Matrix& x, std::span<const int> y,
                                               std::span<const double> weights, int num_classes,
                                               const CartParams& params, int max_features);

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
  int n_trees = 100;
  int max_depth = 10;
  double min_leaf = 1.0;
  int max_features = -1;  // per split; -1 = round(sqrt(d)), 0 = all
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

class ForestModel : public Classifier {
 public:
  ForestModel(int num_classes, std::vector<std::shared_ptr<TreeModel>> trees, ForestParams params)
      : num_classes_(num_classes), trees_(std::move(trees)), params_(params) {}

  int num_classes() const override { return num_classes_; }
  LabelDistribution predict_proba(std::span<const double> x) const override;
  std::string kind() const override { return "forest"; }
  json structure() const override;
  json parameters() const override;

  const std::vector<std::shared_ptr<TreeModel>>& trees() const { return trees_; }

  static std::shared_ptr<ForestModel> from_json(const json& structure, const json& parameters);

 private:
  int num_classes_;
  std::vector<std::shared_ptr<TreeModel>> trees_;
  ForestParams params_;
};

std::shared_ptr<ForestModel> train_forest(const Matrix& x, std::span<const int> y,
                                          int num_classes, const ForestParams& params = {});

// ---------------------------------------------------------------------------
// Gradient-boosted trees (softmax objective, second-order leaf values)

struct GbtParams {
  int rounds = 200;
  double learning_rate = 0.1;
  int max_depth = 4;
  double lambda = 1.0;            // L2 on leaf values
  double gamma = 0.0;             // minimum gain to split
  double min_child_weight = 1.0;  // minimum hessian sum per child
  std::uint64_t seed = 0;
};

class BoostedModel : public Classifier {
 public:
  BoostedModel(int num_classes, std::vector<double> base_score,
               std::vector<std::vector<std::vector<TreeNode>>> trees, GbtParams params)
      : num_classes_(num_classes),
        base_score_(std::move(base_score)),
        trees_(std::move(trees)),
        params_(params) {}

  int num_classes() const override { return num_classes_; }
  LabelDistribution predict_proba(std::span<const double> x) const override;
  std::string kind() const override { return "gbt"; }
  json structure() const override;
  json parameters() const override;

  // Raw per-class scores before softmax.
  std::vector<double> margins(std::span<const double> x) const;
  const std::vector<double>& base_score() const { return base_score_; }
  std::size_t rounds() const { return trees_.size(); }
  // Mean training log-loss after each round (index 0 = base score only).
  // Not persisted.
  const std::vector<double>& training_loss() const { return training_loss_; }
  void set_training_loss(std::vector<double> loss) { training_loss_ = std::move(loss); }

  static std::shared_ptr<BoostedModel> from_json(const json& structure, const json& parameters);

 private:
  int num_classes_;
  std::vector<double> base_score_;
  std::vector<std::vector<std::vector<TreeNode>>> trees_;  // [round][class] -> nodes
  GbtParams params_;
  std::vector<double> training_loss_;
};

// Throws learners.EmptyData, learners.NonFiniteGradient.
std::shared_ptr<BoostedModel> train_gbt(const Matrix& x, std::span<const int> y, int num_classes,
                                        const GbtParams& params = {});

// ---------------------------------------------------------------------------
// Linear models

struct Sigmoid {
  // P(positive | margin m) = 1 / (1 + exp(a * m + b))
  double a = -1.0;
  double b = 0.0;
  double operator()(double margin) const;
};

// Platt scaling fitted by Newton's method with backtracking. `positive` marks
// rows of the positive class.
Sigmoid fit_sigmoid(std::span<const double> margins, std::span<const bool> positive);

class LinearModel : public Classifier {
 public:
  enum class Kind { Logistic, Svm };

  // weights: one row per score function over standardized features.
  //   Logistic: num_classes rows, softmax.
  //   Svm, 2 classes: 1 row scoring class 1, calibrated by calibration[0].
  //   Svm, >2 classes: one-vs-rest rows, calibrated then normalized.
  LinearModel(Kind kind, int num_classes, Matrix weights, std::vector<double> bias,
              std::vector<Sigmoid> calibration, StandardizationStats scaling, json params)
      : kind_(kind),
        num_classes_(num_classes),
        weights_(std::move(weights)),
        bias_(std::move(bias)),
        calibration_(std::move(calibration)),
        scaling_(std::move(scaling)),
        params_(std::move(params)) {}

  int num_classes() const override { return num_classes_; }
  LabelDistribution predict_proba(std::span<const double> x) const override;
  std::string kind() const override { return kind_ == Kind::Logistic ? "logreg" : "linsvm"; }
  json structure() const override;
  json parameters() const override { return params_; }

  std::vector<double> margins(std::span<const double> x) const;
  const Matrix& weights() const { return weights_; }
  const std::vector<double>& bias() const { return bias_; }
  const std::vector<Sigmoid>& calibration() const { return calibration_; }

  static std::shared_ptr<LinearModel> from_json(Kind kind, const json& structure,
                                                const json& parameters);

 private:
  Kind kind_;
  int num_classes_;
  Matrix weights_;
  std::vector<double> bias_;
  std::vector<Sigmoid> calibration_;
  StandardizationStats scaling_;
  json params_;
};

struct LogRegParams {
  int epochs = 300;
  double step = 0.5;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
};

// Mean multinomial cross-entropy plus (l2 / 2) ||W||^2 (bias unpenalized) on
// already-standardized features. When `grad_w`/`grad_b` are given they receive
// the analytic gradient.
double logreg_objective(const Matrix& w, std::span<const double> b, const Matrix& z,
                        std::span<const int> y, double l2, Matrix* grad_w,
                        std::vector<double>* grad_b);

// Full-batch gradient descent from zero weights; epochs = 0 returns the
// initial (uniform) model.
std::shared_ptr<LinearModel> train_logreg(const Matrix& x, std::span<const int> y, int num_classes,
                                          const LogRegParams& params = {});

struct SvmParams {
  int epochs = 400;
  double step = 0.5;
  double c = 1.0;
  std::uint64_t seed = 0;
};

// Binary linear SVM on labels {0, 1}: minimizes
//   (1 / (2 C n)) ||w||^2 + mean(max(0, 1 - t (w.z + b))),  t = +1 for label 1,
// by deterministic full-batch subgradient descent, then fits Platt scaling on
// the training margins.
std::shared_ptr<LinearModel> train_linsvm(const Matrix& x, std::span<const int> y,
                                          const SvmParams& params = {});

// One-vs-rest multi-class linear SVM with per-class calibration.
std::shared_ptr<LinearModel> train_linsvm_ovr(const Matrix& x, std::span<const int> y,
                                              int num_classes, const SvmParams& params = {});

// Mean hinge loss of a binary SVM on (x, y).
double hinge_loss(const LinearModel& model, const Matrix& x, std::span<const int> y);

// ---------------------------------------------------------------------------
// Learner selection and persistence

enum class LearnerKind { Cart, Forest, Gbt, LogReg, LinSvm };

const char* to_string(LearnerKind kind);
LearnerKind parse_learner_kind(std::string_view name);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::LinSvm;
  CartParams cart;
  ForestParams forest;
  GbtParams gbt;
  LogRegParams logreg;
  SvmParams svm;
};

// Trains the configured learner. LinSvm with more than two classes trains
// one-vs-rest.
ClassifierPtr train_learner(const LearnerSpec& spec, const Matrix& x, std::span<const int> y,
                            int num_classes);

inline constexpr int kModelFormatVersion = 1;

struct ModelEnvelope {
  std::string model_kind;
  std::vector<int> class_list;
  std::vector<std::string> feature_schema;
  StandardizationStats standardization;
  ImputationStats imputation;
  json parameters;
  json structure;
};

json envelope_to_json(const ModelEnvelope& env);
// Throws model.UnsupportedVersion for a format_version newer than this build
// understands and model.Malformed for structural problems.
ModelEnvelope envelope_from_json(const json& j);

// Classifier <-> {"model_kind", "parameters", "structure"}.
json classifier_to_json(const Classifier& model);
ClassifierPtr classifier_from_json(const json& j);

}  // namespace sessat
