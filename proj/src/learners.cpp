#include "sessat/learners.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "sessat/error.hpp"
#include "sessat/rng.hpp"
#include "sessat/tree_builder.hpp"

namespace sessat {

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

namespace {

void check_training_input(const Matrix& x, std::span<const int> y, int num_classes) {
  if (x.rows() == 0 || y.empty()) throw Error("learners.EmptyData", "no training rows");
  if (x.rows() != y.size()) throw Error("learners.EmptyData", "feature and label counts differ");
  if (num_classes < 1) throw Error("learners.InvalidParams", "num_classes must be positive");
  for (int label : y) {
    if (label < 0 || label >= num_classes) {
      throw Error("learners.InvalidLabel", "label " + std::to_string(label) + " out of range");
    }
  }
}

void softmax_inplace(std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& e : v) {
    e = std::exp(e - m);
    sum += e;
  }
  for (double& e : v) e /= sum;
}

// ---------------------------------------------------------------------------
// Gini criterion. Class weights live in slots [0, kMaxClasses); the last slot
// holds the total.

constexpr int kMaxClasses = 16;
using ClassAcc = std::array<double, kMaxClasses + 1>;

struct GiniCriterion {
  std::span<const int> y;
  int k;

  ClassAcc zero() const { return ClassAcc{}; }
  void add(ClassAcc& a, std::size_t row, double w) const {
    a[static_cast<std::size_t>(y[row])] += w;
    a[kMaxClasses] += w;
  }
  ClassAcc minus(const ClassAcc& a, const ClassAcc& b) const {
    ClassAcc out{};
    for (int c = 0; c < k; ++c) out[c] = a[c] - b[c];
    out[kMaxClasses] = a[kMaxClasses] - b[kMaxClasses];
    return out;
  }
  double weight(const ClassAcc& a) const { return a[kMaxClasses]; }
  bool splittable(const ClassAcc& a) const {
    int present = 0;
    for (int c = 0; c < k; ++c) present += a[c] > 0.0 ? 1 : 0;
    return present > 1;
  }
  // Weighted impurity: W * gini = W - sum(w_c^2) / W.
  double impurity(const ClassAcc& a) const {
    const double w = a[kMaxClasses];
    if (w <= 0.0) return 0.0;
    double sq = 0.0;
    for (int c = 0; c < k; ++c) sq += a[c] * a[c];
    return w - sq / w;
  }
  double gain(const ClassAcc& parent, const ClassAcc& left, const ClassAcc& right) const {
    return impurity(parent) - impurity(left) - impurity(right);
  }
  bool accept(double g) const { return g > 1e-12; }
};

struct GradAcc {
  double g = 0.0;
  double h = 0.0;
};

struct BoostCriterion {
  std::span<const double> grad;
  std::span<const double> hess;
  double lambda;
  double gamma;

  GradAcc zero() const { return {}; }
  void add(GradAcc& a, std::size_t row, double w) const {
    a.g += w * grad[row];
    a.h += w * hess[row];
  }
  GradAcc minus(const GradAcc& a, const GradAcc& b) const { return {a.g - b.g, a.h - b.h}; }
  double weight(const GradAcc& a) const { return a.h; }
  bool splittable(const GradAcc&) const { return true; }
  double score(const GradAcc& a) const { return a.g * a.g / (a.h + lambda); }
  double gain(const GradAcc& parent, const GradAcc& left, const GradAcc& right) const {
    return 0.5 * (score(left) + score(right) - score(parent)) - gamma;
  }
  bool accept(double g) const { return g > 0.0; }
};

std::vector<TreeNode> to_class_nodes(const detail::GrownTree<ClassAcc>& grown, int k) {
  std::vector<TreeNode> nodes(grown.nodes.size());
  for (std::size_t i = 0; i < grown.nodes.size(); ++i) {
    const auto& g = grown.nodes[i];
    TreeNode& n = nodes[i];
    n.feature = g.feature;
    n.threshold = g.threshold;
    n.left = g.left;
    n.right = g.right;
    n.count = g.stats[kMaxClasses];
    if (g.feature < 0) {
      n.value.assign(static_cast<std::size_t>(k), 0.0);
      for (int c = 0; c < k; ++c) n.value[static_cast<std::size_t>(c)] = g.stats[c] / n.count;
    }
  }
  return nodes;
}

int resolve_max_features(int requested, std::size_t d) {
  if (requested < 0) {
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
    return std::max(1, r);
  }
  return requested;
}

json sigmoid_to_json(const Sigmoid& s) { return json::array({s.a, s.b}); }

Matrix matrix_from_json(const json& j) {
  Matrix m;
  for (const auto& row : j) {
    std::vector<double> r = row.get<std::vector<double>>();
    m.append_row(r);
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Trees

int descend(const std::vector<TreeNode>& nodes, std::span<const double> x) {
  int id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    id = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return id;
}

json nodes_to_json(const std::vector<TreeNode>& nodes) {
  json out = json::array();
  for (const TreeNode& n : nodes) {
    json j;
    if (n.is_leaf()) {
      j["v"] = n.value;
      j["n"] = n.count;
    } else {
      j["f"] = n.feature;
      j["t"] = n.threshold;
      j["l"] = n.left;
      j["r"] = n.right;
      j["n"] = n.count;
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<TreeNode> nodes_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw Error("model.Malformed", "tree has no nodes");
  std::vector<TreeNode> nodes;
  nodes.reserve(j.size());
  for (const auto& e : j) {
    TreeNode n;
    n.count = e.value("n", 0.0);
    if (e.contains("f")) {
      n.feature = e.at("f").get<int>();
      n.threshold = e.at("t").get<double>();
      n.left = e.at("l").get<int>();
      n.right = e.at("r").get<int>();
    } else {
      n.value = e.at("v").get<std::vector<double>>();
    }
    nodes.push_back(std::move(n));
  }
  const int size = static_cast<int>(nodes.size());
  for (const TreeNode& n : nodes) {
    if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size)) {
      throw Error("model.Malformed", "tree child index out of range");
    }
  }
  return nodes;
}

LabelDistribution TreeModel::predict_proba(std::span<const double> x) const {
  return nodes_[static_cast<std::size_t>(descend(nodes_, x))].value;
}

int TreeModel::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& n = nodes_[i];
    if (n.is_leaf()) continue;
    d[static_cast<std::size_t>(n.left)] = d[i] + 1;
    d[static_cast<std::size_t>(n.right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

json TreeModel::structure() const { return {{"nodes", nodes_to_json(nodes_)}}; }

json TreeModel::parameters() const {
  return {{"max_depth", params_.max_depth}, {"min_leaf", params_.min_leaf}, {"seed", params_.seed},
          {"num_classes", num_classes_}};
}

std::shared_ptr<TreeModel> TreeModel::from_json(const json& structure, const json& parameters) {
  CartParams p;
  p.max_depth = parameters.value("max_depth", p.max_depth);
  p.min_leaf = parameters.value("min_leaf", p.min_leaf);
  p.seed = parameters.value("seed", p.seed);
  const int k = parameters.at("num_classes").get<int>();
  return std::make_shared<TreeModel>(k, nodes_from_json(structure.at("nodes")), p);
}

namespace {

std::shared_ptr<TreeModel> grow_cart(const Matrix& x, const detail::SortedColumns& cols,
                                     std::span<const int> y, std::span<const double> weights,
                                     int num_classes, const CartParams& params,
                                     int max_features) {
  if (num_classes > kMaxClasses) {
    throw Error("learners.InvalidParams", "at most 16 classes are supported by trees");
  }
  detail::GrowParams gp;
  gp.max_depth = params.max_depth;
  gp.min_leaf = params.min_leaf;
  gp.max_features = max_features;
  gp.seed = params.seed;
  GiniCriterion crit{y, num_classes};
  auto grown = detail::grow_tree(x, cols, weights, crit, gp);
  return std::make_shared<TreeModel>(num_classes, to_class_nodes(grown, num_classes), params);
}

}  // namespace

std::shared_ptr<TreeModel> train_cart(const Matrix& x, std::span<const int> y, int num_classes,
                                      const CartParams& params) {
  std::vector<double> w(y.size(), 1.0);
  return train_cart_weighted(x, y, w, num_classes, params, 0);
}

std::shared_ptr<TreeModel> train_cart_weighted(const Matrix& x, std::span<const int> y,
                                               std::span<const double> weights, int num_classes,
                                               const CartParams& params, int max_features) {
  check_training_input(x, y, num_classes);
  const auto cols = detail::presort(x);
  return grow_cart(x, cols, y, weights, num_classes, params, max_features);
}

// ---------------------------------------------------------------------------
// Forest

LabelDistribution ForestModel::predict_proba(std::span<const double> x) const {
  LabelDistribution out(static_cast<std::size_t>(num_classes_), 0.0);
  for (const auto& t : trees_) {
    const auto& v = t->nodes()[static_cast<std::size_t>(descend(t->nodes(), x))].value;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += v[c];
  }
  for (double& p : out) p /= static_cast<double>(trees_.size());
  return out;
}

json ForestModel::structure() const {
  json trees = json::array();
  for (const auto& t : trees_) trees.push_back(nodes_to_json(t->nodes()));
  return {{"trees", trees}};
}

json ForestModel::parameters() const {
  return {{"n_trees", params_.n_trees},         {"max_depth", params_.max_depth},
          {"min_leaf", params_.min_leaf},       {"max_features", params_.max_features},
          {"bootstrap", params_.bootstrap},     {"seed", params_.seed},
          {"num_classes", num_classes_}};
}

std::shared_ptr<ForestModel> ForestModel::from_json(const json& structure,
                                                    const json& parameters) {
  ForestParams p;
  p.n_trees = parameters.value("n_trees", p.n_trees);
  p.max_depth = parameters.value("max_depth", p.max_depth);
  p.min_leaf = parameters.value("min_leaf", p.min_leaf);
  p.max_features = parameters.value("max_features", p.max_features);
  p.bootstrap = parameters.value("bootstrap", p.bootstrap);
  p.seed = parameters.value("seed", p.seed);
  const int k = parameters.at("num_classes").get<int>();
  CartParams cp{p.max_depth, p.min_leaf, p.seed};
  std::vector<std::shared_ptr<TreeModel>> trees;
  for (const auto& t : structure.at("trees")) {
    trees.push_back(std::make_shared<TreeModel>(k, nodes_from_json(t), cp));
  }
  if (trees.empty()) throw Error("model.Malformed", "forest has no trees");
  return std::make_shared<ForestModel>(k, std::move(trees), p);
}

std::shared_ptr<ForestModel> train_forest(const Matrix& x, std::span<const int> y,
                                          int num_classes, const ForestParams& params) {
  check_training_input(x, y, num_classes);
  if (params.n_trees < 1) throw Error("learners.InvalidParams", "n_trees must be positive");
  const auto cols = detail::presort(x);
  const std::size_t n = x.rows();
  const int mf = resolve_max_features(params.max_features, x.cols());
  std::vector<std::shared_ptr<TreeModel>> trees;
  trees.reserve(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng = Rng::substream(params.seed, static_cast<std::uint64_t>(t));
    std::vector<double> w(n, 1.0);
    if (params.bootstrap) {
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) w[rng.index(n)] += 1.0;
    }
    CartParams cp{params.max_depth, params.min_leaf, rng.next_u64()};
    trees.push_back(grow_cart(x, cols, y, w, num_classes, cp, mf));
  }
  return std::make_shared<ForestModel>(num_classes, std::move(trees), params);
}

// ---------------------------------------------------------------------------
// Boosting

std::vector<double> BoostedModel::margins(std::span<const double> x) const {
  std::vector<double> f = base_score_;
  for (const auto& round : trees_) {
    for (std::size_t c = 0; c < round.size(); ++c) {
      f[c] += round[c][static_cast<std::size_t>(descend(round[c], x))].value[0];
    }
  }
  return f;
}

LabelDistribution BoostedModel::predict_proba(std::span<const double> x) const {
  std::vector<double> f = margins(x);
  softmax_inplace(f);
  return f;
}

json BoostedModel::structure() const {
  json rounds = json::array();
  for (const auto& round : trees_) {
    json r = json::array();
    for (const auto& t : round) r.push_back(nodes_to_json(t));
    rounds.push_back(std::move(r));
  }
  return {{"base_score", base_score_}, {"rounds", rounds}};
}

json BoostedModel::parameters() const {
  return {{"rounds", params_.rounds},
          {"learning_rate", params_.learning_rate},
          {"max_depth", params_.max_depth},
          {"lambda", params_.lambda},
          {"gamma", params_.gamma},
          {"min_child_weight", params_.min_child_weight},
          {"seed", params_.seed},
          {"num_classes", num_classes_}};
}

std::shared_ptr<BoostedModel> BoostedModel::from_json(const json& structure,
                                                      const json& parameters) {
  GbtParams p;
  p.rounds = parameters.value("rounds", p.rounds);
  p.learning_rate = parameters.value("learning_rate", p.learning_rate);
  p.max_depth = parameters.value("max_depth", p.max_depth);
  p.lambda = parameters.value("lambda", p.lambda);
  p.gamma = parameters.value("gamma", p.gamma);
  p.min_child_weight = parameters.value("min_child_weight", p.min_child_weight);
  p.seed = parameters.value("seed", p.seed);
  const int k = parameters.at("num_classes").get<int>();
  auto base = structure.at("base_score").get<std::vector<double>>();
  if (base.size() != static_cast<std::size_t>(k)) {
    throw Error("model.Malformed", "base score length differs from class count");
  }
  std::vector<std::vector<std::vector<TreeNode>>> trees;
  for (const auto& r : structure.at("rounds")) {
    std::vector<std::vector<TreeNode>> round;
    for (const auto& t : r) round.push_back(nodes_from_json(t));
    if (round.size() != static_cast<std::size_t>(k)) {
      throw Error("model.Malformed", "round tree count differs from class count");
    }
    trees.push_back(std::move(round));
  }
  return std::make_shared<BoostedModel>(k, std::move(base), std::move(trees), p);
}

std::shared_ptr<BoostedModel> train_gbt(const Matrix& x, std::span<const int> y, int num_classes,
                                        const GbtParams& params) {
  check_training_input(x, y, num_classes);
  if (num_classes < 2) throw Error("learners.InvalidParams", "boosting needs at least 2 classes");
  const std::size_t n = x.rows();
  const auto k = static_cast<std::size_t>(num_classes);

  std::vector<double> prior(k, 0.0);
  for (int label : y) prior[static_cast<std::size_t>(label)] += 1.0;
  std::vector<double> base(k);
  for (std::size_t c = 0; c < k; ++c) {
    base[c] = std::log(std::max(prior[c] / static_cast<double>(n), 1e-6));
  }

  const auto cols = detail::presort(x);
  std::vector<double> scores(n * k);
  for (std::size_t r = 0; r < n; ++r) std::copy(base.begin(), base.end(), scores.begin() + r * k);
  std::vector<double> probs(n * k);
  const std::vector<double> ones(n, 1.0);
  std::vector<double> grad(n), hess(n);

  auto refresh = [&]() {
    double loss = 0.0;
    std::vector<double> p(k);
    for (std::size_t r = 0; r < n; ++r) {
      std::copy(scores.begin() + r * k, scores.begin() + (r + 1) * k, p.begin());
      softmax_inplace(p);
      std::copy(p.begin(), p.end(), probs.begin() + r * k);
      loss -= std::log(std::max(p[static_cast<std::size_t>(y[r])], 1e-300));
    }
    return loss / static_cast<double>(n);
  };

  detail::GrowParams gp;
  gp.max_depth = params.max_depth;
  gp.min_leaf = params.min_child_weight;
  gp.seed = params.seed;

  std::vector<double> losses;
  losses.push_back(refresh());
  std::vector<std::vector<std::vector<TreeNode>>> trees;
  trees.reserve(static_cast<std::size_t>(std::max(params.rounds, 0)));
  for (int m = 0; m < params.rounds; ++m) {
    std::vector<std::vector<TreeNode>> round(k);
    std::vector<double> delta(n * k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t r = 0; r < n; ++r) {
        const double p = probs[r * k + c];
        grad[r] = p - (static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0);
        hess[r] = std::max(p * (1.0 - p), 1e-16);
        if (!std::isfinite(grad[r]) || !std::isfinite(hess[r])) {
          throw Error("learners.NonFiniteGradient",
                      "round " + std::to_string(m) + ", class " + std::to_string(c) + ", row " +
                          std::to_string(r));
        }
      }
      BoostCriterion crit{grad, hess, params.lambda, params.gamma};
      auto grown = detail::grow_tree(x, cols, ones, crit, gp);
      std::vector<TreeNode> nodes(grown.nodes.size());
      for (std::size_t i = 0; i < grown.nodes.size(); ++i) {
        const auto& g = grown.nodes[i];
        TreeNode& t = nodes[i];
        t.feature = g.feature;
        t.threshold = g.threshold;
        t.left = g.left;
        t.right = g.right;
        t.count = g.stats.h;
        if (g.feature < 0) {
          t.value = {-params.learning_rate * g.stats.g / (g.stats.h + params.lambda)};
        }
      }
      for (std::size_t r = 0; r < n; ++r) {
        delta[r * k + c] = nodes[static_cast<std::size_t>(grown.leaf_of_row[r])].value[0];
      }
      round[c] = std::move(nodes);
    }
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += delta[i];
    losses.push_back(refresh());
    trees.push_back(std::move(round));
  }
  auto model = std::make_shared<BoostedModel>(num_classes, std::move(base), std::move(trees), params);
  model->set_training_loss(std::move(losses));
  return model;
}

// ---------------------------------------------------------------------------
// Linear models

double Sigmoid::operator()(double margin) const {
  const double e = a * margin + b;
  // Stable in both tails.
  if (e >= 0.0) {
    const double t = std::exp(-e);
    return t / (1.0 + t);
  }
  return 1.0 / (1.0 + std::exp(e));
}

Sigmoid fit_sigmoid(std::span<const double> margins, std::span<const bool> positive) {
  // Newton's method with backtracking on the regularized-target log-likelihood.
  const std::size_t n = margins.size();
  double n_pos = 0.0, n_neg = 0.0;
  for (bool p : positive) (p ? n_pos : n_neg) += 1.0;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = positive[i] ? hi : lo;

  double a = 0.0;
  double b = std::log((n_neg + 1.0) / (n_pos + 1.0));
  auto objective = [&](double aa, double bb) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = margins[i] * aa + bb;
      if (e >= 0.0) {
        f += t[i] * e + std::log1p(std::exp(-e));
      } else {
        f += (t[i] - 1.0) * e + std::log1p(std::exp(e));
      }
    }
    return f;
  };
  double f = objective(a, b);
  constexpr double kSigma = 1e-12;
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = margins[i] * a + b;
      double p, q;
      if (e >= 0.0) {
        p = std::exp(-e) / (1.0 + std::exp(-e));
        q = 1.0 / (1.0 + std::exp(-e));
      } else {
        p = 1.0 / (1.0 + std::exp(e));
        q = std::exp(e) / (1.0 + std::exp(e));
      }
      const double d2 = p * q;
      h11 += margins[i] * margins[i] * d2;
      h22 += d2;
      h21 += margins[i] * d2;
      const double d1 = t[i] - p;
      g1 += margins[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-10) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < f + 1e-4 * step * gd) {
        a = na;
        b = nb;
        f = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) break;
  }
  return {a, b};
}

std::vector<double> LinearModel::margins(std::span<const double> x) const {
  const std::size_t d = weights_.cols();
  std::vector<double> z(d);
  for (std::size_t j = 0; j < d; ++j) z[j] = (x[j] - scaling_.mean[j]) / scaling_.stddev[j];
  std::vector<double> out(weights_.rows());
  for (std::size_t r = 0; r < weights_.rows(); ++r) {
    double s = bias_[r];
    for (std::size_t j = 0; j < d; ++j) s += weights_(r, j) * z[j];
    out[r] = s;
  }
  return out;
}

LabelDistribution LinearModel::predict_proba(std::span<const double> x) const {
  std::vector<double> m = margins(x);
  if (kind_ == Kind::Logistic) {
    softmax_inplace(m);
    return m;
  }
  if (num_classes_ == 2 && m.size() == 1) {
    const double p = calibration_[0](m[0]);
    return {1.0 - p, p};
  }
  LabelDistribution out(m.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < m.size(); ++c) {
    out[c] = calibration_[c](m[c]);
    sum += out[c];
  }
  if (sum <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
  } else {
    for (double& p : out) p /= sum;
  }
  return out;
}

json LinearModel::structure() const {
  json cal = json::array();
  for (const auto& s : calibration_) cal.push_back(sigmoid_to_json(s));
  return {{"weights", matrix_to_json(weights_)},
          {"bias", bias_},
          {"calibration", cal},
          {"scaling", {{"mean", scaling_.mean}, {"stddev", scaling_.stddev}}},
          {"num_classes", num_classes_}};
}

std::shared_ptr<LinearModel> LinearModel::from_json(Kind kind, const json& structure,
                                                    const json& parameters) {
  Matrix w = matrix_from_json(structure.at("weights"));
  auto b = structure.at("bias").get<std::vector<double>>();
  std::vector<Sigmoid> cal;
  for (const auto& s : structure.at("calibration")) {
    cal.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  }
  StandardizationStats sc;
  sc.mean = structure.at("scaling").at("mean").get<std::vector<double>>();
  sc.stddev = structure.at("scaling").at("stddev").get<std::vector<double>>();
  const int k = structure.at("num_classes").get<int>();
  if (b.size() != w.rows() || sc.mean.size() != w.cols() || sc.stddev.size() != w.cols()) {
    throw Error("model.Malformed", "linear model dimensions disagree");
  }
  if (kind == Kind::Svm && cal.size() != w.rows()) {
    throw Error("model.Malformed", "calibration count differs from score rows");
  }
  return std::make_shared<LinearModel>(kind, k, std::move(w), std::move(b), std::move(cal),
                                       std::move(sc), parameters);
}

namespace {

Matrix standardize(const Matrix& x, const StandardizationStats& s) {
  Matrix z(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) z(r, c) = (x(r, c) - s.mean[c]) / s.stddev[c];
  }
  return z;
}

}  // namespace

double logreg_objective(const Matrix& w, std::span<const double> b, const Matrix& z,
                        std::span<const int> y, double l2, Matrix* grad_w,
                        std::vector<double>* grad_b) {
  const std::size_t k = w.rows();
  const std::size_t d = w.cols();
  const std::size_t n = z.rows();
  if (grad_w) *grad_w = Matrix(k, d, 0.0);
  if (grad_b) grad_b->assign(k, 0.0);
  double loss = 0.0;
  std::vector<double> p(k);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < k; ++c) {
      double s = b[c];
      for (std::size_t j = 0; j < d; ++j) s += w(c, j) * row[j];
      p[c] = s;
    }
    const double m = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& e : p) {
      e = std::exp(e - m);
      sum += e;
    }
    const auto yc = static_cast<std::size_t>(y[r]);
    loss -= std::log(p[yc] / sum);
    for (std::size_t c = 0; c < k; ++c) {
      const double err = p[c] / sum - (c == yc ? 1.0 : 0.0);
      if (grad_w) {
        for (std::size_t j = 0; j < d; ++j) (*grad_w)(c, j) += err * row[j];
      }
      if (grad_b) (*grad_b)[c] += err;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;
  double reg = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) reg += w(c, j) * w(c, j);
  }
  loss += 0.5 * l2 * reg;
  if (grad_w) {
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < d; ++j) {
        (*grad_w)(c, j) = (*grad_w)(c, j) * inv_n + l2 * w(c, j);
      }
    }
  }
  if (grad_b) {
    for (double& g : *grad_b) g *= inv_n;
  }
  return loss;
}

std::shared_ptr<LinearModel> train_logreg(const Matrix& x, std::span<const int> y, int num_classes,
                                          const LogRegParams& params) {
  check_training_input(x, y, num_classes);
  const auto k = static_cast<std::size_t>(num_classes);
  StandardizationStats s = fit_standardization(x);
  const Matrix z = standardize(x, s);
  Matrix w(k, x.cols(), 0.0);
  std::vector<double> b(k, 0.0);
  Matrix gw;
  std::vector<double> gb;
  for (int e = 0; e < params.epochs; ++e) {
    logreg_objective(w, b, z, y, params.l2, &gw, &gb);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < x.cols(); ++j) w(c, j) -= params.step * gw(c, j);
      b[c] -= params.step * gb[c];
    }
  }
  json p = {{"epochs", params.epochs}, {"step", params.step}, {"l2", params.l2},
            {"seed", params.seed}};
  return std::make_shared<LinearModel>(LinearModel::Kind::Logistic, num_classes, std::move(w),
                                       std::move(b), std::vector<Sigmoid>{}, std::move(s), p);
}

namespace {

struct BinarySvm {
  std::vector<double> w;
  double b = 0.0;
};

// t[r] in {-1, +1}; z standardized.
BinarySvm fit_hinge(const Matrix& z, std::span<const double> t, const SvmParams& params) {
  const std::size_t n = z.rows();
  const std::size_t d = z.cols();
  const double lambda = 1.0 / (params.c * static_cast<double>(n));
  BinarySvm cur{std::vector<double>(d, 0.0), 0.0};
  BinarySvm best = cur;
  auto objective = [&](const BinarySvm& m, std::vector<double>* gw, double* gb) {
    double hinge = 0.0;
    if (gw) gw->assign(d, 0.0);
    if (gb) *gb = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      auto row = z.row(r);
      double s = m.b;
      for (std::size_t j = 0; j < d; ++j) s += m.w[j] * row[j];
      const double margin = t[r] * s;
      if (margin < 1.0) {
        hinge += 1.0 - margin;
        if (gw) {
          for (std::size_t j = 0; j < d; ++j) (*gw)[j] -= t[r] * row[j];
        }
        if (gb) *gb -= t[r];
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double reg = 0.0;
    for (double v : m.w) reg += v * v;
    if (gw) {
      for (std::size_t j = 0; j < d; ++j) (*gw)[j] = (*gw)[j] * inv_n + lambda * m.w[j];
    }
    if (gb) *gb *= inv_n;
    return 0.5 * lambda * reg + hinge * inv_n;
  };
  std::vector<double> gw;
  double gb = 0.0;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int e = 0; e <= params.epochs; ++e) {
    const double obj = objective(cur, e < params.epochs ? &gw : nullptr, &gb);
    if (obj < best_obj) {
      best_obj = obj;
      best = cur;
    }
    if (e == params.epochs) break;
    const double eta = params.step / std::sqrt(static_cast<double>(e) + 1.0);
    for (std::size_t j = 0; j < d; ++j) cur.w[j] -= eta * gw[j];
    cur.b -= eta * gb;
  }
  return best;
}

Sigmoid calibrate(const Matrix& z, const BinarySvm& m, std::span<const double> t) {
  std::vector<double> margins(z.rows());
  std::vector<char> pos(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    double s = m.b;
    for (std::size_t j = 0; j < row.size(); ++j) s += m.w[j] * row[j];
    margins[r] = s;
    pos[r] = t[r] > 0.0;
  }
  // std::vector<bool> has no contiguous storage; copy through a plain array.
  std::unique_ptr<bool[]> flags(new bool[pos.size()]);
  for (std::size_t i = 0; i < pos.size(); ++i) flags[i] = pos[i] != 0;
  return fit_sigmoid(margins, std::span<const bool>(flags.get(), pos.size()));
}

json svm_params_json(const SvmParams& p) {
  return {{"epochs", p.epochs}, {"step", p.step}, {"c", p.c}, {"seed", p.seed}};
}

}  // namespace

std::shared_ptr<LinearModel> train_linsvm(const Matrix& x, std::span<const int> y,
                                          const SvmParams& params) {
  check_training_input(x, y, 2);
  StandardizationStats s = fit_standardization(x);
  const Matrix z = standardize(x, s);
  std::vector<double> t(y.size());
  for (std::size_t r = 0; r < y.size(); ++r) t[r] = y[r] == 1 ? 1.0 : -1.0;
  BinarySvm m = fit_hinge(z, t, params);
  Sigmoid sig = calibrate(z, m, t);
  Matrix w(1, x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) w(0, j) = m.w[j];
  return std::make_shared<LinearModel>(LinearModel::Kind::Svm, 2, std::move(w),
                                       std::vector<double>{m.b}, std::vector<Sigmoid>{sig},
                                       std::move(s), svm_params_json(params));
}

std::shared_ptr<LinearModel> train_linsvm_ovr(const Matrix& x, std::span<const int> y,
                                              int num_classes, const SvmParams& params) {
  check_training_input(x, y, num_classes);
  StandardizationStats s = fit_standardization(x);
  const Matrix z = standardize(x, s);
  const auto k = static_cast<std::size_t>(num_classes);
  Matrix w(k, x.cols());
  std::vector<double> b(k);
  std::vector<Sigmoid> cal(k);
  std::vector<double> t(y.size());
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < y.size(); ++r) {
      t[r] = static_cast<std::size_t>(y[r]) == c ? 1.0 : -1.0;
    }
    BinarySvm m = fit_hinge(z, t, params);
    for (std::size_t j = 0; j < x.cols(); ++j) w(c, j) = m.w[j];
    b[c] = m.b;
    cal[c] = calibrate(z, m, t);
  }
  return std::make_shared<LinearModel>(LinearModel::Kind::Svm, num_classes, std::move(w),
                                       std::move(b), std::move(cal), std::move(s),
                                       svm_params_json(params));
}

double hinge_loss(const LinearModel& model, const Matrix& x, std::span<const int> y) {
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double m = model.margins(x.row(r))[0];
    const double t = y[r] == 1 ? 1.0 : -1.0;
    total += std::max(0.0, 1.0 - t * m);
  }
  return x.rows() ? total / static_cast<double>(x.rows()) : 0.0;
}

// ---------------------------------------------------------------------------
// Selection and persistence

const char* to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::Cart: return "cart";
    case LearnerKind::Forest: return "forest";
    case LearnerKind::Gbt: return "gbt";
    case LearnerKind::LogReg: return "logreg";
    case LearnerKind::LinSvm: return "linsvm";
  }
  return "?";
}

LearnerKind parse_learner_kind(std::string_view name) {
  for (LearnerKind k : {LearnerKind::Cart, LearnerKind::Forest, LearnerKind::Gbt,
                        LearnerKind::LogReg, LearnerKind::LinSvm}) {
    if (name == to_string(k)) return k;
  }
  throw Error("config.UnknownLearner", "unknown learner '" + std::string(name) + "'");
}

ClassifierPtr train_learner(const LearnerSpec& spec, const Matrix& x, std::span<const int> y,
                            int num_classes) {
  switch (spec.kind) {
    case LearnerKind::Cart: return train_cart(x, y, num_classes, spec.cart);
    case LearnerKind::Forest: return train_forest(x, y, num_classes, spec.forest);
    case LearnerKind::Gbt: return train_gbt(x, y, num_classes, spec.gbt);
    case LearnerKind::LogReg: return train_logreg(x, y, num_classes, spec.logreg);
    case LearnerKind::LinSvm:
      if (num_classes == 2) return train_linsvm(x, y, spec.svm);
      return train_linsvm_ovr(x, y, num_classes, spec.svm);
  }
  throw Error("config.UnknownLearner", "unhandled learner kind");
}

json envelope_to_json(const ModelEnvelope& env) {
  json j;
  j["format_version"] = kModelFormatVersion;
  j["model_kind"] = env.model_kind;
  j["class_list"] = env.class_list;
  j["feature_schema"] = env.feature_schema;
  j["standardization_stats"] = {{"mean", env.standardization.mean},
                                {"stddev", env.standardization.stddev}};
  j["imputation_stats"] = {{"medians", env.imputation.medians}};
  j["parameters"] = env.parameters;
  j["structure"] = env.structure;
  return j;
}

ModelEnvelope envelope_from_json(const json& j) {
  if (!j.is_object() || !j.contains("format_version")) {
    throw Error("model.Malformed", "missing format_version");
  }
  if (!j.at("format_version").is_number_integer()) {
    throw Error("model.Malformed", "format_version must be an integer");
  }
  const int version = j.at("format_version").get<int>();
  if (version > kModelFormatVersion) {
    throw Error("model.UnsupportedVersion",
                "artifact format_version " + std::to_string(version) +
                    " is newer than supported version " + std::to_string(kModelFormatVersion));
  }
  if (version < 1) throw Error("model.Malformed", "invalid format_version");
  try {
    ModelEnvelope env;
    env.model_kind = j.at("model_kind").get<std::string>();
    env.class_list = j.at("class_list").get<std::vector<int>>();
    env.feature_schema = j.at("feature_schema").get<std::vector<std::string>>();
    env.standardization.mean = j.at("standardization_stats").at("mean").get<std::vector<double>>();
    env.standardization.stddev =
        j.at("standardization_stats").at("stddev").get<std::vector<double>>();
    env.imputation.medians = j.at("imputation_stats").at("medians").get<std::vector<double>>();
    env.parameters = j.at("parameters");
    env.structure = j.at("structure");
    return env;
  } catch (const json::exception& e) {
    throw Error("model.Malformed", e.what());
  }
}

json classifier_to_json(const Classifier& model) {
  return {{"model_kind", model.kind()},
          {"parameters", model.parameters()},
          {"structure", model.structure()}};
}

ClassifierPtr classifier_from_json(const json& j) {
  try {
    const std::string kind = j.at("model_kind").get<std::string>();
    const json& s = j.at("structure");
    const json& p = j.at("parameters");
    if (kind == "cart") return TreeModel::from_json(s, p);
    if (kind == "forest") return ForestModel::from_json(s, p);
    if (kind == "gbt") return BoostedModel::from_json(s, p);
    if (kind == "logreg") return LinearModel::from_json(LinearModel::Kind::Logistic, s, p);
    if (kind == "linsvm") return LinearModel::from_json(LinearModel::Kind::Svm, s, p);
    throw Error("model.Malformed", "unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error("model.Malformed", e.what());
  }
}

}  // namespace sessat
