#include "sessat/combine.hpp"

#include <algorithm>
#include <map>

#include "sessat/error.hpp"

namespace sessat {

PairwiseBank::PairwiseBank(int num_classes, std::vector<PairEntry> entries)
    : num_classes_(num_classes), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const PairEntry& l, const PairEntry& r) {
    return std::tie(l.i, l.j) < std::tie(r.i, r.j);
  });
  const std::size_t expected =
      static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes - 1) / 2;
  if (entries_.size() != expected) {
    throw Error("combine.InvalidBank", "expected " + std::to_string(expected) +
                                           " pairwise classifiers, got " +
                                           std::to_string(entries_.size()));
  }
  std::size_t k = 0;
  for (int i = 0; i < num_classes; ++i) {
    for (int j = i + 1; j < num_classes; ++j, ++k) {
      if (entries_[k].i != i || entries_[k].j != j || !entries_[k].model) {
        throw Error("combine.InvalidBank", "missing classifier for pair (" + std::to_string(i) +
                                               ", " + std::to_string(j) + ")");
      }
    }
  }
}

std::size_t PairwiseBank::index(int i, int j) const {
  // Row-major position of (i, j), i < j, in the upper triangle.
  const auto n = static_cast<std::size_t>(num_classes_);
  const auto a = static_cast<std::size_t>(i);
  const auto b = static_cast<std::size_t>(j);
  return a * n - a * (a + 1) / 2 + (b - a - 1);
}

const PairEntry& PairwiseBank::at(int i, int j) const {
  if (i > j) std::swap(i, j);
  if (i == j || i < 0 || j >= num_classes_) {
    throw Error("combine.InvalidPair", "no classifier for (" + std::to_string(i) + ", " +
                                           std::to_string(j) + ")");
  }
  return entries_[index(i, j)];
}

double PairwiseBank::prob(int a, int b, std::span<const double> x) const {
  const PairEntry& e = at(a, b);
  const LabelDistribution p = e.model->predict_proba(x);
  return a < b ? p[0] : p[1];
}

std::vector<std::vector<double>> PairwiseBank::prob_matrix(std::span<const double> x) const {
  const auto n = static_cast<std::size_t>(num_classes_);
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (const PairEntry& e : entries_) {
    const LabelDistribution p = e.model->predict_proba(x);
    m[static_cast<std::size_t>(e.i)][static_cast<std::size_t>(e.j)] = p[0];
    m[static_cast<std::size_t>(e.j)][static_cast<std::size_t>(e.i)] = p[1];
  }
  return m;
}

json PairwiseBank::to_json() const {
  json pairs = json::array();
  for (const PairEntry& e : entries_) {
    pairs.push_back({{"i", e.i},
                     {"j", e.j},
                     {"precision", e.precision},
                     {"recall", e.recall},
                     {"f1", e.f1},
                     {"model", classifier_to_json(*e.model)}});
  }
  return {{"num_classes", num_classes_}, {"pairs", pairs}};
}

PairwiseBank PairwiseBank::from_json(const json& j) {
  try {
    std::vector<PairEntry> entries;
    for (const auto& p : j.at("pairs")) {
      PairEntry e;
      e.i = p.at("i").get<int>();
      e.j = p.at("j").get<int>();
      e.precision = p.at("precision").get<double>();
      e.recall = p.at("recall").get<double>();
      e.f1 = p.at("f1").get<double>();
      e.model = classifier_from_json(p.at("model"));
      entries.push_back(std::move(e));
    }
    return PairwiseBank(j.at("num_classes").get<int>(), std::move(entries));
  } catch (const json::exception& e) {
    throw Error("model.Malformed", e.what());
  }
}

namespace {

struct BinaryScores {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Macro scores of a two-label task with labels {0, 1}.
BinaryScores binary_scores(std::span<const int> truth, std::span<const int> pred) {
  BinaryScores out;
  for (int c = 0; c < 2; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < truth.size(); ++r) {
      if (pred[r] == c && truth[r] == c) ++tp;
      if (pred[r] == c && truth[r] != c) ++fp;
      if (pred[r] != c && truth[r] == c) ++fn;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    out.precision += p / 2.0;
    out.recall += r / 2.0;
    out.f1 += (p + r > 0 ? 2 * p * r / (p + r) : 0.0) / 2.0;
  }
  return out;
}

// Rows of labels i and j, relabeled i -> 0, j -> 1.
void pair_rows(const Matrix& x, std::span<const int> y, int i, int j, Matrix& px,
               std::vector<int>& py) {
  std::vector<std::size_t> rows;
  py.clear();
  for (std::size_t r = 0; r < y.size(); ++r) {
    if (y[r] == i || y[r] == j) {
      rows.push_back(r);
      py.push_back(y[r] == i ? 0 : 1);
    }
  }
  px = x.select_rows(rows);
}

}  // namespace

PairwiseBank train_pairwise_bank(const Matrix& x, std::span<const int> y, const Matrix& valid_x,
                                 std::span<const int> valid_y, int num_classes,
                                 const BankParams& params) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int label : y) ++counts[static_cast<std::size_t>(label)];
  std::vector<PairEntry> entries;
  for (int i = 0; i < num_classes; ++i) {
    for (int j = i + 1; j < num_classes; ++j) {
      const std::size_t ci = counts[static_cast<std::size_t>(i)];
      const std::size_t cj = counts[static_cast<std::size_t>(j)];
      if (ci < params.min_pair_rows || cj < params.min_pair_rows) {
        throw Error("combine.InsufficientPairData",
                    "pair (" + std::to_string(i) + ", " + std::to_string(j) + ") has " +
                        std::to_string(ci) + " and " + std::to_string(cj) +
                        " rows; need at least " + std::to_string(params.min_pair_rows) +
                        " of each");
      }
      Matrix px;
      std::vector<int> py;
      pair_rows(x, y, i, j, px, py);
      PairEntry e;
      e.i = i;
      e.j = j;
      e.model = train_learner(params.learner, px, py, 2);
      Matrix vx;
      std::vector<int> vy;
      pair_rows(valid_x, valid_y, i, j, vx, vy);
      if (!vy.empty()) {
        std::vector<int> pred(vy.size());
        for (std::size_t r = 0; r < vy.size(); ++r) pred[r] = e.model->predict(vx.row(r));
        const BinaryScores s = binary_scores(vy, pred);
        e.precision = s.precision;
        e.recall = s.recall;
        e.f1 = s.f1;
      }
      entries.push_back(std::move(e));
    }
  }
  return PairwiseBank(num_classes, std::move(entries));
}

OvoResult predict_ovo(const PairwiseBank& bank, std::span<const double> x) {
  const auto n = static_cast<std::size_t>(bank.num_classes());
  OvoResult out;
  out.votes.assign(n, 0);
  out.mass.assign(n, 0.0);
  for (const PairEntry& e : bank.entries()) {
    const LabelDistribution p = e.model->predict_proba(x);
    const auto i = static_cast<std::size_t>(e.i);
    const auto j = static_cast<std::size_t>(e.j);
    ++out.votes[argmax(p) == 0 ? i : j];
    out.mass[i] += p[0];
    out.mass[j] += p[1];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < n; ++c) {
    if (out.votes[c] > out.votes[best] ||
        (out.votes[c] == out.votes[best] && out.mass[c] > out.mass[best])) {
      best = c;
    }
  }
  out.label = static_cast<int>(best);
  return out;
}

OvrModels train_ovr(const LabeledDataset& train, int num_classes, const LearnerSpec& learner,
                    std::uint64_t seed) {
  OvrModels out;
  for (int c = 0; c < num_classes; ++c) {
    LabeledDataset balanced =
        rebalance(train, c, seed + static_cast<std::uint64_t>(c) * 0x9e3779b97f4a7c15ULL);
    std::vector<int> target(balanced.size());
    for (std::size_t r = 0; r < balanced.size(); ++r) target[r] = balanced.y[r] == c ? 1 : 0;
    out.models.push_back(train_learner(learner, balanced.x, target, 2));
  }
  return out;
}

OvrResult predict_ovr(const OvrModels& models, std::span<const double> x) {
  OvrResult out;
  for (const auto& m : models.models) out.positive.push_back(m->predict_proba(x)[1]);
  out.label = argmax(out.positive);
  return out;
}

// ---------------------------------------------------------------------------
// DAGs

const char* to_string(DagVariant v) {
  return v == DagVariant::Classic ? "classic" : "sat_dissat";
}

namespace {

int add_leaf(DagSpec& spec, int label) {
  DagNode leaf;
  leaf.leaf_label = label;
  spec.nodes.push_back(leaf);
  return static_cast<int>(spec.nodes.size()) - 1;
}

int add_pair_node(DagSpec& spec, const PairwiseBank& bank, int i, int j) {
  DagNode node;
  node.a = {i};
  node.b = {j};
  node.pair_i = i;
  node.pair_j = j;
  node.model = bank.at(i, j).model;
  spec.nodes.push_back(node);
  return static_cast<int>(spec.nodes.size()) - 1;
}

int build_classic(DagSpec& spec, const PairwiseBank& bank, unsigned mask,
                  std::map<unsigned, int>& memo) {
  if (auto it = memo.find(mask); it != memo.end()) return it->second;
  std::vector<int> labels;
  for (int c = 0; c < bank.num_classes(); ++c) {
    if (mask & (1u << c)) labels.push_back(c);
  }
  int id;
  if (labels.size() == 1) {
    id = add_leaf(spec, labels[0]);
  } else {
    const PairEntry* best = nullptr;
    for (const PairEntry& e : bank.entries()) {
      if (!(mask & (1u << e.i)) || !(mask & (1u << e.j))) continue;
      if (!best || e.f1 > best->f1) best = &e;
    }
    id = add_pair_node(spec, bank, best->i, best->j);
    // Winning i removes j, and vice versa.
    const int ca = build_classic(spec, bank, mask & ~(1u << best->j), memo);
    const int cb = build_classic(spec, bank, mask & ~(1u << best->i), memo);
    spec.nodes[static_cast<std::size_t>(id)].child_a = ca;
    spec.nodes[static_cast<std::size_t>(id)].child_b = cb;
  }
  memo[mask] = id;
  return id;
}

}  // namespace

DagSpec build_classic_dag(const PairwiseBank& bank) {
  if (bank.num_classes() < 2 || bank.num_classes() > 16) {
    throw Error("combine.InvalidBank", "classic DAG needs 2..16 labels");
  }
  DagSpec spec;
  spec.variant = DagVariant::Classic;
  spec.num_classes = bank.num_classes();
  std::map<unsigned, int> memo;
  spec.root = build_classic(spec, bank, (1u << bank.num_classes()) - 1u, memo);
  return spec;
}

DagSpec build_sat_dissat_dag(const PairwiseBank& bank, ClassifierPtr root) {
  if (bank.num_classes() != 4) {
    throw Error("combine.InvalidBank", "the satisfied/dissatisfied DAG needs exactly 4 labels");
  }
  DagSpec spec;
  spec.variant = DagVariant::SatDissat;
  spec.num_classes = 4;
  DagNode r;
  r.a = {0, 1};
  r.b = {2, 3};
  r.model = std::move(root);
  spec.nodes.push_back(r);
  spec.root = 0;
  const int low = add_pair_node(spec, bank, 0, 1);
  const int high = add_pair_node(spec, bank, 2, 3);
  spec.nodes[0].child_a = low;
  spec.nodes[0].child_b = high;
  for (int id : {low, high}) {
    auto& node = spec.nodes[static_cast<std::size_t>(id)];
    const int la = node.a[0];
    const int lb = node.b[0];
    const int ca = add_leaf(spec, la);
    const int cb = add_leaf(spec, lb);
    spec.nodes[static_cast<std::size_t>(id)].child_a = ca;
    spec.nodes[static_cast<std::size_t>(id)].child_b = cb;
  }
  return spec;
}

ClassifierPtr train_sat_dissat_root(const Matrix& x, std::span<const int> y,
                                    const LearnerSpec& learner) {
  std::vector<int> grouped(y.size());
  for (std::size_t r = 0; r < y.size(); ++r) grouped[r] = y[r] <= 1 ? 0 : 1;
  return train_learner(learner, x, grouped, 2);
}

DagResult predict_dag(const DagSpec& spec, std::span<const double> x) {
  DagResult out;
  int id = spec.root;
  while (!spec.nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const DagNode& node = spec.nodes[static_cast<std::size_t>(id)];
    DagStep step;
    step.node = id;
    step.a = node.a;
    step.b = node.b;
    step.p_a = node.model->predict_proba(x)[0];
    step.chose_a = step.p_a >= 0.5;
    out.trace.push_back(step);
    id = step.chose_a ? node.child_a : node.child_b;
  }
  out.label = spec.nodes[static_cast<std::size_t>(id)].leaf_label;
  return out;
}

json DagSpec::to_json() const {
  json nodes_j = json::array();
  for (const DagNode& n : nodes) {
    json j;
    if (n.is_leaf()) {
      j["label"] = n.leaf_label;
    } else {
      j["a"] = n.a;
      j["b"] = n.b;
      j["child_a"] = n.child_a;
      j["child_b"] = n.child_b;
      if (n.pair_i >= 0) {
        j["pair"] = {n.pair_i, n.pair_j};
      } else {
        j["model"] = classifier_to_json(*n.model);
      }
    }
    nodes_j.push_back(std::move(j));
  }
  return {{"variant", sessat::to_string(variant)},
          {"num_classes", num_classes},
          {"root", root},
          {"nodes", nodes_j}};
}

DagSpec DagSpec::from_json(const json& j, const PairwiseBank& bank) {
  try {
    DagSpec spec;
    const std::string v = j.at("variant").get<std::string>();
    if (v == "classic") {
      spec.variant = DagVariant::Classic;
    } else if (v == "sat_dissat") {
      spec.variant = DagVariant::SatDissat;
    } else {
      throw Error("model.Malformed", "unknown DAG variant '" + v + "'");
    }
    spec.num_classes = j.at("num_classes").get<int>();
    spec.root = j.at("root").get<int>();
    for (const auto& nj : j.at("nodes")) {
      DagNode n;
      if (nj.contains("label")) {
        n.leaf_label = nj.at("label").get<int>();
      } else {
        n.a = nj.at("a").get<std::vector<int>>();
        n.b = nj.at("b").get<std::vector<int>>();
        n.child_a = nj.at("child_a").get<int>();
        n.child_b = nj.at("child_b").get<int>();
        if (nj.contains("pair")) {
          n.pair_i = nj.at("pair").at(0).get<int>();
          n.pair_j = nj.at("pair").at(1).get<int>();
          n.model = bank.at(n.pair_i, n.pair_j).model;
        } else {
          n.model = classifier_from_json(nj.at("model"));
        }
      }
      spec.nodes.push_back(std::move(n));
    }
    return spec;
  } catch (const json::exception& e) {
    throw Error("model.Malformed", e.what());
  }
}

}  // namespace sessat
