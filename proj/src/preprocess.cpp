#include "sessat/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "sessat/error.hpp"
#include "sessat/rng.hpp"
#include "sessat/text_format.hpp"

namespace sessat {

const char* label_name(int label) {
  switch (label) {
    case 0: return "Low";
    case 1: return "Medium";
    case 2: return "High";
    case 3: return "VeryHigh";
    default: return "Unknown";
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_score(const std::string& cell, double hi, std::size_t line_no) {
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
  } catch (const std::logic_error&) {
    throw Error("preprocess.MalformedAnnotation",
                "line " + std::to_string(line_no) + ": bad number '" + cell + "'");
  }
  if (!(v >= 0.0 && v <= hi)) {
    throw Error("preprocess.OutOfRange",
                "line " + std::to_string(line_no) + ": score " + cell + " outside [0, " +
                    format_double(hi) + "]");
  }
  return v;
}

}  // namespace

std::vector<AnnotatedSession> read_annotations(std::istream& in) {
  std::vector<AnnotatedSession> out;
  std::unordered_map<std::string, std::size_t> slot;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("goal_id", 0) == 0) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 3 || cells[0].empty()) {
      throw Error("preprocess.MalformedAnnotation", "line " + std::to_string(line_no));
    }
    auto [it, inserted] = slot.try_emplace(cells[0], out.size());
    if (inserted) {
      out.emplace_back();
      out.back().goal_id = cells[0];
    }
    AnnotatedSession& a = out[it->second];
    a.annotator_ids.push_back(cells[1]);
    a.annotator_scores.push_back(parse_score(cells[2], 3.0, line_no));
    std::vector<double> qs;
    for (std::size_t i = 3; i < cells.size(); ++i) qs.push_back(parse_score(cells[i], 2.0, line_no));
    if (!a.per_query_scores.empty() && a.per_query_scores.front().size() != qs.size()) {
      throw Error("preprocess.MalformedAnnotation",
                  "line " + std::to_string(line_no) + ": per-query score count differs between "
                  "annotators of goal " + a.goal_id);
    }
    a.per_query_scores.push_back(std::move(qs));
  }
  for (auto& a : out) {
    const double k = static_cast<double>(a.annotator_scores.size());
    a.s = std::accumulate(a.annotator_scores.begin(), a.annotator_scores.end(), 0.0) / k;
    a.q.assign(a.per_query_scores.front().size(), 0.0);
    for (const auto& qs : a.per_query_scores) {
      for (std::size_t i = 0; i < qs.size(); ++i) a.q[i] += qs[i];
    }
    for (double& v : a.q) v /= k;
  }
  return out;
}

void write_annotations(std::ostream& out, const std::vector<AnnotatedSession>& sessions) {
  out << "goal_id,annotator_id,session_score,query_scores...\n";
  for (const auto& a : sessions) {
    for (std::size_t k = 0; k < a.annotator_scores.size(); ++k) {
      out << a.goal_id << ',' << a.annotator_ids[k] << ',' << format_double(a.annotator_scores[k]);
      for (double q : a.per_query_scores[k]) out << ',' << format_double(q);
      out << '\n';
    }
  }
}

SessionLabel discretize_session_label(double s) {
  if (!(s >= 0.0 && s <= 3.0)) {
    throw Error("preprocess.OutOfRange", "session score " + format_double(s) + " outside [0, 3]");
  }
  if (s <= 0.67) return SessionLabel::Low;
  if (s <= 1.67) return SessionLabel::Medium;
  if (s <= 2.67) return SessionLabel::High;
  return SessionLabel::VeryHigh;
}

int discretize_search_label(double q) {
  if (!(q >= 0.0 && q <= 2.0)) {
    throw Error("preprocess.OutOfRange", "search score " + format_double(q) + " outside [0, 2]");
  }
  if (q <= 0.67) return 0;
  if (q <= 1.33) return 1;
  return 2;
}

// ---------------------------------------------------------------------------
// Isolation forest

namespace {

double harmonic(double i) { return std::log(i) + 0.5772156649015329; }

// Average path length of an unsuccessful BST search over n points.
double average_path(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double m = static_cast<double>(n);
  return 2.0 * harmonic(m - 1.0) - 2.0 * (m - 1.0) / m;
}

struct IsoNode {
  int feature = -1;  // -1 = external node
  double split = 0.0;
  int left = -1, right = -1;
  std::size_t size = 0;
};

class IsoTree {
 public:
  IsoTree(const Matrix& x, std::vector<std::size_t> rows, int height_limit, Rng& rng) {
    build(x, rows, 0, height_limit, rng);
  }

  double path_length(std::span<const double> v) const {
    int node = 0;
    int depth = 0;
    while (nodes_[node].feature >= 0) {
      const auto& n = nodes_[node];
      node = v[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right;
      ++depth;
    }
    return depth + average_path(nodes_[node].size);
  }

 private:
  int build(const Matrix& x, std::vector<std::size_t>& rows, int depth, int limit, Rng& rng) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_[id].size = rows.size();
    if (depth >= limit || rows.size() <= 1) return id;

    // Candidate features are those not constant within this node.
    std::vector<std::size_t> candidates;
    std::vector<double> lo(x.cols()), hi(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
      lo[c] = hi[c] = x(rows.front(), c);
      for (std::size_t r : rows) {
        lo[c] = std::min(lo[c], x(r, c));
        hi[c] = std::max(hi[c], x(r, c));
      }
      if (hi[c] > lo[c]) candidates.push_back(c);
    }
    if (candidates.empty()) return id;

    const std::size_t f = candidates[rng.index(candidates.size())];
    double split = rng.uniform(lo[f], hi[f]);
    if (split <= lo[f]) split = std::nextafter(lo[f], hi[f]);
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x(r, f) < split ? left : right).push_back(r);

    nodes_[id].feature = static_cast<int>(f);
    nodes_[id].split = split;
    const int l = build(x, left, depth + 1, limit, rng);
    const int r = build(x, right, depth + 1, limit, rng);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::vector<IsoNode> nodes_;
};

}  // namespace

OutlierResult detect_outliers(const Matrix& x, const IsolationForestParams& params) {
  OutlierResult result;
  const std::size_t n = x.rows();
  result.scores.assign(n, 0.0);
  result.flags.assign(n, false);
  if (n == 0) return result;

  bool all_same = true;
  for (std::size_t r = 1; r < n && all_same; ++r) {
    all_same = std::equal(x.row(r).begin(), x.row(r).end(), x.row(0).begin());
  }
  if (all_same) {
    result.degenerate = true;
    std::fill(result.scores.begin(), result.scores.end(), 0.5);
    return result;
  }

  const std::size_t psi = std::min<std::size_t>(static_cast<std::size_t>(params.subsample), n);
  const int height_limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(psi))));
  Rng rng(params.seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);

  std::vector<double> total_path(n, 0.0);
  for (int t = 0; t < params.trees; ++t) {
    // Subsample without replacement via a partial shuffle.
    std::vector<std::size_t> pool = all;
    for (std::size_t i = 0; i < psi; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
    pool.resize(psi);
    const IsoTree tree(x, std::move(pool), height_limit, rng);
    for (std::size_t r = 0; r < n; ++r) total_path[r] += tree.path_length(x.row(r));
  }
  const double norm = average_path(psi);
  for (std::size_t r = 0; r < n; ++r) {
    const double mean_path = total_path[r] / params.trees;
    result.scores[r] = norm > 0.0 ? std::pow(2.0, -mean_path / norm) : 0.5;
  }

  const auto k = static_cast<std::size_t>(std::floor(params.contamination * n + 1e-9));
  std::vector<std::size_t> order = all;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return result.scores[a] > result.scores[b];
  });
  for (std::size_t i = 0; i < std::min(k, n); ++i) {
    result.flags[order[i]] = true;
    result.flagged.push_back(order[i]);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Imputation and scaling

FeatureMatrix to_feature_matrix(const std::vector<FeatureVector>& rows) {
  FeatureMatrix m;
  m.reserve(rows.size());
  for (const auto& r : rows) m.emplace_back(r.slots().begin(), r.slots().end());
  return m;
}

FeatureMatrix to_feature_matrix(const std::vector<ReducedFeatureVector>& rows) {
  FeatureMatrix m;
  m.reserve(rows.size());
  for (const auto& r : rows) m.emplace_back(r.slots().begin(), r.slots().end());
  return m;
}

Imputed impute_missing(const FeatureMatrix& m, const std::vector<std::string>& slot_names) {
  const std::size_t cols = slot_names.size();
  ImputationStats stats;
  stats.medians.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    std::vector<double> seen;
    for (const auto& row : m) {
      if (row[c]) seen.push_back(*row[c]);
    }
    if (seen.empty()) throw Error("preprocess.AllMissingSlot", slot_names[c]);
    std::sort(seen.begin(), seen.end());
    const std::size_t h = seen.size() / 2;
    stats.medians[c] = seen.size() % 2 == 1 ? seen[h] : 0.5 * (seen[h - 1] + seen[h]);
  }
  return {apply_imputation(m, stats), std::move(stats)};
}

std::vector<double> apply_imputation(const FeatureRow& row, const ImputationStats& stats) {
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) out[c] = row[c].value_or(stats.medians[c]);
  return out;
}

Matrix apply_imputation(const FeatureMatrix& m, const ImputationStats& stats) {
  Matrix x(0, stats.medians.size());
  for (const auto& row : m) x.append_row(apply_imputation(row, stats));
  return x;
}

StandardizationStats fit_standardization(const Matrix& x) {
  StandardizationStats s;
  s.mean.assign(x.cols(), 0.0);
  s.stddev.assign(x.cols(), 1.0);
  if (x.rows() == 0) return s;
  const double n = static_cast<double>(x.rows());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) sum += x(r, c);
    const double mu = sum / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) ss += (x(r, c) - mu) * (x(r, c) - mu);
    const double sd = std::sqrt(ss / n);
    s.mean[c] = mu;
    s.stddev[c] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Datasets

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledDataset out;
  out.feature_names = feature_names;
  out.imputation = imputation;
  out.standardization = standardization;
  out.x = x.select_rows(indices);
  if (out.x.cols() == 0) out.x = Matrix(0, x.cols());
  for (std::size_t i : indices) {
    out.goal_ids.push_back(goal_ids[i]);
    out.y.push_back(y[i]);
  }
  return out;
}

std::array<std::size_t, kNumLabels> LabeledDataset::label_counts() const {
  std::array<std::size_t, kNumLabels> counts{};
  for (int label : y) {
    if (label >= 0 && label < kNumLabels) ++counts[static_cast<std::size_t>(label)];
  }
  return counts;
}

LabeledDataset rebalance(const LabeledDataset& data, int target_label, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < data.size(); ++i) (data.y[i] == target_label ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) {
    throw Error("preprocess.SingleClass",
                "rebalance needs both label " + std::to_string(target_label) + " and other labels");
  }
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit = std::max(pos.size(), neg.size()) - minority.size();

  std::vector<std::size_t> indices(data.size());
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(seed);
  for (std::size_t k = 0; k < deficit; ++k) indices.push_back(minority[rng.index(minority.size())]);
  LabeledDataset out = data.subset(indices);
  out.outliers = data.outliers;
  return out;
}

std::vector<int> split_assignment(const std::vector<int>& labels, const SplitRatios& ratios,
                                  std::uint64_t seed) {
  const std::array<double, 3> r{ratios.train, ratios.valid, ratios.test};
  for (double v : r) {
    if (!(v >= 0.0)) throw Error("preprocess.InvalidRatios", "negative split ratio");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw Error("preprocess.InvalidRatios", "split ratios must sum to 1");
  }
  const std::size_t n = labels.size();

  // Group rows by label (sorted label order keeps this deterministic).
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const std::size_t L = distinct.size();
  std::vector<std::vector<std::size_t>> groups(L);
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = std::lower_bound(distinct.begin(), distinct.end(), labels[i]) - distinct.begin();
    groups[static_cast<std::size_t>(g)].push_back(i);
  }

  // Global part sizes by largest remainder.
  auto largest_remainder = [&](double total, std::size_t units) {
    std::array<std::size_t, 3> base{};
    std::array<double, 3> frac{};
    std::size_t used = 0;
    for (int k = 0; k < 3; ++k) {
      const double exact = total * r[k];
      base[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[k] = exact - static_cast<double>(base[k]);
      used += base[k];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; used < units; ++i, ++used) ++base[order[i % 3]];
    return base;
  };
  const auto target = largest_remainder(static_cast<double>(n), n);

  // Per-label floors, then hand out the remaining units by largest fractional
  // part while respecting both the per-label and the global totals.
  std::vector<std::array<std::size_t, 3>> alloc(L);
  std::vector<std::size_t> left(L);
  std::array<std::size_t, 3> assigned{};
  struct Cand {
    double frac;
    std::size_t label;
    int part;
  };
  std::vector<Cand> cands;
  for (std::size_t l = 0; l < L; ++l) {
    const double nl = static_cast<double>(groups[l].size());
    std::size_t used = 0;
    for (int k = 0; k < 3; ++k) {
      const double exact = nl * r[k];
      alloc[l][k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      used += alloc[l][k];
      assigned[k] += alloc[l][k];
      cands.push_back({exact - static_cast<double>(alloc[l][k]), l, k});
    }
    left[l] = groups[l].size() - used;
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Cand& a, const Cand& b) { return a.frac > b.frac; });
  for (const auto& c : cands) {
    if (left[c.label] > 0 && assigned[c.part] < target[c.part] && r[c.part] > 0.0) {
      ++alloc[c.label][c.part];
      ++assigned[c.part];
      --left[c.label];
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    for (int k = 0; k < 3 && left[l] > 0; ++k) {
      while (left[l] > 0 && assigned[k] < target[k]) {
        ++alloc[l][k];
        ++assigned[k];
        --left[l];
      }
    }
  }

  std::vector<int> part(n, 0);
  Rng rng(seed);
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<std::size_t> rows = groups[l];
    rng.shuffle(rows);
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      for (std::size_t c = 0; c < alloc[l][k]; ++c) part[rows[pos++]] = k;
    }
  }
  return part;
}

Splits split(const LabeledDataset& data, const SplitRatios& ratios, std::uint64_t seed) {
  const auto part = split_assignment(data.y, ratios, seed);
  std::array<std::vector<std::size_t>, 3> idx;
  for (std::size_t i = 0; i < part.size(); ++i) idx[static_cast<std::size_t>(part[i])].push_back(i);
  return {data.subset(idx[0]), data.subset(idx[1]), data.subset(idx[2])};
}

}  // namespace sessat
