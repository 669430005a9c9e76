#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sessat/matrix.hpp"
#include "sessat/rng.hpp"

namespace sessat::detail {

// Row indices of each column sorted by value (ties by row index). Computed once
// per training matrix and shared by every tree grown on it.
struct SortedColumns {
  std::vector<std::vector<std::uint32_t>> order;
};

SortedColumns presort(const Matrix& x);

struct GrowParams {
  int max_depth = 6;
  double min_leaf = 1.0;  // minimum row weight on each side of a split
  int max_features = 0;   // features tried per node; 0 = all
  std::uint64_t seed = 0;
};

template <typename Acc>
struct GrownNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  int depth = 0;
  double gain = 0.0;
  Acc stats{};
};

template <typename Acc>
struct GrownTree {
  std::vector<GrownNode<Acc>> nodes;
  std::vector<int> leaf_of_row;  // -1 for rows with zero weight
};

// Split point strictly between two distinct sorted values; x <= threshold goes left.
inline double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

// Level-wise exact greedy growth. Criterion provides:
//   Acc zero() const;
//   void add(Acc&, std::size_t row, double weight) const;
//   Acc minus(const Acc& a, const Acc& b) const;
//   double weight(const Acc&) const;
//   bool splittable(const Acc&) const;           // e.g. false when pure
//   double gain(const Acc& parent, const Acc& left, const Acc& right) const;
//   bool accept(double gain) const;
// Candidate splits are scanned in ascending feature order and ascending
// threshold; only a strictly better gain replaces the incumbent, so ties go to
// the lowest feature index and then the lowest threshold.
template <typename Criterion>
auto grow_tree(const Matrix& x, const SortedColumns& cols, std::span<const double> row_weight,
               const Criterion& crit, const GrowParams& params) {
  using Acc = decltype(crit.zero());
  GrownTree<Acc> tree;
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::vector<int>& node_of = tree.leaf_of_row;
  node_of.assign(n, -1);

  GrownNode<Acc> root;
  root.stats = crit.zero();
  for (std::size_t r = 0; r < n; ++r) {
    if (row_weight[r] > 0.0) {
      node_of[r] = 0;
      crit.add(root.stats, r, row_weight[r]);
    }
  }
  tree.nodes.push_back(root);

  Rng rng(params.seed);
  std::vector<int> frontier{0};
  for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
    // Per-node scan state, indexed by node id.
    struct Scan {
      bool active = false;
      std::vector<char> use_feature;
      Acc left{};
      double last = 0.0;
      bool has_prev = false;
      int best_feature = -1;
      double best_threshold = 0.0;
      double best_gain = -std::numeric_limits<double>::infinity();
    };
    std::vector<Scan> scan(tree.nodes.size());
    bool any_active = false;
    for (int id : frontier) {
      const auto& node = tree.nodes[static_cast<std::size_t>(id)];
      if (!crit.splittable(node.stats) || crit.weight(node.stats) < 2.0 * params.min_leaf) continue;
      Scan& s = scan[static_cast<std::size_t>(id)];
      s.active = true;
      any_active = true;
      s.use_feature.assign(d, 1);
      if (params.max_features > 0 && static_cast<std::size_t>(params.max_features) < d) {
        std::vector<std::size_t> feats(d);
        for (std::size_t f = 0; f < d; ++f) feats[f] = f;
        for (std::size_t i = 0; i < static_cast<std::size_t>(params.max_features); ++i) {
          std::swap(feats[i], feats[i + rng.index(d - i)]);
        }
        std::fill(s.use_feature.begin(), s.use_feature.end(), 0);
        for (int i = 0; i < params.max_features; ++i) s.use_feature[feats[static_cast<std::size_t>(i)]] = 1;
      }
    }
    if (!any_active) break;

    for (std::size_t f = 0; f < d; ++f) {
      for (int id : frontier) {
        Scan& s = scan[static_cast<std::size_t>(id)];
        s.left = crit.zero();
        s.has_prev = false;
      }
      for (std::uint32_t r : cols.order[f]) {
        const int id = node_of[r];
        if (id < 0) continue;
        Scan& s = scan[static_cast<std::size_t>(id)];
        if (!s.active || !s.use_feature[f]) continue;
        const double v = x(r, f);
        if (s.has_prev && v > s.last) {
          const Acc& total = tree.nodes[static_cast<std::size_t>(id)].stats;
          const Acc right = crit.minus(total, s.left);
          if (crit.weight(s.left) >= params.min_leaf && crit.weight(right) >= params.min_leaf) {
            const double g = crit.gain(total, s.left, right);
            if (crit.accept(g) && g > s.best_gain) {
              s.best_gain = g;
              s.best_feature = static_cast<int>(f);
              s.best_threshold = midpoint(s.last, v);
            }
          }
        }
        crit.add(s.left, r, row_weight[r]);
        s.last = v;
        s.has_prev = true;
      }
    }

    std::vector<int> next;
    for (int id : frontier) {
      const Scan& s = scan[static_cast<std::size_t>(id)];
      if (!s.active || s.best_feature < 0) continue;
      const int l = static_cast<int>(tree.nodes.size());
      GrownNode<Acc> child;
      child.depth = depth + 1;
      child.stats = crit.zero();
      tree.nodes.push_back(child);
      tree.nodes.push_back(child);
      auto& parent = tree.nodes[static_cast<std::size_t>(id)];
      parent.feature = s.best_feature;
      parent.threshold = s.best_threshold;
      parent.gain = s.best_gain;
      parent.left = l;
      parent.right = l + 1;
      next.push_back(l);
      next.push_back(l + 1);
    }
    if (next.empty()) break;
    for (std::size_t r = 0; r < n; ++r) {
      const int id = node_of[r];
      if (id < 0) continue;
      const auto& node = tree.nodes[static_cast<std::size_t>(id)];
      if (node.feature < 0) continue;
      const int child = x(r, static_cast<std::size_t>(node.feature)) <= node.threshold ? node.left
                                                                                        : node.right;
      node_of[r] = child;
      crit.add(tree.nodes[static_cast<std::size_t>(child)].stats, r, row_weight[r]);
    }
    frontier = std::move(next);
  }
  return tree;
}

}  // namespace sessat::detail
