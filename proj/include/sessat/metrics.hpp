#pragma once

#include <span>
#include <vector>

#include "json.hpp"

namespace sessat {

struct LabelScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // rows with this true label
};

struct ClassMetrics {
  std::vector<LabelScores> per_label;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][pred]
};

// Per-label precision/recall/F1 (0 when the denominator is 0) and unweighted
// macro means over all num_classes labels. Throws eval.InvalidInput when the
// inputs are empty or of different lengths.
ClassMetrics class_metrics(std::span<const int> truth, std::span<const int> pred,
                           int num_classes);

double macro_f1(std::span<const int> truth, std::span<const int> pred, int num_classes);

nlohmann::ordered_json metrics_to_json(const ClassMetrics& m);

}  // namespace sessat
