#include "sessat/metrics.hpp"

#include "sessat/error.hpp"

namespace sessat {

ClassMetrics class_metrics(std::span<const int> truth, std::span<const int> pred,
                           int num_classes) {
  if (truth.empty() || truth.size() != pred.size()) {
    throw Error("eval.InvalidInput", "truth and prediction must be nonempty and equally long");
  }
  const auto k = static_cast<std::size_t>(num_classes);
  ClassMetrics m;
  m.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    if (truth[r] < 0 || truth[r] >= num_classes || pred[r] < 0 || pred[r] >= num_classes) {
      throw Error("eval.InvalidInput", "label out of range");
    }
    ++m.confusion[static_cast<std::size_t>(truth[r])][static_cast<std::size_t>(pred[r])];
    if (truth[r] == pred[r]) ++correct;
  }
  m.per_label.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += m.confusion[o][c];
      actual += m.confusion[c][o];
    }
    const double tp = static_cast<double>(m.confusion[c][c]);
    LabelScores& s = m.per_label[c];
    s.support = actual;
    s.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    s.recall = actual ? tp / static_cast<double>(actual) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                        : 0.0;
    m.macro_precision += s.precision;
    m.macro_recall += s.recall;
    m.macro_f1 += s.f1;
  }
  m.macro_precision /= static_cast<double>(k);
  m.macro_recall /= static_cast<double>(k);
  m.macro_f1 /= static_cast<double>(k);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  return m;
}

double macro_f1(std::span<const int> truth, std::span<const int> pred, int num_classes) {
  return class_metrics(truth, pred, num_classes).macro_f1;
}

nlohmann::ordered_json metrics_to_json(const ClassMetrics& m) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < m.per_label.size(); ++c) {
    const auto& s = m.per_label[c];
    labels.push_back({{"label", c},
                      {"precision", s.precision},
                      {"recall", s.recall},
                      {"f1", s.f1},
                      {"support", s.support}});
  }
  j["per_label"] = labels;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  j["accuracy"] = m.accuracy;
  j["confusion"] = m.confusion;
  return j;
}

}  // namespace sessat
