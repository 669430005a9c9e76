#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sessat/features.hpp"
#include "sessat/learners.hpp"
#include "sessat/matrix.hpp"
#include "sessat/preprocess.hpp"

namespace sessat {

enum class Bin { VeryLow, Low, Medium, High, VeryHigh };
enum class CoarseBin { Low, Mid, High };

const char* to_string(Bin b);
const char* to_string(CoarseBin b);
CoarseBin coarsen(Bin b);

struct SignalFeature {
  std::size_t slot = 0;
  std::string name;
  double weight = 0.0;  // surrogate coefficient per standard deviation of the slot
  char direction = '+';
  double value = 0.0;   // raw value at the explained point
  Bin bin = Bin::Medium;
};

struct Explanation {
  std::string goal_id;
  int label = 0;
  std::vector<SignalFeature> signals;  // strongest first
  double fidelity = 0.0;               // weighted R^2 of the surrogate, in [0, 1]
  bool degenerate = false;             // constant responses: no signals
};

struct SurrogateParams {
  std::size_t samples = 1000;
  std::size_t top_k = 6;
  double kernel_width = 0.0;  // 0 = 0.75 * sqrt(d)
  double ridge = 1.0;
  std::uint64_t seed = 0;
};

// Row 0 is x; in every other row each slot is independently replaced, with
// probability 0.5, by a value drawn from that slot's training column.
Matrix sample_perturbations(std::span<const double> x, const Matrix& train, std::size_t n,
                            std::uint64_t seed);

// Local weighted ridge surrogate of the model's probability for its predicted
// label around x. Distances and coefficients use the standardized slots.
Explanation fit_local_surrogate(const Classifier& model, std::span<const double> x,
                                const Matrix& train, const StandardizationStats& scaling,
                                const std::vector<std::string>& names,
                                const SurrogateParams& params = {});

// Training cut points at the 20/40/60/80th percentiles of each slot.
struct QuantileTable {
  std::vector<std::array<double, 4>> cuts;

  static QuantileTable fit(const Matrix& train);
  // A value equal to a cut point falls in the lower bin.
  Bin bin(std::size_t slot, double value) const;
};

void discretize_explanation(Explanation& expl, const QuantileTable& table);

// "very low S_num_click, high Q_MaxClickPos"
std::string render_explanation(const Explanation& expl);

// Slot name -> category used when abstracting rules. Defaults to the catalog
// grouping; a CSV "feature,category" file overrides individual entries.
class CategoryTable {
 public:
  CategoryTable();
  void set(const std::string& feature, FeatureCategory category);
  FeatureCategory at(const std::string& feature) const;
  void read_csv(std::istream& in);

 private:
  std::map<std::string, FeatureCategory> table_;
};

struct Rule {
  std::string signature;  // canonical, e.g. "cost-:low|outcome+:high"
  int label = 0;
  std::size_t support = 0;
  double coverage_cum = 0.0;
  std::string text;
};

struct RuleSet {
  std::vector<Rule> rules;  // descending support
  double coverage = 0.0;
  std::size_t total = 0;
  std::size_t distinct_signatures = 0;
};

// Groups explanations by (coarse category signature, label) and emits groups in
// descending support (ties by signature, then label) until the covered
// fraction reaches coverage_target.
RuleSet abstract_rules(const std::vector<Explanation>& explanations, const CategoryTable& table,
                       double coverage_target = 0.98);

void write_explanations_jsonl(std::ostream& out, const std::vector<Explanation>& explanations);
void write_rules_csv(std::ostream& out, const RuleSet& rules);

}  // namespace sessat
