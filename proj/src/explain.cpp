#include "sessat/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "json.hpp"
#include "sessat/error.hpp"
#include "sessat/rng.hpp"
#include "sessat/stats.hpp"
#include "sessat/text_format.hpp"

namespace sessat {

const char* to_string(Bin b) {
  switch (b) {
    case Bin::VeryLow: return "very_low";
    case Bin::Low: return "low";
    case Bin::Medium: return "medium";
    case Bin::High: return "high";
    case Bin::VeryHigh: return "very_high";
  }
  return "?";
}

const char* to_string(CoarseBin b) {
  switch (b) {
    case CoarseBin::Low: return "low";
    case CoarseBin::Mid: return "mid";
    case CoarseBin::High: return "high";
  }
  return "?";
}

CoarseBin coarsen(Bin b) {
  switch (b) {
    case Bin::VeryLow:
    case Bin::Low: return CoarseBin::Low;
    case Bin::Medium: return CoarseBin::Mid;
    case Bin::High:
    case Bin::VeryHigh: return CoarseBin::High;
  }
  return CoarseBin::Mid;
}

Matrix sample_perturbations(std::span<const double> x, const Matrix& train, std::size_t n,
                            std::uint64_t seed) {
  if (train.rows() == 0) throw Error("explain.EmptyTraining", "no training rows to sample from");
  Matrix out(n, x.size());
  Rng rng(seed);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < x.size(); ++c) {
      out(r, c) = x[c];
      if (r == 0) continue;
      if (rng.bernoulli(0.5)) out(r, c) = train(rng.index(train.rows()), c);
    }
  }
  return out;
}

Explanation fit_local_surrogate(const Classifier& model, std::span<const double> x,
                                const Matrix& train, const StandardizationStats& scaling,
                                const std::vector<std::string>& names,
                                const SurrogateParams& params) {
  const std::size_t d = x.size();
  Explanation expl;
  expl.label = model.predict(x);
  const Matrix samples = sample_perturbations(x, train, std::max<std::size_t>(params.samples, 1),
                                              params.seed);
  const auto n = static_cast<Eigen::Index>(samples.rows());
  const auto dd = static_cast<Eigen::Index>(d);
  const double width =
      params.kernel_width > 0.0 ? params.kernel_width : 0.75 * std::sqrt(static_cast<double>(d));

  Eigen::MatrixXd z(n, dd);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = samples.row(static_cast<std::size_t>(r));
    double dist2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double zc = (row[c] - scaling.mean[c]) / scaling.stddev[c];
      const double zx = (x[c] - scaling.mean[c]) / scaling.stddev[c];
      z(r, static_cast<Eigen::Index>(c)) = zc;
      dist2 += (zc - zx) * (zc - zx);
    }
    w(r) = std::exp(-dist2 / (width * width));
    y(r) = model.predict_proba(row)[static_cast<std::size_t>(expl.label)];
  }

  const double wsum = w.sum();
  const double ybar = w.dot(y) / wsum;
  const Eigen::VectorXd yc = y.array() - ybar;
  const double total_ss = (w.array() * yc.array().square()).sum();
  if (!(total_ss > 1e-18)) {
    expl.degenerate = true;
    expl.fidelity = 0.0;
    return expl;
  }
  const Eigen::RowVectorXd zbar = (z.array().colwise() * w.array()).colwise().sum() / wsum;
  const Eigen::MatrixXd zc = z.rowwise() - zbar;
  const Eigen::MatrixXd zw = zc.array().colwise() * w.array();
  Eigen::MatrixXd gram = zw.transpose() * zc;
  gram.diagonal().array() += params.ridge;
  const Eigen::VectorXd beta = gram.ldlt().solve(zw.transpose() * yc);

  const Eigen::VectorXd resid = yc - zc * beta;
  const double resid_ss = (w.array() * resid.array().square()).sum();
  expl.fidelity = std::clamp(1.0 - resid_ss / total_ss, 0.0, 1.0);

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(beta(static_cast<Eigen::Index>(a))) >
           std::abs(beta(static_cast<Eigen::Index>(b)));
  });
  const std::size_t k = std::min(params.top_k, d);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t slot = order[i];
    SignalFeature s;
    s.slot = slot;
    s.name = slot < names.size() ? names[slot] : std::to_string(slot);
    s.weight = beta(static_cast<Eigen::Index>(slot));
    s.direction = s.weight < 0.0 ? '-' : '+';
    s.value = x[slot];
    expl.signals.push_back(std::move(s));
  }
  return expl;
}

QuantileTable QuantileTable::fit(const Matrix& train) {
  QuantileTable t;
  t.cuts.resize(train.cols());
  for (std::size_t c = 0; c < train.cols(); ++c) {
    const std::vector<double> col = train.column(c);
    for (std::size_t q = 0; q < 4; ++q) {
      t.cuts[c][q] = quantile(col, 0.2 * static_cast<double>(q + 1));
    }
  }
  return t;
}

Bin QuantileTable::bin(std::size_t slot, double value) const {
  const auto& c = cuts.at(slot);
  for (std::size_t q = 0; q < 4; ++q) {
    if (value <= c[q]) return static_cast<Bin>(q);
  }
  return Bin::VeryHigh;
}

void discretize_explanation(Explanation& expl, const QuantileTable& table) {
  for (SignalFeature& s : expl.signals) s.bin = table.bin(s.slot, s.value);
}

std::string render_explanation(const Explanation& expl) {
  std::string out;
  for (const SignalFeature& s : expl.signals) {
    if (!out.empty()) out += ", ";
    std::string b = to_string(s.bin);
    std::replace(b.begin(), b.end(), '_', ' ');
    out += b + " " + s.name;
  }
  return out;
}

CategoryTable::CategoryTable() {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto id = static_cast<FeatureId>(i);
    table_[std::string(feature_name(id))] = feature_category(id);
  }
  table_["query_frequency"] = FeatureCategory::Outcome;
  table_["query_click_ratio"] = FeatureCategory::Outcome;
}

void CategoryTable::set(const std::string& feature, FeatureCategory category) {
  table_[feature] = category;
}

FeatureCategory CategoryTable::at(const std::string& feature) const {
  auto it = table_.find(feature);
  if (it == table_.end()) throw Error("explain.UnknownFeature", "no category for " + feature);
  return it->second;
}

void CategoryTable::read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error("explain.MalformedCategoryTable", "line " + std::to_string(line_no));
    }
    const std::string name = line.substr(0, comma);
    const std::string cat = line.substr(comma + 1);
    if (line_no == 1 && name == "feature") continue;
    auto parsed = parse_feature_category(cat);
    if (!parsed) {
      throw Error("explain.MalformedCategoryTable",
                  "line " + std::to_string(line_no) + ": unknown category '" + cat + "'");
    }
    table_[name] = *parsed;
  }
}

namespace {

std::string signature_of(const Explanation& e, const CategoryTable& table) {
  std::set<std::string> parts;
  for (const SignalFeature& s : e.signals) {
    parts.insert(std::string(to_string(table.at(s.name))) + s.direction + ":" +
                 to_string(coarsen(s.bin)));
  }
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += "|";
    out += p;
  }
  return out.empty() ? "none" : out;
}

std::string rule_text(const std::string& signature, int label) {
  std::string out;
  std::stringstream ss(signature);
  std::string part;
  while (std::getline(ss, part, '|')) {
    if (!out.empty()) out += ", ";
    const auto colon = part.find(':');
    if (colon == std::string::npos) {
      out += part;
      continue;
    }
    const std::string cat = part.substr(0, colon - 1);
    const char dir = part[colon - 1];
    out += part.substr(colon + 1) + " " + cat + (dir == '+' ? " (raises)" : " (lowers)");
  }
  return out + " -> " + label_name(label);
}

}  // namespace

RuleSet abstract_rules(const std::vector<Explanation>& explanations, const CategoryTable& table,
                       double coverage_target) {
  RuleSet out;
  out.total = explanations.size();
  std::map<std::pair<std::string, int>, std::size_t> groups;
  for (const Explanation& e : explanations) ++groups[{signature_of(e, table), e.label}];
  out.distinct_signatures = groups.size();
  std::vector<std::pair<std::pair<std::string, int>, std::size_t>> ranked(groups.begin(),
                                                                          groups.end());
  // The map already orders by (signature, label), so a stable sort keeps that
  // as the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::size_t covered = 0;
  for (const auto& [key, support] : ranked) {
    if (out.total == 0) break;
    if (static_cast<double>(covered) / static_cast<double>(out.total) >= coverage_target &&
        !out.rules.empty()) {
      break;
    }
    covered += support;
    Rule r;
    r.signature = key.first;
    r.label = key.second;
    r.support = support;
    r.coverage_cum = static_cast<double>(covered) / static_cast<double>(out.total);
    r.text = rule_text(key.first, key.second);
    out.rules.push_back(std::move(r));
  }
  out.coverage = out.total ? static_cast<double>(covered) / static_cast<double>(out.total) : 0.0;
  return out;
}

void write_explanations_jsonl(std::ostream& out, const std::vector<Explanation>& explanations) {
  for (const Explanation& e : explanations) {
    nlohmann::ordered_json j;
    j["goal_id"] = e.goal_id;
    j["label"] = e.label;
    nlohmann::ordered_json signals = nlohmann::ordered_json::array();
    for (const SignalFeature& s : e.signals) {
      nlohmann::ordered_json sj;
      sj["name"] = s.name;
      sj["weight"] = s.weight;
      sj["direction"] = std::string(1, s.direction);
      sj["bin"] = to_string(s.bin);
      signals.push_back(std::move(sj));
    }
    j["signals"] = std::move(signals);
    j["fidelity"] = e.fidelity;
    out << j.dump() << '\n';
  }
}

void write_rules_csv(std::ostream& out, const RuleSet& rules) {
  out << "rank,signature,label,support,coverage_cum,template\n";
  for (std::size_t i = 0; i < rules.rules.size(); ++i) {
    const Rule& r = rules.rules[i];
    out << i + 1 << ',' << r.signature << ',' << r.label << ',' << r.support << ','
        << format_fixed(r.coverage_cum, 6) << ",\"" << r.text << "\"\n";
  }
}

}  // namespace sessat
