#include "sessat/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sessat/error.hpp"
#include "sessat/metrics.hpp"
#include "sessat/stats.hpp"

namespace sessat {

bool HybridModel::is_pruned(int i, int j) const {
  return pruned.count({std::min(i, j), std::max(i, j)}) > 0;
}

json HybridModel::to_json() const {
  json pruned_j = json::array();
  for (const auto& [i, j] : pruned) pruned_j.push_back({i, j});
  return {{"num_classes", num_classes},
          {"multiclass", classifier_to_json(*multiclass)},
          {"bank", bank.to_json()},
          {"weights", weights},
          {"pruned", pruned_j}};
}

HybridModel HybridModel::from_json(const json& j) {
  try {
    HybridModel m;
    m.num_classes = j.at("num_classes").get<int>();
    m.multiclass = classifier_from_json(j.at("multiclass"));
    m.bank = PairwiseBank::from_json(j.at("bank"));
    m.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& p : j.at("pruned")) {
      const int a = p.at(0).get<int>();
      const int b = p.at(1).get<int>();
      m.pruned.insert({std::min(a, b), std::max(a, b)});
    }
    if (m.weights.size() != static_cast<std::size_t>(m.num_classes) ||
        m.bank.num_classes() != m.num_classes) {
      throw Error("model.Malformed", "hybrid model dimensions disagree");
    }
    return m;
  } catch (const json::exception& e) {
    throw Error("model.Malformed", e.what());
  }
}

HybridInputs hybrid_inputs(const HybridModel& model, std::span<const double> x) {
  HybridInputs in;
  in.multiclass = model.multiclass->predict_proba(x);
  const auto n = static_cast<std::size_t>(model.num_classes);
  in.pair.assign(n, std::vector<double>(n, 0.0));
  for (const PairEntry& e : model.bank.entries()) {
    if (model.is_pruned(e.i, e.j)) continue;
    const LabelDistribution p = e.model->predict_proba(x);
    in.pair[static_cast<std::size_t>(e.i)][static_cast<std::size_t>(e.j)] = p[0];
    in.pair[static_cast<std::size_t>(e.j)][static_cast<std::size_t>(e.i)] = p[1];
  }
  return in;
}

std::vector<double> unweighted_scores(const HybridModel& model, const HybridInputs& in) {
  const int n = model.num_classes;
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      double cond;
      if (i != j) {
        cond = model.is_pruned(i, j) ? 0.0 : in.pair[si][sj];
      } else {
        double sum = 0.0;
        int kept = 0;
        for (int k = 0; k < n; ++k) {
          if (k == i || model.is_pruned(i, k)) continue;
          sum += in.pair[si][static_cast<std::size_t>(k)];
          ++kept;
        }
        cond = kept ? sum / kept : 1.0;
      }
      total += in.multiclass[sj] * cond;
    }
    out[si] = total;
  }
  return out;
}

namespace {

void check_weights(const std::vector<double>& w) {
  if (std::none_of(w.begin(), w.end(), [](double v) { return v > 0.0; })) {
    throw Error("hybrid.AllWeightsZero", "at least one label weight must be positive");
  }
}

}  // namespace

std::vector<double> score_hybrid(const HybridModel& model, std::span<const double> x) {
  check_weights(model.weights);
  std::vector<double> s = unweighted_scores(model, hybrid_inputs(model, x));
  for (std::size_t i = 0; i < s.size(); ++i) s[i] *= model.weights[i];
  return s;
}

int predict_hybrid(const HybridModel& model, std::span<const double> x) {
  return argmax(score_hybrid(model, x));
}

WeightFit fit_weights(const HybridModel& model, const Matrix& valid_x,
                      std::span<const int> valid_y, double grid_step) {
  const int n = model.num_classes;
  const auto nn = static_cast<std::size_t>(n);
  if (valid_y.empty()) throw Error("hybrid.MissingLabel", "validation set is empty");
  std::vector<bool> present(nn, false);
  for (int label : valid_y) present[static_cast<std::size_t>(label)] = true;
  for (int c = 0; c < n; ++c) {
    if (!present[static_cast<std::size_t>(c)]) {
      throw Error("hybrid.MissingLabel",
                  "label " + std::to_string(c) + " is absent from the validation set");
    }
  }
  const double steps_real = 1.0 / grid_step;
  const long steps = std::lround(steps_real);
  if (!(grid_step > 0.0) || steps < 1 || std::abs(steps_real - static_cast<double>(steps)) > 1e-9) {
    throw Error("hybrid.InvalidGridStep", "1 / grid_step must be a whole number");
  }

  const std::size_t rows = valid_y.size();
  std::vector<double> u(rows * nn);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto s = unweighted_scores(model, hybrid_inputs(model, valid_x.row(r)));
    std::copy(s.begin(), s.end(), u.begin() + static_cast<std::ptrdiff_t>(r * nn));
  }

  WeightFit best;
  best.macro_f1 = -1.0;
  std::vector<long> k(nn, 0);
  std::vector<double> w(nn);
  std::vector<int> pred(rows);
  const std::vector<int> truth(valid_y.begin(), valid_y.end());
  // Odometer over the grid in lexicographic order, last coordinate fastest.
  while (true) {
    std::size_t pos = nn;
    while (pos > 0) {
      --pos;
      if (k[pos] < steps) {
        ++k[pos];
        break;
      }
      k[pos] = 0;
      if (pos == 0) {
        pos = nn;  // wrapped around: done
        break;
      }
    }
    if (pos == nn) break;
    for (std::size_t c = 0; c < nn; ++c) w[c] = static_cast<double>(k[c]) / static_cast<double>(steps);
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t b = 0;
      double bv = w[0] * u[r * nn];
      for (std::size_t c = 1; c < nn; ++c) {
        const double v = w[c] * u[r * nn + c];
        if (v > bv) {
          bv = v;
          b = c;
        }
      }
      pred[r] = static_cast<int>(b);
    }
    const double f1 = macro_f1(truth, pred, n);
    ++best.evaluated;
    if (f1 > best.macro_f1) {
      best.macro_f1 = f1;
      best.weights = w;
    }
  }
  return best;
}

HybridModel prune_paths(const HybridModel& model,
                        const std::vector<std::vector<std::size_t>>& confusion,
                        double keep_fraction) {
  HybridModel out = model;
  out.pruned.clear();
  if (keep_fraction >= 1.0) return out;
  struct Ranked {
    int i, j;
    std::size_t mass;
  };
  std::vector<Ranked> pairs;
  std::size_t total = 0;
  for (int i = 0; i < model.num_classes; ++i) {
    for (int j = i + 1; j < model.num_classes; ++j) {
      const std::size_t m = confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +
                            confusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      pairs.push_back({i, j, m});
      total += m;
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Ranked& a, const Ranked& b) { return a.mass > b.mass; });
  const double target = keep_fraction * static_cast<double>(total);
  std::size_t covered = 0;
  std::size_t kept = 0;
  while (kept < pairs.size() && total > 0 && static_cast<double>(covered) < target) {
    covered += pairs[kept].mass;
    ++kept;
  }
  for (std::size_t p = kept; p < pairs.size(); ++p) out.pruned.insert({pairs[p].i, pairs[p].j});
  return out;
}

HybridModel prune_and_refit(const HybridModel& model, const Matrix& valid_x,
                            std::span<const int> valid_y,
                            const std::vector<std::vector<std::size_t>>& confusion,
                            double keep_fraction, double grid_step) {
  HybridModel out = prune_paths(model, confusion, keep_fraction);
  out.weights = fit_weights(out, valid_x, valid_y, grid_step).weights;
  return out;
}

LabelDistribution HybridClassifier::predict_proba(std::span<const double> x) const {
  std::vector<double> s = score_hybrid(model_, x);
  const double total = std::accumulate(s.begin(), s.end(), 0.0);
  if (total <= 0.0) {
    std::fill(s.begin(), s.end(), 1.0 / static_cast<double>(s.size()));
  } else {
    for (double& v : s) v /= total;
  }
  return s;
}

HybridTraining train_hybrid(const Matrix& x, std::span<const int> y, const Matrix& valid_x,
                            std::span<const int> valid_y, int num_classes,
                            const HybridParams& params) {
  HybridTraining out;
  HybridModel base;
  base.num_classes = num_classes;
  base.multiclass = train_gbt(x, y, num_classes, params.multiclass);
  BankParams bp;
  bp.learner = params.pairwise;
  bp.min_pair_rows = params.min_pair_rows;
  base.bank = train_pairwise_bank(x, y, valid_x, valid_y, num_classes, bp);
  base.weights.assign(static_cast<std::size_t>(num_classes), 1.0);

  const std::vector<int> truth(valid_y.begin(), valid_y.end());
  std::vector<int> mc_pred(truth.size());
  for (std::size_t r = 0; r < truth.size(); ++r) {
    mc_pred[r] = base.multiclass->predict(valid_x.row(r));
  }
  const ClassMetrics mc = class_metrics(truth, mc_pred, num_classes);
  out.multiclass_valid_f1 = mc.macro_f1;

  double best_f1 = -1.0;
  for (double keep : {params.keep_fraction, 1.0, 0.0}) {
    HybridModel m = prune_paths(base, mc.confusion, keep);
    const WeightFit fit = fit_weights(m, valid_x, valid_y, params.grid_step);
    m.weights = fit.weights;
    HybridCandidate c;
    c.keep_fraction = keep;
    c.kept_pairs = m.bank.size() - m.pruned.size();
    c.weights = fit.weights;
    c.valid_macro_f1 = fit.macro_f1;
    out.candidates.push_back(c);
    if (fit.macro_f1 > best_f1) {
      best_f1 = fit.macro_f1;
      out.chosen = out.candidates.size() - 1;
      out.model = std::move(m);
    }
  }
  out.hybrid_valid_f1 = best_f1;
  return out;
}

// ---------------------------------------------------------------------------
// Single-query model

SingleQueryThresholds thresholds_from_table(const QueryStatsTable& table, double hot_quantile,
                                            double cold_quantile, double short_duration_s) {
  SingleQueryThresholds t;
  t.short_duration_s = short_duration_s;
  if (table.size() == 0) {
    // Without a table every frequency is 0: R1 never fires, R2 never fires.
    t.hot_frequency = std::numeric_limits<double>::infinity();
    t.cold_frequency = 0.0;
    return t;
  }
  const std::vector<double> f = table.frequencies();
  t.hot_frequency = quantile(f, hot_quantile);
  t.cold_frequency = quantile(f, cold_quantile);
  return t;
}

int SingleQueryModel::matching_rule(const ReducedFeatureVector& row) const {
  const double freq = row[ReducedId::QueryFrequency].value_or(0.0);
  const bool no_click = row[ReducedId::S_NumClick].value_or(0.0) == 0.0;
  const bool short_session =
      row[ReducedId::SessionDuration].value_or(0.0) <= thresholds.short_duration_s;
  if (freq >= thresholds.hot_frequency && no_click && short_session) return 0;
  if (no_click && freq < thresholds.cold_frequency && short_session) return 1;
  return -1;
}

SinglePrediction SingleQueryModel::predict(const ReducedFeatureVector& row) const {
  SinglePrediction p;
  const int rule = matching_rule(row);
  if (rule >= 0) {
    p.label = rule == 0 ? num_classes - 1 : 0;
    p.rule = rule == 0 ? "R1" : "R2";
    p.scores.assign(static_cast<std::size_t>(num_classes), 0.0);
    p.scores[static_cast<std::size_t>(p.label)] = 1.0;
    return p;
  }
  FeatureRow cells(row.slots().begin(), row.slots().end());
  const std::vector<double> x = apply_imputation(cells, imputation);
  p.scores = fallback->predict_proba(x);
  p.label = argmax(p.scores);
  p.rule = "tree";
  return p;
}

json SingleQueryModel::to_json() const {
  return {{"num_classes", num_classes},
          {"feature_schema", reduced_feature_names()},
          {"thresholds",
           {{"hot_frequency", thresholds.hot_frequency},
            {"cold_frequency", thresholds.cold_frequency},
            {"short_duration_s", thresholds.short_duration_s}}},
          {"imputation_stats", {{"medians", imputation.medians}}},
          {"fallback", classifier_to_json(*fallback)}};
}

SingleQueryModel SingleQueryModel::from_json(const json& j) {
  try {
    SingleQueryModel m;
    m.num_classes = j.at("num_classes").get<int>();
    const json& t = j.at("thresholds");
    // JSON has no infinity; a null hot threshold means "never".
    m.thresholds.hot_frequency = t.at("hot_frequency").is_null()
                                     ? std::numeric_limits<double>::infinity()
                                     : t.at("hot_frequency").get<double>();
    m.thresholds.cold_frequency = t.at("cold_frequency").get<double>();
    m.thresholds.short_duration_s = t.at("short_duration_s").get<double>();
    m.imputation.medians = j.at("imputation_stats").at("medians").get<std::vector<double>>();
    auto tree = std::dynamic_pointer_cast<const TreeModel>(classifier_from_json(j.at("fallback")));
    if (!tree) throw Error("model.Malformed", "single-query fallback must be a tree");
    m.fallback = std::const_pointer_cast<TreeModel>(tree);
    if (m.imputation.medians.size() != kNumReducedFeatures) {
      throw Error("model.Malformed", "single-query imputation has the wrong width");
    }
    return m;
  } catch (const json::exception& e) {
    throw Error("model.Malformed", e.what());
  }
}

SingleQueryModel train_single_query(const std::vector<ReducedFeatureVector>& rows,
                                    std::span<const int> labels, int num_classes,
                                    const SingleQueryThresholds& thresholds,
                                    const CartParams& tree) {
  if (rows.empty() || rows.size() != labels.size()) {
    throw Error("learners.EmptyData", "single-query training needs labeled rows");
  }
  SingleQueryModel m;
  m.num_classes = num_classes;
  m.thresholds = thresholds;
  const FeatureMatrix cells = to_feature_matrix(rows);
  Imputed imp = impute_missing(cells, reduced_feature_names());
  m.imputation = imp.stats;
  std::vector<std::size_t> rest;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (m.matching_rule(rows[r]) < 0) rest.push_back(r);
  }
  if (rest.empty()) {
    rest.resize(rows.size());
    std::iota(rest.begin(), rest.end(), 0);
  }
  std::vector<int> y;
  for (std::size_t r : rest) y.push_back(labels[r]);
  m.fallback = train_cart(imp.x.select_rows(rest), y, num_classes, tree);
  return m;
}

// ---------------------------------------------------------------------------
// Dispatcher

FinalPrediction predict_final(const FinalModel& model, const Session& session,
                              const QueryStatsTable& query_stats) {
  FinalPrediction out;
  if (session.queries.size() == 1) {
    const SinglePrediction p =
        model.single.predict(extract_single_query_features(session, query_stats, model.features));
    out.label = p.label;
    out.tag = "single";
    out.detail = p.rule;
    out.scores = p.scores;
    return out;
  }
  const FeatureVector fv = extract_features(session, model.features);
  FeatureRow cells(fv.slots().begin(), fv.slots().end());
  const std::vector<double> x = apply_imputation(cells, model.imputation);
  out.scores = score_hybrid(model.hybrid, x);
  out.label = argmax(out.scores);
  out.tag = "hybrid";
  return out;
}

namespace {

json feature_config_to_json(const FeatureConfig& c) {
  const auto& d = c.dwell;
  return {{"long40", d.long40},
          {"long60", d.long60},
          {"short20", d.short20},
          {"short5", d.short5},
          {"very_long185", d.very_long185},
          {"short10", d.short10},
          {"delta_long60", d.delta_long60},
          {"delta_short50", d.delta_short50},
          {"jaccard_tokens", c.tokens == JaccardTokens::Character ? "character" : "whitespace"}};
}

FeatureConfig feature_config_from_json(const json& j) {
  FeatureConfig c;
  auto& d = c.dwell;
  d.long40 = j.at("long40").get<double>();
  d.long60 = j.at("long60").get<double>();
  d.short20 = j.at("short20").get<double>();
  d.short5 = j.at("short5").get<double>();
  d.very_long185 = j.at("very_long185").get<double>();
  d.short10 = j.at("short10").get<double>();
  d.delta_long60 = j.at("delta_long60").get<double>();
  d.delta_short50 = j.at("delta_short50").get<double>();
  c.tokens = j.at("jaccard_tokens").get<std::string>() == "whitespace" ? JaccardTokens::Whitespace
                                                                       : JaccardTokens::Character;
  return c;
}

}  // namespace

json final_model_to_json(const FinalModel& model) {
  ModelEnvelope env;
  env.model_kind = "final";
  for (int c = 0; c < model.hybrid.num_classes; ++c) env.class_list.push_back(c);
  env.feature_schema = feature_names();
  env.standardization = model.standardization;
  env.imputation = model.imputation;
  env.parameters = {{"features", feature_config_to_json(model.features)},
                    {"dwell_cap_ms", model.dwell_cap_ms},
                    {"page_label_cuts", model.page_label_cuts},
                    {"dispatch", "single if one query, else hybrid"}};
  json single = model.single.to_json();
  if (std::isinf(model.single.thresholds.hot_frequency)) {
    single["thresholds"]["hot_frequency"] = nullptr;
  }
  env.structure = {{"hybrid", model.hybrid.to_json()}, {"single", single}};
  return envelope_to_json(env);
}

FinalModel final_model_from_json(const json& j) {
  const ModelEnvelope env = envelope_from_json(j);
  if (env.model_kind != "final") {
    throw Error("model.Malformed", "expected a final model, got '" + env.model_kind + "'");
  }
  if (env.feature_schema != feature_names() || env.imputation.medians.size() != kNumFeatures) {
    throw Error("model.Malformed", "feature schema differs from this build's catalog");
  }
  try {
    FinalModel m;
    m.imputation = env.imputation;
    m.standardization = env.standardization;
    m.features = feature_config_from_json(env.parameters.at("features"));
    m.dwell_cap_ms = env.parameters.at("dwell_cap_ms").get<std::int64_t>();
    m.page_label_cuts =
        env.parameters.at("page_label_cuts").get<std::vector<std::vector<double>>>();
    m.hybrid = HybridModel::from_json(env.structure.at("hybrid"));
    m.single = SingleQueryModel::from_json(env.structure.at("single"));
    return m;
  } catch (const json::exception& e) {
    throw Error("model.Malformed", e.what());
  }
}

void write_final_model(const std::string& path, const FinalModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io.WriteFailed", "cannot write " + path);
  out << final_model_to_json(model).dump() << '\n';
}

FinalModel read_final_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("model.NotFound", "no model artifact at " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("model.Malformed", e.what());
  }
  return final_model_from_json(j);
}

}  // namespace sessat
