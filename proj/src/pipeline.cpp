#include "sessat/pipeline.hpp"

#include <array>

#include "sessat/error.hpp"
#include "sessat/metrics.hpp"
#include "sessat/rng.hpp"
#include "sessat/text_format.hpp"

namespace sessat {

std::map<std::string, int> labels_from_annotations(const std::vector<AnnotatedSession>& ann) {
  std::map<std::string, int> out;
  for (const auto& a : ann) out[a.goal_id] = static_cast<int>(discretize_session_label(a.s));
  return out;
}

namespace {

enum Stage : std::uint64_t {
  kSplitMulti = 1,
  kSplitSingle,
  kOutliers,
  kMulticlass,
  kPairwise,
  kForest,
  kLogReg,
  kSvm,
  kOvr,
  kCart,
};

std::uint64_t stage_seed(std::uint64_t master, Stage stage) {
  return Rng::substream(master, stage).next_u64();
}

struct Part {
  std::vector<const Session*> sessions;
  std::vector<int> labels;
};

std::vector<int> predict_all(const Classifier& model, const Matrix& x) {
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = model.predict(x.row(r));
  return out;
}

}  // namespace

TrainResult train_final_model(const std::vector<Session>& sessions,
                              const std::map<std::string, int>& labels,
                              const QueryStatsTable& query_stats, const TrainConfig& cfg) {
  // Labeled sessions, partitioned by query count.
  std::vector<const Session*> multi, single;
  std::vector<int> multi_y, single_y;
  for (const Session& s : sessions) {
    auto it = labels.find(s.goal_id);
    if (it == labels.end() || s.queries.empty()) continue;
    if (s.queries.size() == 1) {
      single.push_back(&s);
      single_y.push_back(it->second);
    } else {
      multi.push_back(&s);
      multi_y.push_back(it->second);
    }
  }
  if (multi.empty()) throw Error("learners.EmptyData", "no labeled multi-query sessions");
  if (single.empty()) throw Error("learners.EmptyData", "no labeled single-query sessions");

  TrainResult result;
  const std::vector<int> multi_part = split_assignment(multi_y, cfg.ratios, stage_seed(cfg.seed, kSplitMulti));
  const std::vector<int> single_part =
      split_assignment(single_y, cfg.ratios, stage_seed(cfg.seed, kSplitSingle));
  std::array<Part, 3> mparts, sparts;
  for (std::size_t i = 0; i < multi.size(); ++i) {
    auto& p = mparts[static_cast<std::size_t>(multi_part[i])];
    p.sessions.push_back(multi[i]);
    p.labels.push_back(multi_y[i]);
  }
  for (std::size_t i = 0; i < single.size(); ++i) {
    auto& p = sparts[static_cast<std::size_t>(single_part[i])];
    p.sessions.push_back(single[i]);
    p.labels.push_back(single_y[i]);
  }
  {
    // Split file rows in input order.
    std::map<const Session*, int> where;
    for (std::size_t i = 0; i < multi.size(); ++i) where[multi[i]] = multi_part[i];
    for (std::size_t i = 0; i < single.size(); ++i) where[single[i]] = single_part[i];
    for (const Session& s : sessions) {
      auto it = where.find(&s);
      if (it != where.end()) result.split.emplace_back(s.goal_id, it->second);
    }
  }

  // Multi-query features.
  auto features_of = [&](const Part& p) {
    std::vector<FeatureVector> rows;
    rows.reserve(p.sessions.size());
    for (const Session* s : p.sessions) rows.push_back(extract_features(*s, cfg.features));
    return to_feature_matrix(rows);
  };
  const FeatureMatrix train_cells = features_of(mparts[0]);
  Imputed imp = impute_missing(train_cells, feature_names());
  Matrix train_x = std::move(imp.x);
  std::vector<int> train_y = mparts[0].labels;
  const Matrix valid_x = apply_imputation(features_of(mparts[1]), imp.stats);
  const std::vector<int>& valid_y = mparts[1].labels;

  nlohmann::ordered_json outliers_j = nlohmann::ordered_json::array();
  if (cfg.remove_outliers) {
    IsolationForestParams op = cfg.outliers;
    op.seed = stage_seed(cfg.seed, kOutliers);
    const OutlierResult out = detect_outliers(train_x, op);
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < train_x.rows(); ++r) {
      if (!out.flags[r]) keep.push_back(r);
    }
    for (std::size_t r : out.flagged) {
      outliers_j.push_back({{"goal_id", mparts[0].sessions[r]->goal_id}, {"score", out.scores[r]}});
    }
    train_x = train_x.select_rows(keep);
    std::vector<int> y;
    for (std::size_t r : keep) y.push_back(train_y[r]);
    train_y = std::move(y);
  }

  // Hybrid model.
  HybridParams hp = cfg.hybrid;
  hp.multiclass.seed = stage_seed(cfg.seed, kMulticlass);
  hp.pairwise.gbt.seed = stage_seed(cfg.seed, kPairwise);
  hp.pairwise.svm.seed = hp.pairwise.gbt.seed;
  HybridTraining ht = train_hybrid(train_x, train_y, valid_x, valid_y, kNumLabels, hp);
  result.multiclass_valid_f1 = ht.multiclass_valid_f1;
  result.hybrid_valid_f1 = ht.hybrid_valid_f1;

  FinalModel& model = result.model;
  model.hybrid = ht.model;
  model.imputation = imp.stats;
  model.standardization = fit_standardization(train_x);
  model.features = cfg.features;
  model.dwell_cap_ms = cfg.dwell_cap_ms;

  // Baselines.
  if (cfg.compare_learners) {
    result.learner_valid_f1["gbt"] = ht.multiclass_valid_f1;
    CartParams cp;
    cp.seed = stage_seed(cfg.seed, kCart);
    auto cart = train_cart(train_x, train_y, kNumLabels, cp);
    result.learner_valid_f1["cart"] = macro_f1(valid_y, predict_all(*cart, valid_x), kNumLabels);
    ForestParams fp = cfg.forest;
    fp.seed = stage_seed(cfg.seed, kForest);
    auto forest = train_forest(train_x, train_y, kNumLabels, fp);
    result.learner_valid_f1["forest"] = macro_f1(valid_y, predict_all(*forest, valid_x), kNumLabels);
    LogRegParams lp = cfg.logreg;
    lp.seed = stage_seed(cfg.seed, kLogReg);
    auto lr = train_logreg(train_x, train_y, kNumLabels, lp);
    result.learner_valid_f1["logreg"] = macro_f1(valid_y, predict_all(*lr, valid_x), kNumLabels);
    SvmParams sp = cfg.svm;
    sp.seed = stage_seed(cfg.seed, kSvm);
    auto svm = train_linsvm_ovr(train_x, train_y, kNumLabels, sp);
    result.learner_valid_f1["linsvm"] = macro_f1(valid_y, predict_all(*svm, valid_x), kNumLabels);

    // Binary-model combinations over a linear SVM bank.
    BankParams bp;
    bp.learner.kind = LearnerKind::LinSvm;
    bp.learner.svm = sp;
    bp.min_pair_rows = cfg.hybrid.min_pair_rows;
    const PairwiseBank bank = train_pairwise_bank(train_x, train_y, valid_x, valid_y, kNumLabels, bp);
    LabeledDataset train_ds;
    train_ds.x = train_x;
    train_ds.y = train_y;
    train_ds.goal_ids.assign(train_y.size(), "");
    const OvrModels ovr = train_ovr(train_ds, kNumLabels, bp.learner, stage_seed(cfg.seed, kOvr));
    const DagSpec classic = build_classic_dag(bank);
    const DagSpec sat = build_sat_dissat_dag(bank, train_sat_dissat_root(train_x, train_y, bp.learner));
    std::vector<int> p_ovo, p_ovr, p_dag, p_sat;
    for (std::size_t r = 0; r < valid_x.rows(); ++r) {
      p_ovo.push_back(predict_ovo(bank, valid_x.row(r)).label);
      p_ovr.push_back(predict_ovr(ovr, valid_x.row(r)).label);
      p_dag.push_back(predict_dag(classic, valid_x.row(r)).label);
      p_sat.push_back(predict_dag(sat, valid_x.row(r)).label);
    }
    result.combiner_valid_f1["ovo"] = macro_f1(valid_y, p_ovo, kNumLabels);
    result.combiner_valid_f1["ovr"] = macro_f1(valid_y, p_ovr, kNumLabels);
    result.combiner_valid_f1["dag_classic"] = macro_f1(valid_y, p_dag, kNumLabels);
    result.combiner_valid_f1["dag_sat_dissat"] = macro_f1(valid_y, p_sat, kNumLabels);
  }

  // Single-query model.
  auto reduced_of = [&](const Part& p) {
    std::vector<ReducedFeatureVector> rows;
    for (const Session* s : p.sessions) {
      rows.push_back(extract_single_query_features(*s, query_stats, cfg.features));
    }
    return rows;
  };
  const SingleQueryThresholds thr = thresholds_from_table(query_stats, cfg.hot_quantile,
                                                          cfg.cold_quantile, cfg.short_duration_s);
  model.single = train_single_query(reduced_of(sparts[0]), sparts[0].labels, kNumLabels, thr,
                                    cfg.single_tree);

  // Page-metric label maps from the training sessions of both kinds.
  {
    std::array<std::vector<double>, 3> values;
    std::vector<int> ys;
    for (const auto* part : {&mparts[0], &sparts[0]}) {
      for (std::size_t i = 0; i < part->sessions.size(); ++i) {
        const PageMetrics pm = page_metrics(*part->sessions[i], cfg.features.dwell.long60);
        for (std::size_t m = 0; m < kPageMetrics.size(); ++m) {
          values[m].push_back(metric_value(pm, kPageMetrics[m]));
        }
        ys.push_back(part->labels[i]);
      }
    }
    for (std::size_t m = 0; m < kPageMetrics.size(); ++m) {
      model.page_label_cuts.push_back(PageLabelMap::fit(values[m], ys, kNumLabels).cuts);
    }
  }

  // Scores on the held-out parts through the full dispatcher.
  auto score_part = [&](int part) {
    std::vector<PredictionRow> rows;
    std::map<std::string, int> truth;
    for (const auto* p : {&mparts[static_cast<std::size_t>(part)], &sparts[static_cast<std::size_t>(part)]}) {
      for (std::size_t i = 0; i < p->sessions.size(); ++i) {
        rows.push_back({p->sessions[i]->goal_id, predict_final(model, *p->sessions[i], query_stats)});
        truth[p->sessions[i]->goal_id] = p->labels[i];
      }
    }
    return evaluate_predictions(rows, truth);
  };

  nlohmann::ordered_json& rep = result.report;
  rep["seed"] = cfg.seed;
  rep["sizes"] = {{"multi_query", {{"train", mparts[0].sessions.size()},
                                   {"valid", mparts[1].sessions.size()},
                                   {"test", mparts[2].sessions.size()}}},
                  {"single_query", {{"train", sparts[0].sessions.size()},
                                    {"valid", sparts[1].sessions.size()},
                                    {"test", sparts[2].sessions.size()}}}};
  rep["outliers_removed"] = outliers_j;
  rep["multiclass_valid_macro_f1"] = ht.multiclass_valid_f1;
  rep["hybrid_valid_macro_f1"] = ht.hybrid_valid_f1;
  nlohmann::ordered_json cands = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ht.candidates.size(); ++i) {
    const auto& c = ht.candidates[i];
    cands.push_back({{"keep_fraction", c.keep_fraction},
                     {"kept_pairs", c.kept_pairs},
                     {"weights", c.weights},
                     {"valid_macro_f1", c.valid_macro_f1},
                     {"chosen", i == ht.chosen}});
  }
  rep["hybrid_candidates"] = cands;
  nlohmann::ordered_json learners_j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : result.learner_valid_f1) learners_j[k] = v;
  rep["learner_valid_macro_f1"] = learners_j;
  nlohmann::ordered_json comb_j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : result.combiner_valid_f1) comb_j[k] = v;
  rep["combiner_valid_macro_f1"] = comb_j;
  rep["single_query_thresholds"] = {{"hot_frequency", thr.hot_frequency},
                                    {"cold_frequency", thr.cold_frequency},
                                    {"short_duration_s", thr.short_duration_s}};
  rep["valid"] = score_part(1);
  rep["test"] = score_part(2);
  return result;
}

std::vector<PredictionRow> predict_sessions(const FinalModel& model,
                                            const std::vector<Session>& sessions,
                                            const QueryStatsTable& query_stats) {
  std::vector<PredictionRow> rows;
  rows.reserve(sessions.size());
  for (const Session& s : sessions) rows.push_back({s.goal_id, predict_final(model, s, query_stats)});
  return rows;
}

void write_predictions_csv(std::ostream& out, const std::vector<PredictionRow>& rows) {
  out << "goal_id,label,model_tag,rule";
  for (int c = 0; c < kNumLabels; ++c) out << ",score_" << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.goal_id << ',' << r.prediction.label << ',' << r.prediction.tag << ','
        << r.prediction.detail;
    for (double s : r.prediction.scores) out << ',' << format_double(s);
    out << '\n';
  }
}

nlohmann::ordered_json evaluate_predictions(const std::vector<PredictionRow>& rows,
                                            const std::map<std::string, int>& truth) {
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_tag;
  std::vector<int> all_t, all_p;
  for (const auto& r : rows) {
    auto it = truth.find(r.goal_id);
    if (it == truth.end()) continue;
    by_tag[r.prediction.tag].first.push_back(it->second);
    by_tag[r.prediction.tag].second.push_back(r.prediction.label);
    all_t.push_back(it->second);
    all_p.push_back(r.prediction.label);
  }
  nlohmann::ordered_json j;
  for (const char* tag : {"hybrid", "single"}) {
    auto it = by_tag.find(tag);
    if (it == by_tag.end() || it->second.first.empty()) continue;
    j[tag] = metrics_to_json(class_metrics(it->second.first, it->second.second, kNumLabels));
    j[tag]["sessions"] = it->second.first.size();
  }
  if (!all_t.empty()) {
    j["total"] = metrics_to_json(class_metrics(all_t, all_p, kNumLabels));
    j["total"]["sessions"] = all_t.size();
  }
  return j;
}

}  // namespace sessat
