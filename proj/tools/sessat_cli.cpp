// sessat: command-line driver for the session satisfaction pipeline.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sessat/error.hpp"
#include "sessat/eval.hpp"
#include "sessat/explain.hpp"
#include "sessat/features.hpp"
#include "sessat/hybrid.hpp"
#include "sessat/pipeline.hpp"
#include "sessat/preprocess.hpp"
#include "sessat/rng.hpp"
#include "sessat/session.hpp"
#include "sessat/stats.hpp"
#include "sessat/synth.hpp"

namespace fs = std::filesystem;
using namespace sessat;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 7;
  std::string input;
  std::string annotations;
  std::string truth;
  std::string query_stats;
  std::string model;
  std::string out = ".";
  bool strict = false;

  std::int64_t dwell_cap_ms = kDefaultDwellCapMs;
  FeatureConfig features;
  std::string jaccard_tokens = "character";

  // synth
  std::size_t n = 1000;
  double single_fraction = 0.325;
  std::vector<double> prior{0.182, 0.182, 0.413, 0.223};
  std::string id_prefix = "g";

  // analyze
  double alpha = 0.05;

  // train
  TrainConfig train;
  std::string pair_learner = "gbt";

  // explain
  SurrogateParams surrogate;
  double coverage = 0.98;
  std::string categories;
  std::size_t max_sessions = 0;

  // abtest / gsb
  std::string control;
  std::string treatment;
  std::size_t bootstrap = 1000;
  std::size_t sample = 500;
};

std::string error_json(const std::string& code, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"code", code}, {"message", message}};
  return j.dump();
}

std::ifstream open_in(const std::string& path, const char* what) {
  if (path.empty()) throw Error("cli.MissingInput", std::string("--") + what + " is required");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cli.FileNotFound", path);
  return in;
}

std::ofstream open_out(const Options& o, const std::string& name) {
  fs::create_directories(o.out);
  const fs::path path = fs::path(o.out) / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cli.WriteFailed", path.string());
  return out;
}

void write_json(const Options& o, const std::string& name, const nlohmann::ordered_json& j) {
  auto out = open_out(o, name);
  out << j.dump(2) << '\n';
}

FeatureConfig feature_config(const Options& o) {
  FeatureConfig fc = o.features;
  if (o.jaccard_tokens == "character") {
    fc.tokens = JaccardTokens::Character;
  } else if (o.jaccard_tokens == "whitespace") {
    fc.tokens = JaccardTokens::Whitespace;
  } else {
    throw Error("config.InvalidValue", "jaccard-tokens must be character or whitespace");
  }
  return fc;
}

std::vector<Session> load_sessions(const std::string& path, const Options& o, const char* what) {
  auto in = open_in(path, what);
  return ingest(in, o.strict, o.dwell_cap_ms).sessions;
}

QueryStatsTable load_query_stats(const Options& o) {
  if (o.query_stats.empty()) return {};
  auto in = open_in(o.query_stats, "query-stats");
  return QueryStatsTable::read_tsv(in);
}

// Truth labels from --truth (goal_id,label) or, failing that, --annotations.
std::map<std::string, int> load_labels(const Options& o) {
  std::map<std::string, int> labels;
  if (!o.truth.empty()) {
    auto in = open_in(o.truth, "truth");
    std::vector<std::string> ids;
    std::vector<int> ys;
    read_truth_csv(in, ids, ys);
    for (std::size_t i = 0; i < ids.size(); ++i) labels[ids[i]] = ys[i];
    return labels;
  }
  if (o.annotations.empty()) throw Error("cli.MissingInput", "--truth or --annotations is required");
  auto in = open_in(o.annotations, "annotations");
  return labels_from_annotations(read_annotations(in));
}

// ---------------------------------------------------------------------------
// Subcommands

void run_synth(const Options& o) {
  SynthConfig cfg;
  cfg.n_sessions = o.n;
  cfg.single_query_fraction = o.single_fraction;
  if (o.prior.size() != kNumLabels) throw Error("synth.InvalidConfig", "prior needs 4 values");
  for (int c = 0; c < kNumLabels; ++c) cfg.label_prior[c] = o.prior[static_cast<std::size_t>(c)];
  cfg.seed = o.seed;
  cfg.id_prefix = o.id_prefix;
  const SynthOutput s = synth_generate(cfg);
  {
    auto out = open_out(o, "events.jsonl");
    write_log(out, s.events);
  }
  {
    auto out = open_out(o, "annotations.csv");
    write_annotations(out, s.annotations);
  }
  {
    auto out = open_out(o, "truth.csv");
    write_truth_csv(out, s.goal_ids, s.labels);
  }
  {
    auto out = open_out(o, "query_stats.tsv");
    s.query_stats.write_tsv(out);
  }
}

void run_ingest(const Options& o) {
  auto in = open_in(o.input, "input");
  const IngestResult r = ingest(in, o.strict, o.dwell_cap_ms);
  {
    auto out = open_out(o, "sessions.jsonl");
    for (const Session& s : r.sessions) out << session_to_json(s) << '\n';
  }
  nlohmann::ordered_json rep;
  rep["sessions"] = r.sessions.size();
  nlohmann::ordered_json bad = nlohmann::ordered_json::array();
  for (const auto& m : r.malformed) bad.push_back({{"line", m.line_no}, {"reason", m.reason}});
  rep["malformed"] = bad;
  nlohmann::ordered_json orphans = nlohmann::ordered_json::array();
  for (const auto& e : r.orphans) {
    orphans.push_back({{"goal_id", e.goal_id}, {"kind", to_string(e.kind)}, {"ts_ms", e.ts_ms}});
  }
  rep["orphans"] = orphans;
  rep["dropped_goals"] = r.dropped_goals;
  write_json(o, "ingest_report.json", rep);
}

void run_extract(const Options& o) {
  const auto sessions = load_sessions(o.input, o, "input");
  const QueryStatsTable stats = load_query_stats(o);
  const FeatureConfig fc = feature_config(o);
  std::vector<std::string> multi_ids, single_ids;
  std::vector<FeatureVector> multi;
  std::vector<ReducedFeatureVector> single;
  for (const Session& s : sessions) {
    if (s.queries.size() == 1) {
      single_ids.push_back(s.goal_id);
      single.push_back(extract_single_query_features(s, stats, fc));
    } else {
      multi_ids.push_back(s.goal_id);
      multi.push_back(extract_features(s, fc));
    }
  }
  {
    auto out = open_out(o, "features.csv");
    write_feature_csv(out, multi_ids, multi);
  }
  {
    auto out = open_out(o, "features_single.csv");
    write_reduced_feature_csv(out, single_ids, single);
  }
}

void run_analyze(const Options& o) {
  const auto sessions = load_sessions(o.input, o, "input");
  const auto labels = load_labels(o);
  const FeatureConfig fc = feature_config(o);
  std::vector<FeatureVector> rows;
  LabeledDataset data;
  for (const Session& s : sessions) {
    auto it = labels.find(s.goal_id);
    if (it == labels.end() || s.queries.size() < 2) continue;
    rows.push_back(extract_features(s, fc));
    data.goal_ids.push_back(s.goal_id);
    data.y.push_back(it->second);
  }
  if (rows.empty()) throw Error("stats.Empty", "no labeled multi-query sessions");
  Imputed imp = impute_missing(to_feature_matrix(rows), feature_names());
  data.x = std::move(imp.x);
  data.feature_names = feature_names();
  data.imputation = imp.stats;
  const CorrelationReport rep = correlation_report(data, o.alpha);
  {
    auto out = open_out(o, "correlation.csv");
    rep.write_csv(out);
  }
  {
    auto out = open_out(o, "correlation.txt");
    rep.write_text(out);
  }
}

void run_train(const Options& o) {
  const auto sessions = load_sessions(o.input, o, "input");
  const auto labels = load_labels(o);
  const QueryStatsTable stats = load_query_stats(o);
  TrainConfig cfg = o.train;
  cfg.seed = o.seed;
  cfg.features = feature_config(o);
  cfg.dwell_cap_ms = o.dwell_cap_ms;
  cfg.hybrid.pairwise.kind = parse_learner_kind(o.pair_learner);
  const TrainResult r = train_final_model(sessions, labels, stats, cfg);
  fs::create_directories(o.out);
  write_final_model((fs::path(o.out) / "model.json").string(), r.model);
  write_json(o, "validation_metrics.json", r.report);
  auto out = open_out(o, "split.csv");
  out << "goal_id,part\n";
  static const char* kParts[] = {"train", "valid", "test"};
  for (const auto& [id, part] : r.split) out << id << ',' << kParts[part] << '\n';
}

void run_predict(const Options& o) {
  if (o.model.empty()) throw Error("model.NotFound", "--model is required");
  const FinalModel model = read_final_model(o.model);
  Options io = o;
  io.dwell_cap_ms = model.dwell_cap_ms;
  const auto sessions = load_sessions(o.input, io, "input");
  const auto rows = predict_sessions(model, sessions, load_query_stats(o));
  auto out = open_out(o, "predictions.csv");
  write_predictions_csv(out, rows);
}

void run_explain(const Options& o) {
  if (o.model.empty()) throw Error("model.NotFound", "--model is required");
  const FinalModel model = read_final_model(o.model);
  Options io = o;
  io.dwell_cap_ms = model.dwell_cap_ms;
  const auto sessions = load_sessions(o.input, io, "input");

  std::vector<const Session*> multi;
  std::vector<FeatureVector> rows;
  for (const Session& s : sessions) {
    if (s.queries.size() < 2) continue;
    if (o.max_sessions > 0 && multi.size() >= o.max_sessions) break;
    multi.push_back(&s);
    rows.push_back(extract_features(s, model.features));
  }
  if (multi.empty()) throw Error("explain.Empty", "no multi-query sessions to explain");
  // The explained sessions double as the background sample for perturbations.
  const Matrix x = apply_imputation(to_feature_matrix(rows), model.imputation);
  const QuantileTable bins = QuantileTable::fit(x);
  const HybridClassifier clf(model.hybrid);

  std::vector<Explanation> expls;
  expls.reserve(multi.size());
  for (std::size_t i = 0; i < multi.size(); ++i) {
    SurrogateParams sp = o.surrogate;
    sp.seed = Rng::substream(o.seed, i).next_u64();
    Explanation e = fit_local_surrogate(clf, x.row(i), x, model.standardization, feature_names(), sp);
    e.goal_id = multi[i]->goal_id;
    discretize_explanation(e, bins);
    expls.push_back(std::move(e));
  }
  CategoryTable table;
  if (!o.categories.empty()) {
    auto in = open_in(o.categories, "categories");
    table.read_csv(in);
  }
  const RuleSet rules = abstract_rules(expls, table, o.coverage);
  {
    auto out = open_out(o, "explanations.jsonl");
    write_explanations_jsonl(out, expls);
  }
  auto out = open_out(o, "rules.csv");
  write_rules_csv(out, rules);
}

void run_abtest(const Options& o) {
  if (o.model.empty()) throw Error("model.NotFound", "--model is required");
  const FinalModel model = read_final_model(o.model);
  Options io = o;
  io.dwell_cap_ms = model.dwell_cap_ms;
  const auto control = load_sessions(o.control, io, "control");
  const auto treatment = load_sessions(o.treatment, io, "treatment");
  const AbReport rep =
      ab_compare(control, treatment, model, load_query_stats(o), o.bootstrap, o.seed);
  write_json(o, "ab_report.json", rep.to_json());
}

void run_gsb(const Options& o) {
  if (o.model.empty()) throw Error("model.NotFound", "--model is required");
  const FinalModel model = read_final_model(o.model);
  Options io = o;
  io.dwell_cap_ms = model.dwell_cap_ms;
  const auto sessions = load_sessions(o.input, io, "input");
  const auto labels = load_labels(o);
  const QueryStatsTable stats = load_query_stats(o);
  if (model.page_label_cuts.size() != kPageMetrics.size()) {
    throw Error("model.Malformed", "model has no page-label cut points");
  }
  std::vector<int> truth, pred;
  std::vector<std::array<int, 3>> page;
  for (const Session& s : sessions) {
    auto it = labels.find(s.goal_id);
    if (it == labels.end()) continue;
    truth.push_back(it->second);
    pred.push_back(predict_final(model, s, stats).label);
    const PageMetrics pm = page_metrics(s, model.features.dwell.long60);
    std::array<int, 3> pl{};
    for (std::size_t m = 0; m < kPageMetrics.size(); ++m) {
      pl[m] = PageLabelMap{model.page_label_cuts[m]}.label(metric_value(pm, kPageMetrics[m]));
    }
    page.push_back(pl);
  }
  if (truth.empty()) throw Error("eval.EmptyGroup", "no sessions with truth labels");
  const auto sample = gsb_sample(truth.size(), o.sample, o.seed);
  std::vector<GsbTally> tallies;
  for (std::size_t m = 0; m < kPageMetrics.size(); ++m) {
    std::vector<int> pl;
    pl.reserve(page.size());
    for (const auto& p : page) pl.push_back(p[m]);
    tallies.push_back(gsb_judge(truth, pred, pl, sample, to_string(kPageMetrics[m])));
  }
  auto out = open_out(o, "gsb.csv");
  write_gsb_csv(out, tallies);
}

void run_evaluate(const Options& o) {
  if (o.model.empty()) throw Error("model.NotFound", "--model is required");
  const FinalModel model = read_final_model(o.model);
  Options io = o;
  io.dwell_cap_ms = model.dwell_cap_ms;
  const auto sessions = load_sessions(o.input, io, "input");
  const auto labels = load_labels(o);
  const auto rows = predict_sessions(model, sessions, load_query_stats(o));
  nlohmann::ordered_json j = evaluate_predictions(rows, labels);
  if (!j.contains("total")) throw Error("eval.EmptyGroup", "no sessions with truth labels");
  write_json(o, "metrics.json", j);
}

// ---------------------------------------------------------------------------
// Config file: flat "key = value" lines; '#' starts a comment. Keys are long
// option names without dashes.

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config.NotFound", path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config.Malformed", path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    kv.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

// Returns the --config value from raw arguments, if any.
std::string find_config_arg(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

void add_feature_options(CLI::App* sub, Options& o) {
  sub->add_option("--dwell-cap-ms", o.dwell_cap_ms, "Dwell cap in milliseconds");
  sub->add_option("--jaccard-tokens", o.jaccard_tokens, "character or whitespace");
  auto& d = o.features.dwell;
  sub->add_option("--t-long40", d.long40, "Threshold (s) of the *_ge40 slots");
  sub->add_option("--t-long60", d.long60, "Threshold (s) of the *_ge60 slots and long clicks");
  sub->add_option("--t-short20", d.short20, "Threshold (s) of the *_lt20 slots");
  sub->add_option("--t-short5", d.short5, "Threshold (s) of the *_lt5 slots");
  sub->add_option("--t-very-long185", d.very_long185, "Threshold (s) of S_num_click_ge185");
  sub->add_option("--t-short10", d.short10, "Threshold (s) of S_num_click_lt10");
  sub->add_option("--t-delta-long60", d.delta_long60, "Threshold (s) of the Delta long slot");
  sub->add_option("--t-delta-short50", d.delta_short50, "Threshold (s) of the Delta short slot");
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Session-level search satisfaction modeling"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Flat key = value config file");
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--strict", o.strict, "Fail on the first malformed log line");
  };
  auto inputs = [&](CLI::App* sub) {
    sub->add_option("--input", o.input, "Behavior event log (JSON Lines)");
    sub->add_option("--query-stats", o.query_stats, "Query stats TSV");
  };
  auto truth = [&](CLI::App* sub) {
    sub->add_option("--annotations", o.annotations, "Annotation CSV");
    sub->add_option("--truth", o.truth, "Truth CSV goal_id,label (overrides --annotations)");
  };
  auto model = [&](CLI::App* sub) { sub->add_option("--model", o.model, "Model artifact"); };

  std::map<std::string, std::function<void(const Options&)>> handlers;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  common(synth);
  synth->add_option("--n", o.n, "Number of sessions");
  synth->add_option("--single-fraction", o.single_fraction, "Share of single-query sessions");
  synth->add_option("--prior", o.prior, "Label prior, four values")->delimiter(',')->expected(4);
  synth->add_option("--id-prefix", o.id_prefix, "goal_id prefix");
  handlers["synth"] = run_synth;

  auto* ing = app.add_subcommand("ingest", "Parse and sessionize an event log");
  common(ing);
  ing->add_option("--input", o.input, "Behavior event log (JSON Lines)");
  ing->add_option("--dwell-cap-ms", o.dwell_cap_ms, "Dwell cap in milliseconds");
  handlers["ingest"] = run_ingest;

  auto* ext = app.add_subcommand("extract", "Write session feature matrices");
  common(ext);
  inputs(ext);
  add_feature_options(ext, o);
  handlers["extract"] = run_extract;

  auto* ana = app.add_subcommand("analyze", "Feature/label correlation report");
  common(ana);
  ana->add_option("--input", o.input, "Behavior event log (JSON Lines)");
  truth(ana);
  add_feature_options(ana, o);
  ana->add_option("--alpha", o.alpha, "Significance level");
  handlers["analyze"] = run_analyze;

  auto* tr = app.add_subcommand("train", "Train the final model");
  common(tr);
  inputs(tr);
  truth(tr);
  add_feature_options(tr, o);
  auto& t = o.train;
  tr->add_option("--train-ratio", t.ratios.train, "Training share");
  tr->add_option("--valid-ratio", t.ratios.valid, "Validation share");
  tr->add_option("--test-ratio", t.ratios.test, "Test share");
  tr->add_option("--remove-outliers", t.remove_outliers, "Drop isolation-forest outliers");
  tr->add_option("--contamination", t.outliers.contamination, "Outlier share");
  tr->add_option("--outlier-trees", t.outliers.trees, "Isolation trees");
  tr->add_option("--gbt-rounds", t.hybrid.multiclass.rounds, "Boosting rounds (multi-class)");
  tr->add_option("--gbt-depth", t.hybrid.multiclass.max_depth, "Tree depth (multi-class)");
  tr->add_option("--gbt-lr", t.hybrid.multiclass.learning_rate, "Learning rate (multi-class)");
  tr->add_option("--gbt-lambda", t.hybrid.multiclass.lambda, "L2 leaf penalty (multi-class)");
  tr->add_option("--pair-learner", o.pair_learner, "Pairwise learner: cart|forest|gbt|logreg|linsvm");
  tr->add_option("--pair-rounds", t.hybrid.pairwise.gbt.rounds, "Boosting rounds (pairwise)");
  tr->add_option("--min-pair-rows", t.hybrid.min_pair_rows, "Rows per label of a pair");
  tr->add_option("--grid-step", t.hybrid.grid_step, "Weight grid step");
  tr->add_option("--keep-fraction", t.hybrid.keep_fraction, "Confusion mass kept by pruning");
  tr->add_option("--hot-quantile", t.hot_quantile, "Hot-query frequency quantile");
  tr->add_option("--cold-quantile", t.cold_quantile, "Cold-query frequency quantile");
  tr->add_option("--short-duration", t.short_duration_s, "Short session (s) for the rules");
  tr->add_option("--single-depth", t.single_tree.max_depth, "Single-query tree depth");
  tr->add_option("--compare-learners", t.compare_learners, "Report baseline learners");
  tr->add_option("--forest-trees", t.forest.n_trees, "Trees of the baseline forest");
  handlers["train"] = run_train;

  auto* pr = app.add_subcommand("predict", "Label sessions");
  common(pr);
  inputs(pr);
  model(pr);
  handlers["predict"] = run_predict;

  auto* ex = app.add_subcommand("explain", "Per-session explanations and rules");
  common(ex);
  ex->add_option("--input", o.input, "Behavior event log (JSON Lines)");
  model(ex);
  ex->add_option("--samples", o.surrogate.samples, "Perturbations per session");
  ex->add_option("--top-k", o.surrogate.top_k, "Signals per explanation");
  ex->add_option("--kernel-width", o.surrogate.kernel_width, "Kernel width (0 = 0.75 sqrt(d))");
  ex->add_option("--ridge", o.surrogate.ridge, "Ridge penalty");
  ex->add_option("--coverage", o.coverage, "Rule coverage target");
  ex->add_option("--categories", o.categories, "CSV feature,category overrides");
  ex->add_option("--max-sessions", o.max_sessions, "Explain at most this many (0 = all)");
  handlers["explain"] = run_explain;

  auto* ab = app.add_subcommand("abtest", "Compare a control and a treatment log");
  common(ab);
  ab->add_option("--control", o.control, "Control event log");
  ab->add_option("--treatment", o.treatment, "Treatment event log");
  ab->add_option("--query-stats", o.query_stats, "Query stats TSV");
  model(ab);
  ab->add_option("--bootstrap", o.bootstrap, "Bootstrap resamples");
  handlers["abtest"] = run_abtest;

  auto* gsb = app.add_subcommand("gsb", "Good/Same/Bad against page-level metrics");
  common(gsb);
  inputs(gsb);
  truth(gsb);
  model(gsb);
  gsb->add_option("--sample", o.sample, "Sessions sampled");
  handlers["gsb"] = run_gsb;

  auto* ev = app.add_subcommand("evaluate", "Metrics of predictions against truth");
  common(ev);
  inputs(ev);
  truth(ev);
  model(ev);
  handlers["evaluate"] = run_evaluate;

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // Config values go right after the subcommand name so later flags win.
    const std::string config_path = find_config_arg(args);
    if (!config_path.empty() && !args.empty()) {
      CLI::App* sub = nullptr;
      for (auto* s : app.get_subcommands([](CLI::App*) { return true; })) {
        if (s->get_name() == args.front()) sub = s;
      }
      if (sub != nullptr) {
        std::vector<std::string> injected;
        for (const auto& [key, value] : read_config(config_path)) {
          if (key == "config") continue;
          const CLI::Option* opt = sub->get_option_no_throw("--" + key);
          if (opt == nullptr) {
            bool known = false;
            for (auto* s : app.get_subcommands([](CLI::App*) { return true; })) {
              known = known || s->get_option_no_throw("--" + key) != nullptr;
            }
            if (!known) throw Error("config.UnknownKey", key);
            continue;
          }
          if (opt->get_type_size() == 0) {
            if (value == "true" || value == "1") injected.push_back("--" + key);
            continue;
          }
          injected.push_back("--" + key + "=" + value);
        }
        args.insert(args.begin() + 1, injected.begin(), injected.end());
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_json("cli.UsageError", e.what()) << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << error_json(e.code(), e.what()) << '\n';
    return 2;
  }

  try {
    for (auto* s : app.get_subcommands()) handlers.at(s->get_name())(o);
  } catch (const Error& e) {
    std::cerr << error_json(e.code(), e.what()) << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << error_json("model.Malformed", e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << error_json("internal", e.what()) << '\n';
    return 1;
  }
  return 0;
}
