#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sessat/features.hpp"
#include "sessat/preprocess.hpp"
#include "sessat/session.hpp"

namespace sessat {

// Behavior parameters of sessions with one satisfaction label. Counts are
// Poisson means; probabilities are per click or per query.
struct LabelBehavior {
  double extra_queries = 1.0;     // multi-query sessions have 2 + Poisson(extra) queries
  double clicks_per_query = 1.0;
  double long_click_prob = 0.3;   // chance a click dwells >= 60 s
  double position_p = 0.4;        // geometric parameter of click rank (higher = nearer the top)
  double page_turns = 0.2;        // per query
  double short_dwell_max_s = 30;  // short clicks dwell uniformly in [2, max]
  double reformulation = 0.5;     // chance a follow-up query edits the previous one
  double suggestion_prob = 0.2;   // input-type mix of follow-up queries
  double related_prob = 0.1;
  double history_prob = 0.05;
};

struct SynthConfig {
  std::size_t n_sessions = 1000;
  std::array<double, kNumLabels> label_prior{0.182, 0.182, 0.413, 0.223};
  double single_query_fraction = 0.325;
  std::array<LabelBehavior, kNumLabels> behavior = default_behavior();
  // Share of multi-query Low sessions that fail after a long search instead of
  // giving up early; they follow `struggle` instead of behavior[0].
  double struggle_fraction = 0.35;
  LabelBehavior struggle = default_struggle();
  // Share of multi-query sessions from fast readers: click dwells shrink by
  // skim_dwell_scale and follow-up queries mostly come from suggestions.
  double skim_fraction = 0.3;
  double skim_dwell_scale = 0.35;
  std::uint64_t seed = 0;
  std::uint64_t vocabulary_seed = 0x5e55;  // query table; shared across runs
  std::size_t vocabulary_size = 2000;
  std::string id_prefix = "g";
  std::int64_t start_ts_ms = 1'700'000'000'000;

  static std::array<LabelBehavior, kNumLabels> default_behavior();
  static LabelBehavior default_struggle();
};

struct SynthOutput {
  std::vector<BehaviorEvent> events;
  std::vector<Session> sessions;  // as the generator planned them (dwells filled)
  std::vector<AnnotatedSession> annotations;
  std::vector<std::string> goal_ids;
  std::vector<int> labels;
  QueryStatsTable query_stats;
};

// Throws synth.InvalidConfig.
SynthOutput synth_generate(const SynthConfig& config);

void write_truth_csv(std::ostream& out, const std::vector<std::string>& goal_ids,
                     const std::vector<int>& labels);
// "goal_id,label" with an optional header line.
void read_truth_csv(std::istream& in, std::vector<std::string>& goal_ids, std::vector<int>& labels);

}  // namespace sessat
