#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sessat/session.hpp"

namespace fixtures {

// Builds a session directly: each query is (text, clicks), clicks are
// (dwell seconds, rank). Timestamps are laid out so derive_dwells would give
// the same dwells back.
struct QuerySpec {
  std::string text;
  std::vector<std::pair<double, int>> clicks;
  sessat::InputType input = sessat::InputType::Manual;
};

inline sessat::Session make_session(const std::vector<QuerySpec>& queries,
                                    std::string goal_id = "g") {
  sessat::Session s;
  s.goal_id = std::move(goal_id);
  s.user_id = "u";
  std::int64_t t = 0;
  for (const auto& spec : queries) {
    sessat::QueryRecord q;
    q.text = spec.text;
    q.input_type = spec.input;
    q.issue_ts_ms = t;
    t += 1000;
    for (const auto& [dwell_s, rank] : spec.clicks) {
      const auto dwell = static_cast<std::int64_t>(dwell_s * 1000.0);
      q.clicks.push_back({"http://x/" + std::to_string(rank), rank, 1, t, dwell});
      t += dwell;
    }
    t += 1000;
    s.queries.push_back(std::move(q));
  }
  for (std::size_t i = 0; i < s.queries.size(); ++i) {
    const std::int64_t next = i + 1 < s.queries.size() ? s.queries[i + 1].issue_ts_ms : t;
    s.queries[i].interval_ms = next - s.queries[i].issue_ts_ms;
  }
  s.end_ts_ms = t;
  s.duration_ms = t;
  return s;
}

inline sessat::BehaviorEvent query_event(std::string goal, std::int64_t ts, std::string text) {
  sessat::BehaviorEvent ev;
  ev.goal_id = std::move(goal);
  ev.user_id = "u";
  ev.ts_ms = ts;
  ev.kind = sessat::EventKind::Query;
  ev.query_text = std::move(text);
  return ev;
}

inline sessat::BehaviorEvent click_event(std::string goal, std::int64_t ts, int rank) {
  sessat::BehaviorEvent ev;
  ev.goal_id = std::move(goal);
  ev.user_id = "u";
  ev.ts_ms = ts;
  ev.kind = sessat::EventKind::Click;
  ev.url = "http://x/" + std::to_string(rank);
  ev.rank_pos = rank;
  return ev;
}

inline sessat::BehaviorEvent end_event(std::string goal, std::int64_t ts) {
  sessat::BehaviorEvent ev;
  ev.goal_id = std::move(goal);
  ev.user_id = "u";
  ev.ts_ms = ts;
  ev.kind = sessat::EventKind::SessionEnd;
  return ev;
}

}  // namespace fixtures
