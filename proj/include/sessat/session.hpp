#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sessat {

enum class EventKind { Query, Click, PageTurn, SessionEnd };
enum class InputType { Manual, Suggestion, RelatedSearch, History };

// Lowercase wire names used in the event log ("query", "related_search", ...).
const char* to_string(EventKind kind);
const char* to_string(InputType type);
std::optional<EventKind> parse_event_kind(std::string_view name);
std::optional<InputType> parse_input_type(std::string_view name);

struct BehaviorEvent {
  std::string goal_id;
  std::string user_id;
  std::int64_t ts_ms = 0;
  EventKind kind = EventKind::Query;
  std::string query_text;                  // Query only
  InputType input_type = InputType::Manual;  // Query only
  std::string url;                         // Click only
  int rank_pos = 0;                        // Click only, >= 1
  int page_num = 1;                        // Click and PageTurn, >= 1

  friend bool operator==(const BehaviorEvent&, const BehaviorEvent&) = default;
};

struct ClickRecord {
  std::string url;
  int rank_pos = 1;
  int page_num = 1;
  std::int64_t ts_ms = 0;
  std::int64_t dwell_ms = 0;

  friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

struct QueryRecord {
  std::string text;
  InputType input_type = InputType::Manual;
  std::int64_t issue_ts_ms = 0;
  std::vector<ClickRecord> clicks;
  std::vector<std::int64_t> page_turn_ts_ms;
  std::int64_t interval_ms = 0;

  std::size_t page_turns() const { return page_turn_ts_ms.size(); }

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct Session {
  std::string goal_id;
  std::string user_id;
  std::vector<QueryRecord> queries;
  std::optional<std::int64_t> end_ts_ms;  // SessionEnd event, if logged
  std::int64_t duration_ms = 0;

  std::size_t click_count() const;

  friend bool operator==(const Session&, const Session&) = default;
};

// ---------------------------------------------------------------------------
// Parsing

struct MalformedRecord {
  std::size_t line_no = 0;  // 1-based
  std::string reason;
};

struct ParseResult {
  std::vector<BehaviorEvent> events;
  std::vector<MalformedRecord> malformed;
};

// Parses one JSON object into an event. Throws Error("session.MalformedRecord").
BehaviorEvent parse_event(std::string_view line);

// Reads a JSON Lines event stream. Blank lines are skipped. In lenient mode bad
// lines are collected in `malformed`; in strict mode the first one throws.
ParseResult parse_log(std::istream& in, bool strict = false);

std::string event_to_json(const BehaviorEvent& event);
void write_log(std::ostream& out, const std::vector<BehaviorEvent>& events);

// ---------------------------------------------------------------------------
// Sessionization

struct OrphanEvent {
  std::string goal_id;
  EventKind kind = EventKind::Click;
  std::int64_t ts_ms = 0;
};

struct SessionizeResult {
  std::vector<Session> sessions;          // in order of first appearance of goal_id
  std::vector<OrphanEvent> orphans;       // clicks/page turns before any query
  std::vector<std::string> dropped_goals;  // goals with no Query event
};

SessionizeResult sessionize(const std::vector<BehaviorEvent>& events);

inline constexpr std::int64_t kDefaultDwellCapMs = 600'000;

// Fills ClickRecord::dwell_ms, QueryRecord::interval_ms and Session::duration_ms
// from timestamps. A click's dwell is the gap to the next event of the session
// (clamped to [0, cap]); a click with no later event gets the cap.
Session derive_dwells(Session session, std::int64_t cap_ms = kDefaultDwellCapMs);

// parse_log + sessionize + derive_dwells.
struct IngestResult {
  std::vector<Session> sessions;
  std::vector<MalformedRecord> malformed;
  std::vector<OrphanEvent> orphans;
  std::vector<std::string> dropped_goals;
};

IngestResult ingest(std::istream& in, bool strict = false,
                    std::int64_t cap_ms = kDefaultDwellCapMs);

std::string session_to_json(const Session& session);

}  // namespace sessat
