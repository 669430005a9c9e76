#include "sessat/session.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "sessat/error.hpp"

namespace sessat {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Query: return "query";
    case EventKind::Click: return "click";
    case EventKind::PageTurn: return "page_turn";
    case EventKind::SessionEnd: return "session_end";
  }
  return "unknown";
}

const char* to_string(InputType type) {
  switch (type) {
    case InputType::Manual: return "manual";
    case InputType::Suggestion: return "suggestion";
    case InputType::RelatedSearch: return "related_search";
    case InputType::History: return "history";
  }
  return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view name) {
  if (name == "query") return EventKind::Query;
  if (name == "click") return EventKind::Click;
  if (name == "page_turn") return EventKind::PageTurn;
  if (name == "session_end") return EventKind::SessionEnd;
  return std::nullopt;
}

std::optional<InputType> parse_input_type(std::string_view name) {
  if (name == "manual") return InputType::Manual;
  if (name == "suggestion") return InputType::Suggestion;
  if (name == "related_search") return InputType::RelatedSearch;
  if (name == "history") return InputType::History;
  return std::nullopt;
}

std::size_t Session::click_count() const {
  std::size_t n = 0;
  for (const auto& q : queries) n += q.clicks.size();
  return n;
}

namespace {

[[noreturn]] void malformed(const std::string& reason) {
  throw Error("session.MalformedRecord", reason);
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::int64_t require_int(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number_integer()) malformed(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

}  // namespace

BehaviorEvent parse_event(std::string_view line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    malformed(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) malformed("record is not a JSON object");

  BehaviorEvent ev;
  ev.goal_id = require_string(obj, "goal_id");
  if (ev.goal_id.empty()) malformed("empty goal_id");
  if (auto it = obj.find("user_id"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) malformed("field 'user_id' must be a string");
    ev.user_id = it->get<std::string>();
  }
  ev.ts_ms = require_int(obj, "ts_ms");
  if (ev.ts_ms < 0) malformed("negative ts_ms");

  const auto kind = parse_event_kind(require_string(obj, "kind"));
  if (!kind) malformed("unknown kind '" + obj["kind"].get<std::string>() + "'");
  ev.kind = *kind;

  auto optional_page = [&]() {
    if (auto it = obj.find("page_num"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer()) malformed("field 'page_num' must be an integer");
      const auto p = it->get<std::int64_t>();
      if (p < 1) malformed("page_num must be >= 1");
      ev.page_num = static_cast<int>(p);
    }
  };

  switch (ev.kind) {
    case EventKind::Query: {
      ev.query_text = require_string(obj, "query_text");
      if (ev.query_text.empty()) malformed("empty query_text");
      const auto type = parse_input_type(require_string(obj, "input_type"));
      if (!type) malformed("unknown input_type '" + obj["input_type"].get<std::string>() + "'");
      ev.input_type = *type;
      break;
    }
    case EventKind::Click: {
      ev.url = require_string(obj, "url");
      const auto pos = require_int(obj, "rank_pos");
      if (pos < 1) malformed("rank_pos must be >= 1");
      ev.rank_pos = static_cast<int>(pos);
      optional_page();
      break;
    }
    case EventKind::PageTurn:
      optional_page();
      break;
    case EventKind::SessionEnd:
      break;
  }
  return ev;
}

ParseResult parse_log(std::istream& in, bool strict) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      result.events.push_back(parse_event(line));
    } catch (const Error& e) {
      if (strict) {
        throw Error("session.MalformedRecord",
                    "line " + std::to_string(line_no) + ": " + e.what());
      }
      result.malformed.push_back({line_no, e.what()});
    }
  }
  return result;
}

std::string event_to_json(const BehaviorEvent& ev) {
  ordered_json obj;
  obj["goal_id"] = ev.goal_id;
  obj["user_id"] = ev.user_id;
  obj["ts_ms"] = ev.ts_ms;
  obj["kind"] = to_string(ev.kind);
  switch (ev.kind) {
    case EventKind::Query:
      obj["query_text"] = ev.query_text;
      obj["input_type"] = to_string(ev.input_type);
      break;
    case EventKind::Click:
      obj["url"] = ev.url;
      obj["rank_pos"] = ev.rank_pos;
      obj["page_num"] = ev.page_num;
      break;
    case EventKind::PageTurn:
      obj["page_num"] = ev.page_num;
      break;
    case EventKind::SessionEnd:
      break;
  }
  return obj.dump();
}

void write_log(std::ostream& out, const std::vector<BehaviorEvent>& events) {
  for (const auto& ev : events) out << event_to_json(ev) << '\n';
}

SessionizeResult sessionize(const std::vector<BehaviorEvent>& events) {
  // Group by goal_id, keeping goals in order of first appearance.
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<const BehaviorEvent*>> groups;
  for (const auto& ev : events) {
    auto [it, inserted] = slot.try_emplace(ev.goal_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(&ev);
  }

  SessionizeResult result;
  for (auto& group : groups) {
    std::stable_sort(group.begin(), group.end(),
                     [](const BehaviorEvent* a, const BehaviorEvent* b) { return a->ts_ms < b->ts_ms; });

    Session session;
    session.goal_id = group.front()->goal_id;
    session.user_id = group.front()->user_id;
    for (const BehaviorEvent* ev : group) {
      switch (ev->kind) {
        case EventKind::Query: {
          QueryRecord q;
          q.text = ev->query_text;
          q.input_type = ev->input_type;
          q.issue_ts_ms = ev->ts_ms;
          session.queries.push_back(std::move(q));
          break;
        }
        case EventKind::Click:
          if (session.queries.empty()) {
            result.orphans.push_back({ev->goal_id, ev->kind, ev->ts_ms});
          } else {
            session.queries.back().clicks.push_back(
                {ev->url, ev->rank_pos, ev->page_num, ev->ts_ms, 0});
          }
          break;
        case EventKind::PageTurn:
          if (session.queries.empty()) {
            result.orphans.push_back({ev->goal_id, ev->kind, ev->ts_ms});
          } else {
            session.queries.back().page_turn_ts_ms.push_back(ev->ts_ms);
          }
          break;
        case EventKind::SessionEnd:
          session.end_ts_ms = std::max(session.end_ts_ms.value_or(ev->ts_ms), ev->ts_ms);
          break;
      }
    }
    if (session.queries.empty()) {
      result.dropped_goals.push_back(session.goal_id);
    } else {
      result.sessions.push_back(std::move(session));
    }
  }
  return result;
}

Session derive_dwells(Session session, std::int64_t cap_ms) {
  // Every event timestamp of the session, sorted. Events sharing a timestamp
  // with a click are simultaneous with it, not "next".
  std::vector<std::int64_t> timeline;
  for (const auto& q : session.queries) {
    timeline.push_back(q.issue_ts_ms);
    for (const auto& c : q.clicks) timeline.push_back(c.ts_ms);
    timeline.insert(timeline.end(), q.page_turn_ts_ms.begin(), q.page_turn_ts_ms.end());
  }
  if (session.end_ts_ms) timeline.push_back(*session.end_ts_ms);
  std::sort(timeline.begin(), timeline.end());

  for (auto& q : session.queries) {
    for (auto& c : q.clicks) {
      auto next = std::upper_bound(timeline.begin(), timeline.end(), c.ts_ms);
      const std::int64_t gap = next == timeline.end() ? cap_ms : *next - c.ts_ms;
      c.dwell_ms = std::clamp<std::int64_t>(gap, 0, cap_ms);
    }
  }

  const std::int64_t last_event = timeline.back();
  const std::int64_t end = session.end_ts_ms.value_or(last_event);
  for (std::size_t i = 0; i < session.queries.size(); ++i) {
    auto& q = session.queries[i];
    const std::int64_t next_issue =
        i + 1 < session.queries.size() ? session.queries[i + 1].issue_ts_ms : end;
    q.interval_ms = std::max<std::int64_t>(0, next_issue - q.issue_ts_ms);
  }
  session.duration_ms =
      std::max<std::int64_t>(0, last_event - session.queries.front().issue_ts_ms);
  return session;
}

IngestResult ingest(std::istream& in, bool strict, std::int64_t cap_ms) {
  ParseResult parsed = parse_log(in, strict);
  SessionizeResult grouped = sessionize(parsed.events);
  IngestResult out;
  out.sessions.reserve(grouped.sessions.size());
  for (auto& s : grouped.sessions) out.sessions.push_back(derive_dwells(std::move(s), cap_ms));
  out.malformed = std::move(parsed.malformed);
  out.orphans = std::move(grouped.orphans);
  out.dropped_goals = std::move(grouped.dropped_goals);
  return out;
}

std::string session_to_json(const Session& s) {
  ordered_json obj;
  obj["goal_id"] = s.goal_id;
  obj["user_id"] = s.user_id;
  obj["duration_ms"] = s.duration_ms;
  if (s.end_ts_ms) obj["end_ts_ms"] = *s.end_ts_ms;
  ordered_json queries = ordered_json::array();
  for (const auto& q : s.queries) {
    ordered_json jq;
    jq["text"] = q.text;
    jq["input_type"] = to_string(q.input_type);
    jq["issue_ts_ms"] = q.issue_ts_ms;
    jq["interval_ms"] = q.interval_ms;
    jq["page_turns"] = q.page_turns();
    ordered_json clicks = ordered_json::array();
    for (const auto& c : q.clicks) {
      clicks.push_back({{"url", c.url},
                        {"rank_pos", c.rank_pos},
                        {"page_num", c.page_num},
                        {"ts_ms", c.ts_ms},
                        {"dwell_ms", c.dwell_ms}});
    }
    jq["clicks"] = std::move(clicks);
    queries.push_back(std::move(jq));
  }
  obj["queries"] = std::move(queries);
  return obj.dump();
}

}  // namespace sessat
