#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "sessat/error.hpp"
#include "sessat/session.hpp"

using namespace sessat;
using fixtures::click_event;
using fixtures::end_event;
using fixtures::query_event;

namespace {

std::string log_of(const std::vector<BehaviorEvent>& events) {
  std::ostringstream out;
  write_log(out, events);
  return out.str();
}

}  // namespace

TEST(ParseLog, EmptyStream) {
  std::istringstream in("");
  auto r = parse_log(in);
  EXPECT_TRUE(r.events.empty());
  EXPECT_TRUE(r.malformed.empty());
}

TEST(ParseLog, PreservesOrder) {
  std::vector<BehaviorEvent> events{query_event("a", 0, "apple"), click_event("a", 100, 1),
                                    click_event("a", 50, 2)};
  std::istringstream in(log_of(events));
  auto r = parse_log(in);
  EXPECT_EQ(r.events, events);
}

TEST(ParseLog, LenientSkipsCorruptLine) {
  std::vector<BehaviorEvent> events;
  for (int i = 0; i < 9; ++i) events.push_back(query_event("g" + std::to_string(i), i, "q"));
  std::string text = log_of(events);
  const auto pos = text.find('\n', text.find('\n') + 1) + 1;  // after line 2
  text.insert(pos, "{\"goal_id\": \"broken\"\n");
  std::istringstream in(text);
  auto r = parse_log(in);
  EXPECT_EQ(r.events.size(), 9u);
  ASSERT_EQ(r.malformed.size(), 1u);
  EXPECT_EQ(r.malformed[0].line_no, 3u);
}

TEST(ParseLog, StrictThrows) {
  std::istringstream in("{\"goal_id\":\"a\"}\n");
  try {
    parse_log(in, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "session.MalformedRecord");
  }
}

TEST(ParseLog, RejectsInvalidFields) {
  EXPECT_THROW(parse_event(R"({"goal_id":"a","user_id":"u","ts_ms":0,"kind":"query",)"
                           R"("query_text":"","input_type":"manual"})"),
               Error);
  EXPECT_THROW(parse_event(R"({"goal_id":"a","user_id":"u","ts_ms":0,"kind":"click",)"
                           R"("url":"x","rank_pos":0})"),
               Error);
  EXPECT_THROW(parse_event(R"({"goal_id":"a","user_id":"u","ts_ms":-1,"kind":"session_end"})"),
               Error);
}

TEST(Sessionize, InterleavedGoals) {
  std::vector<BehaviorEvent> events{query_event("a", 0, "a1"), query_event("b", 5, "b1"),
                                    click_event("a", 10, 1),   query_event("b", 20, "b2"),
                                    query_event("a", 30, "a2"), click_event("b", 40, 3)};
  auto r = sessionize(events);
  ASSERT_EQ(r.sessions.size(), 2u);
  const auto& a = r.sessions[0];
  const auto& b = r.sessions[1];
  EXPECT_EQ(a.goal_id, "a");
  ASSERT_EQ(a.queries.size(), 2u);
  EXPECT_EQ(a.queries[0].text, "a1");
  EXPECT_EQ(a.queries[0].clicks.size(), 1u);
  EXPECT_EQ(a.queries[1].clicks.size(), 0u);
  ASSERT_EQ(b.queries.size(), 2u);
  EXPECT_EQ(b.queries[0].clicks.size(), 0u);
  ASSERT_EQ(b.queries[1].clicks.size(), 1u);
  EXPECT_EQ(b.queries[1].clicks[0].rank_pos, 3);
}

TEST(Sessionize, SingleQuery) {
  auto r = sessionize({query_event("a", 0, "x")});
  ASSERT_EQ(r.sessions.size(), 1u);
  EXPECT_EQ(r.sessions[0].queries.size(), 1u);
  EXPECT_EQ(r.sessions[0].click_count(), 0u);
}

TEST(Sessionize, OrphanClickWithoutQuery) {
  auto r = sessionize({click_event("lost", 0, 1), query_event("ok", 1, "x")});
  ASSERT_EQ(r.orphans.size(), 1u);
  EXPECT_EQ(r.orphans[0].goal_id, "lost");
  ASSERT_EQ(r.dropped_goals.size(), 1u);
  EXPECT_EQ(r.dropped_goals[0], "lost");
  ASSERT_EQ(r.sessions.size(), 1u);
  EXPECT_EQ(r.sessions[0].goal_id, "ok");
}

TEST(DeriveDwells, GapToNextEvent) {
  auto r = sessionize({query_event("a", 0, "x"), click_event("a", 1000, 1),
                       click_event("a", 31000, 2), end_event("a", 76000)});
  auto s = derive_dwells(r.sessions[0], 600000);
  ASSERT_EQ(s.queries[0].clicks.size(), 2u);
  EXPECT_EQ(s.queries[0].clicks[0].dwell_ms, 30000);
  EXPECT_EQ(s.queries[0].clicks[1].dwell_ms, 45000);
  EXPECT_EQ(s.duration_ms, 76000);
}

TEST(DeriveDwells, LastClickGetsCap) {
  auto r = sessionize({query_event("a", 0, "x"), click_event("a", 1000, 1)});
  auto s = derive_dwells(r.sessions[0], 600000);
  EXPECT_EQ(s.queries[0].clicks[0].dwell_ms, 600000);
  auto capped = derive_dwells(r.sessions[0], 1234);
  EXPECT_EQ(capped.queries[0].clicks[0].dwell_ms, 1234);
}

TEST(DeriveDwells, IntervalsNonNegative) {
  auto r = sessionize({query_event("a", 0, "x"), query_event("a", 5000, "y"),
                       click_event("a", 6000, 1), end_event("a", 9000)});
  auto s = derive_dwells(r.sessions[0]);
  EXPECT_EQ(s.queries[0].interval_ms, 5000);
  EXPECT_EQ(s.queries[1].interval_ms, 4000);
}

TEST(Ingest, ClickConservation) {
  std::vector<BehaviorEvent> events;
  std::size_t clicks = 0;
  for (int g = 0; g < 20; ++g) {
    const std::string id = "g" + std::to_string(g);
    std::int64_t t = g * 100000;
    for (int q = 0; q < 1 + g % 3; ++q) {
      events.push_back(query_event(id, t, "q" + std::to_string(q)));
      t += 1000;
      for (int c = 0; c < g % 4; ++c) {
        events.push_back(click_event(id, t, c + 1));
        t += 2000;
        ++clicks;
      }
    }
  }
  std::istringstream in(log_of(events));
  auto r = ingest(in);
  std::size_t seen = 0;
  for (const auto& s : r.sessions) seen += s.click_count();
  EXPECT_EQ(r.sessions.size(), 20u);
  EXPECT_EQ(seen, clicks);
}
