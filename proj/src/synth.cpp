#include "sessat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <set>
#include <sstream>

#include "sessat/error.hpp"
#include "sessat/rng.hpp"

namespace sessat {

std::array<LabelBehavior, kNumLabels> SynthConfig::default_behavior() {
  std::array<LabelBehavior, kNumLabels> b;
  // Low: gives up early; few, short, scattered clicks.
  b[0].extra_queries = 0.5;
  b[0].clicks_per_query = 0.45;
  b[0].long_click_prob = 0.03;
  b[0].position_p = 0.22;
  b[0].page_turns = 0.15;
  b[0].short_dwell_max_s = 15;
  b[0].reformulation = 0.7;
  b[0].suggestion_prob = 0.1;
  b[0].related_prob = 0.05;
  // Medium: struggles; many queries, clicks and page turns.
  b[1].extra_queries = 3.2;
  b[1].clicks_per_query = 1.9;
  b[1].long_click_prob = 0.12;
  b[1].position_p = 0.3;
  b[1].page_turns = 0.7;
  b[1].short_dwell_max_s = 45;
  b[1].reformulation = 0.6;
  b[1].suggestion_prob = 0.3;
  b[1].related_prob = 0.2;
  // High: some effort, finds useful results.
  b[2].extra_queries = 1.6;
  b[2].clicks_per_query = 1.5;
  b[2].long_click_prob = 0.5;
  b[2].position_p = 0.45;
  b[2].page_turns = 0.3;
  b[2].short_dwell_max_s = 50;
  b[2].reformulation = 0.5;
  b[2].suggestion_prob = 0.25;
  b[2].related_prob = 0.15;
  // Very high: satisfied quickly near the top of the page.
  b[3].extra_queries = 0.4;
  b[3].clicks_per_query = 1.0;
  b[3].long_click_prob = 0.85;
  b[3].position_p = 0.75;
  b[3].page_turns = 0.05;
  b[3].short_dwell_max_s = 40;
  b[3].reformulation = 0.4;
  b[3].suggestion_prob = 0.2;
  b[3].related_prob = 0.1;
  return b;
}

LabelBehavior SynthConfig::default_struggle() {
  LabelBehavior b;
  b.extra_queries = 4.0;
  b.clicks_per_query = 2.0;
  b.long_click_prob = 0.0;
  b.position_p = 0.2;
  b.page_turns = 0.9;
  b.short_dwell_max_s = 12;
  b.reformulation = 0.8;
  b.suggestion_prob = 0.3;
  b.related_prob = 0.2;
  return b;
}

namespace {

struct Vocabulary {
  std::vector<std::string> words;
  std::vector<std::string> queries;  // by popularity rank
};

Vocabulary make_vocabulary(const SynthConfig& cfg, QueryStatsTable& table) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* kNuclei[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  // A few non-ASCII words keep multi-byte text in the generated logs.
  static const char* kExtra[] = {"\u5929\u6c14", "\u624b\u673a", "\u5730\u56fe", "caf\u00e9",
                                 "na\u00efve"};
  Rng rng(cfg.vocabulary_seed);
  Vocabulary v;
  std::set<std::string> seen;
  while (v.words.size() < 300) {
    std::string w;
    const int syllables = rng.between(1, 3);
    for (int s = 0; s < syllables; ++s) {
      w += kOnsets[rng.index(std::size(kOnsets))];
      w += kNuclei[rng.index(std::size(kNuclei))];
    }
    if (seen.insert(w).second) v.words.push_back(w);
  }
  for (const char* w : kExtra) v.words.emplace_back(w);

  std::set<std::string> used;
  while (v.queries.size() < cfg.vocabulary_size) {
    std::string q;
    const int n = rng.between(1, 3);
    for (int i = 0; i < n; ++i) {
      if (i) q += ' ';
      q += v.words[rng.index(v.words.size())];
    }
    if (used.insert(q).second) v.queries.push_back(q);
  }
  for (std::size_t r = 0; r < v.queries.size(); ++r) {
    QueryStats s;
    s.frequency = std::round(100000.0 / std::pow(static_cast<double>(r + 1), 1.1));
    s.click_ratio = std::round(rng.uniform(0.2, 0.9) * 1000.0) / 1000.0;
    table.set(v.queries[r], s);
  }
  return v;
}

std::string edit_query(const std::string& q, const Vocabulary& v, Rng& rng) {
  std::vector<std::string> parts;
  std::stringstream ss(q);
  std::string w;
  while (ss >> w) parts.push_back(w);
  const int op = rng.between(0, 2);
  if (op == 0 || parts.size() == 1) {
    parts.push_back(v.words[rng.index(v.words.size())]);
  } else if (op == 1) {
    parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(rng.index(parts.size())));
  } else {
    parts[rng.index(parts.size())] = v.words[rng.index(v.words.size())];
  }
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

// Popularity-biased pick over the whole table.
const std::string& any_query(const Vocabulary& v, Rng& rng) {
  const double u = rng.uniform();
  return v.queries[static_cast<std::size_t>(u * u * static_cast<double>(v.queries.size()))];
}

const std::string& hot_query(const Vocabulary& v, Rng& rng) {
  const std::size_t top = std::max<std::size_t>(1, v.queries.size() / 100 - 1);
  return v.queries[rng.index(top)];
}

const std::string& cold_query(const Vocabulary& v, Rng& rng) {
  const std::size_t from = v.queries.size() * 6 / 10;
  return v.queries[from + rng.index(v.queries.size() - from)];
}

// Neither hot nor cold.
const std::string& middle_query(const Vocabulary& v, Rng& rng) {
  const std::size_t from = v.queries.size() / 50;
  const std::size_t to = v.queries.size() * 4 / 10;
  return v.queries[from + rng.index(to - from)];
}

struct PlannedClick {
  int rank = 1;
  int page = 1;
  std::int64_t dwell_ms = 0;
};

struct PlannedQuery {
  std::string text;
  InputType input = InputType::Manual;
  std::int64_t think_ms = 0;
  // Actions in order: clicks and page turns ('C' / 'P').
  std::string actions;
  std::vector<PlannedClick> clicks;
  std::int64_t linger_ms = 0;  // wait after the last action when it was not a click
};

std::int64_t seconds_ms(double s) { return static_cast<std::int64_t>(std::llround(s * 1000.0)); }

int geometric_rank(double p, Rng& rng) {
  int k = 1;
  while (k < 10 && !rng.bernoulli(p)) ++k;
  return k;
}

std::int64_t click_dwell(const LabelBehavior& b, Rng& rng) {
  if (rng.bernoulli(b.long_click_prob)) return seconds_ms(rng.uniform(60.0, 400.0));
  return seconds_ms(rng.uniform(2.0, b.short_dwell_max_s));
}

void plan_actions(PlannedQuery& q, int clicks, int turns, const LabelBehavior& b, Rng& rng) {
  q.actions = std::string(static_cast<std::size_t>(clicks), 'C') +
              std::string(static_cast<std::size_t>(turns), 'P');
  rng.shuffle(q.actions);
  int page = 1;
  for (char a : q.actions) {
    if (a == 'P') {
      ++page;
      continue;
    }
    PlannedClick c;
    c.page = page;
    c.rank = geometric_rank(b.position_p, rng) + 10 * (page - 1);
    c.dwell_ms = click_dwell(b, rng);
    q.clicks.push_back(c);
  }
  q.linger_ms = seconds_ms(rng.uniform(3.0, 15.0));
}

InputType follow_up_input(const LabelBehavior& b, Rng& rng) {
  const double manual = std::max(0.0, 1.0 - b.suggestion_prob - b.related_prob - b.history_prob);
  switch (rng.categorical({manual, b.suggestion_prob, b.related_prob, b.history_prob})) {
    case 1: return InputType::Suggestion;
    case 2: return InputType::RelatedSearch;
    case 3: return InputType::History;
    default: return InputType::Manual;
  }
}

std::vector<PlannedQuery> plan_multi(int label, const LabelBehavior& b, const Vocabulary& v,
                                     Rng& rng) {
  const int nq = std::min(2 + rng.poisson(b.extra_queries), 10);
  std::vector<PlannedQuery> out;
  for (int i = 0; i < nq; ++i) {
    PlannedQuery q;
    if (i == 0) {
      q.text = any_query(v, rng);
    } else {
      q.input = follow_up_input(b, rng);
      q.text = rng.bernoulli(b.reformulation) ? edit_query(out.back().text, v, rng)
                                              : any_query(v, rng);
    }
    q.think_ms = seconds_ms(rng.uniform(2.0, 8.0));
    int clicks = std::min(rng.poisson(b.clicks_per_query), 8);
    // Satisfied sessions end on a clicked query.
    if (label >= 2 && i == nq - 1 && clicks == 0) clicks = 1;
    const int turns = std::min(rng.poisson(b.page_turns), 3);
    plan_actions(q, clicks, turns, b, rng);
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<PlannedQuery> plan_single(int label, const LabelBehavior& b, const Vocabulary& v,
                                      Rng& rng) {
  PlannedQuery q;
  q.think_ms = seconds_ms(rng.uniform(2.0, 6.0));
  auto no_click = [&](double linger_lo, double linger_hi) {
    q.actions.clear();
    q.linger_ms = seconds_ms(rng.uniform(linger_lo, linger_hi));
  };
  switch (label) {
    case 0:
      if (rng.bernoulli(0.6)) {
        q.text = cold_query(v, rng);  // abandoned at once
        no_click(0.5, 3.0);
      } else {
        q.text = any_query(v, rng);
        plan_actions(q, rng.between(1, 3), rng.poisson(0.3), b, rng);
      }
      break;
    case 3:
      if (rng.bernoulli(0.45)) {
        q.text = hot_query(v, rng);  // answered on the result page
        no_click(0.5, 3.0);
      } else {
        q.text = any_query(v, rng);
        plan_actions(q, 1, 0, b, rng);
      }
      break;
    default:
      if (rng.bernoulli(0.1)) {
        q.text = middle_query(v, rng);  // reads snippets for a while
        no_click(15.0, 40.0);
      } else {
        q.text = any_query(v, rng);
        plan_actions(q, rng.between(1, label == 1 ? 4 : 2), rng.poisson(b.page_turns), b, rng);
      }
      break;
  }
  return {q};
}

// Three integer session scores in [0, 3] whose mean discretizes to `label`.
std::vector<double> annotator_scores(int label, Rng& rng) {
  static const int kLo[] = {0, 3, 6, 9};
  static const int kHi[] = {2, 5, 8, 9};
  const int sum = rng.between(kLo[label], kHi[label]);
  std::vector<int> s(3, 0);
  for (int k = 0; k < sum; ++k) {
    std::size_t a;
    do {
      a = rng.index(3);
    } while (s[a] >= 3);
    ++s[a];
  }
  return {static_cast<double>(s[0]), static_cast<double>(s[1]), static_cast<double>(s[2])};
}

std::vector<double> query_scores(int label, std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    int base = label == 0 ? 0 : label == 3 ? 2 : 1;
    if (label == 2 && rng.bernoulli(0.5)) base = 2;
    if (rng.bernoulli(0.15)) base += rng.bernoulli(0.5) ? 1 : -1;
    out[i] = static_cast<double>(std::clamp(base, 0, 2));
  }
  return out;
}

void validate(const SynthConfig& cfg) {
  double total = 0.0;
  for (double p : cfg.label_prior) {
    if (!(p >= 0.0)) throw Error("synth.InvalidConfig", "label prior entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw Error("synth.InvalidConfig", "label prior must sum to 1");
  }
  if (!(cfg.single_query_fraction >= 0.0 && cfg.single_query_fraction <= 1.0)) {
    throw Error("synth.InvalidConfig", "single-query fraction must lie in [0, 1]");
  }
  if (!(cfg.skim_fraction >= 0.0 && cfg.skim_fraction <= 1.0) || !(cfg.skim_dwell_scale > 0.0)) {
    throw Error("synth.InvalidConfig", "skim fraction must lie in [0, 1] and the dwell scale be positive");
  }
  if (!(cfg.struggle_fraction >= 0.0 && cfg.struggle_fraction <= 1.0)) {
    throw Error("synth.InvalidConfig", "struggle fraction must lie in [0, 1]");
  }
  if (cfg.vocabulary_size < 200) {
    throw Error("synth.InvalidConfig", "vocabulary needs at least 200 queries");
  }
}

}  // namespace

SynthOutput synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  SynthOutput out;
  const Vocabulary vocab = make_vocabulary(cfg, out.query_stats);
  const std::vector<double> prior(cfg.label_prior.begin(), cfg.label_prior.end());
  const int width = std::max<int>(6, static_cast<int>(std::to_string(cfg.n_sessions).size()));

  struct Stamped {
    BehaviorEvent ev;
    std::size_t session;
    std::size_t seq;
  };
  std::vector<Stamped> all;

  for (std::size_t s = 0; s < cfg.n_sessions; ++s) {
    Rng rng = Rng::substream(cfg.seed, s);
    const int label = static_cast<int>(rng.categorical(prior));
    const bool single = rng.bernoulli(cfg.single_query_fraction);
    const bool struggles = label == 0 && !single && rng.bernoulli(cfg.struggle_fraction);
    const LabelBehavior& b = struggles ? cfg.struggle : cfg.behavior[static_cast<std::size_t>(label)];
    std::vector<PlannedQuery> plan =
        single ? plan_single(label, b, vocab, rng) : plan_multi(label, b, vocab, rng);
    if (!single && rng.bernoulli(cfg.skim_fraction)) {
      for (std::size_t qi = 0; qi < plan.size(); ++qi) {
        for (auto& c : plan[qi].clicks) {
          c.dwell_ms = std::max<std::int64_t>(1000, std::llround(static_cast<double>(c.dwell_ms) * cfg.skim_dwell_scale));
        }
        if (qi > 0 && rng.bernoulli(0.8)) plan[qi].input = InputType::Suggestion;
      }
    }

    std::string id = std::to_string(s + 1);
    id = cfg.id_prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
    const std::string user = "u" + std::to_string(rng.index(100000));

    std::vector<BehaviorEvent> events;
    std::int64_t t = cfg.start_ts_ms + static_cast<std::int64_t>(s) * 30'000 +
                     static_cast<std::int64_t>(rng.index(20'000));
    auto base_event = [&](EventKind kind) {
      BehaviorEvent ev;
      ev.goal_id = id;
      ev.user_id = user;
      ev.ts_ms = t;
      ev.kind = kind;
      return ev;
    };
    for (std::size_t qi = 0; qi < plan.size(); ++qi) {
      const PlannedQuery& q = plan[qi];
      BehaviorEvent qe = base_event(EventKind::Query);
      qe.query_text = q.text;
      qe.input_type = q.input;
      events.push_back(qe);
      t += q.think_ms;
      std::size_t ci = 0;
      int page = 1;
      bool last_was_click = false;
      for (char a : q.actions) {
        if (a == 'P') {
          ++page;
          BehaviorEvent pe = base_event(EventKind::PageTurn);
          pe.page_num = page;
          events.push_back(pe);
          t += seconds_ms(2.0);
          last_was_click = false;
        } else {
          const PlannedClick& c = q.clicks[ci++];
          BehaviorEvent ce = base_event(EventKind::Click);
          ce.rank_pos = c.rank;
          ce.page_num = c.page;
          ce.url = "https://example.org/" + std::to_string(s + 1) + "/" + std::to_string(qi + 1) +
                   "/" + std::to_string(c.rank);
          events.push_back(ce);
          t += c.dwell_ms;
          last_was_click = true;
        }
      }
      if (!last_was_click) t += q.linger_ms;
    }
    events.push_back(base_event(EventKind::SessionEnd));

    for (std::size_t k = 0; k < events.size(); ++k) all.push_back({events[k], s, k});

    SessionizeResult grouped = sessionize(events);
    out.sessions.push_back(derive_dwells(std::move(grouped.sessions.front())));

    AnnotatedSession ann;
    ann.goal_id = id;
    ann.annotator_ids = {"a1", "a2", "a3"};
    ann.annotator_scores = annotator_scores(label, rng);
    for (int a = 0; a < 3; ++a) ann.per_query_scores.push_back(query_scores(label, plan.size(), rng));
    ann.s = (ann.annotator_scores[0] + ann.annotator_scores[1] + ann.annotator_scores[2]) / 3.0;
    ann.q.assign(plan.size(), 0.0);
    for (const auto& qs : ann.per_query_scores) {
      for (std::size_t i = 0; i < qs.size(); ++i) ann.q[i] += qs[i] / 3.0;
    }
    out.annotations.push_back(std::move(ann));
    out.goal_ids.push_back(id);
    out.labels.push_back(label);
  }

  // The log interleaves concurrent sessions by time.
  std::stable_sort(all.begin(), all.end(), [](const Stamped& a, const Stamped& b) {
    if (a.ev.ts_ms != b.ev.ts_ms) return a.ev.ts_ms < b.ev.ts_ms;
    if (a.session != b.session) return a.session < b.session;
    return a.seq < b.seq;
  });
  out.events.reserve(all.size());
  for (auto& st : all) out.events.push_back(std::move(st.ev));
  return out;
}

void write_truth_csv(std::ostream& out, const std::vector<std::string>& goal_ids,
                     const std::vector<int>& labels) {
  out << "goal_id,label\n";
  for (std::size_t i = 0; i < goal_ids.size(); ++i) out << goal_ids[i] << ',' << labels[i] << '\n';
}

void read_truth_csv(std::istream& in, std::vector<std::string>& goal_ids, std::vector<int>& labels) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("goal_id", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error("eval.MalformedTruth", "line " + std::to_string(line_no) + ": expected goal_id,label");
    }
    try {
      std::size_t used = 0;
      const std::string rest = line.substr(comma + 1);
      const int label = std::stoi(rest, &used);
      if (used != rest.size() || label < 0 || label >= kNumLabels) throw std::invalid_argument("");
      goal_ids.push_back(line.substr(0, comma));
      labels.push_back(label);
    } catch (const std::exception&) {
      throw Error("eval.MalformedTruth", "line " + std::to_string(line_no) + ": bad label");
    }
  }
}

}  // namespace sessat
