#include <algorithm>
#include <map>

#include "doctest.h"
#include "relimine/preprocess.hpp"
#include "relimine/synth.hpp"

using namespace relimine;

namespace {

struct Stats {
  int copies = 0, paragraphCopies = 0, longCopies = 0;
  int llmWheels = 0, promptInputs = 0, longTaskIdles = 0;
  int focusLike = 0;  // types no structured archetype emits
  std::int64_t firstLlmMs = -1;
};

Stats stats_of(const Session& s) {
  Stats st;
  for (const auto& e : s.events) {
    if (e.page == Page::llm && st.firstLlmMs < 0) st.firstLlmMs = e.tStart;
    switch (e.type) {
      case ActionType::copy: {
        ++st.copies;
        const auto len = e.attrs.value_or_zero(NumAttr::copyTextLength);
        st.paragraphCopies += len >= 250 && len <= 700;
        st.longCopies += len >= 1200;
        break;
      }
      case ActionType::mousewheel: st.llmWheels += e.page == Page::llm; break;
      case ActionType::promptInput: ++st.promptInputs; break;
      case ActionType::idle:
        st.longTaskIdles += e.page == Page::task && e.attrs.value_or_zero(NumAttr::idleDuration) >= 6000;
        break;
      case ActionType::blur:
      case ActionType::focus:
      case ActionType::tabSwitch:
      case ActionType::elementSwitch: ++st.focusLike; break;
      default: break;
    }
  }
  return st;
}

// Rule classifier written from the archetype descriptions alone.
std::optional<Archetype> classify(const Session& s) {
  const Stats st = stats_of(s);
  if (st.focusLike > 0) return Archetype::uniformNoise;
  if (st.promptInputs >= 2 && st.longTaskIdles >= 2) return Archetype::hesitator;
  if (st.longCopies >= 2) return Archetype::coarseLocator;
  if (st.paragraphCopies >= 3) return Archetype::copyPasteHeavy;
  if (st.firstLlmMs < 0 || st.firstLlmMs >= 30000) return Archetype::readerFirst;
  if (st.llmWheels >= 10 && st.copies == 0) return Archetype::frequentReferencer;
  return std::nullopt;
}

}  // namespace

TEST_CASE("a rate classifier recovers the archetypes") {
  const Corpus c = gen_corpus(CorpusSpec::standard(0));
  REQUIRE(c.sessions.size() == 360);
  std::map<Archetype, int> hits, totals;
  for (std::size_t i = 0; i < c.sessions.size(); ++i) {
    const auto want = c.truth[i].kind;
    ++totals[want];
    hits[want] += classify(c.sessions[i]) == want;
  }
  int all = 0;
  for (Archetype a : kAllArchetypes) {
    INFO(to_string(a));
    CHECK(hits[a] >= 57);  // 95% of 60
    all += hits[a];
  }
  CHECK(all >= 342);
}

TEST_CASE("archetype signatures") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Stats cp = stats_of(gen_session(Archetype::copyPasteHeavy, 60, seed));
    CHECK(cp.paragraphCopies >= 4);
    CHECK(cp.paragraphCopies <= 6);

    const Session rf = gen_session(Archetype::readerFirst, 60, seed);
    for (const auto& e : rf.events) CHECK(e.page == Page::task);
    CHECK(stats_of(rf).copies == 0);

    const Stats fr = stats_of(gen_session(Archetype::frequentReferencer, 60, seed));
    CHECK(fr.llmWheels >= 15);
    CHECK(fr.llmWheels <= 24);

    const Stats cl = stats_of(gen_session(Archetype::coarseLocator, 60, seed));
    CHECK(cl.longCopies >= 3);
    CHECK(cl.llmWheels >= 12);

    const Stats h = stats_of(gen_session(Archetype::hesitator, 60, seed));
    CHECK(h.longTaskIdles >= 3);
    CHECK(h.promptInputs >= 3);
  }
}

TEST_CASE("generated sessions are legal and bounded") {
  for (Archetype a : kAllArchetypes)
    for (double dur : {15.0, 60.0, 300.0})
      for (double scale : {0.8, 1.2}) {
        const Session s = gen_session(a, dur, 11, scale, TaskId::trip, "x-001");
        INFO(to_string(a), " ", dur);
        CHECK(validate_session(s).empty());
        CHECK_FALSE(s.events.empty());
        for (const auto& e : s.events) {
          CHECK(e.tStart >= 0);
          CHECK(e.tEnd <= static_cast<std::int64_t>(dur * 1000));
        }
        const auto range = planted_score_range(a);
        REQUIRE(s.overreliance);
        CHECK(*s.overreliance >= range.lo);
        CHECK(*s.overreliance <= range.hi);
        CHECK(s.task == TaskId::trip);
        CHECK(s.participantId == "x-001");
      }
  CHECK_THROWS(gen_session(Archetype::hesitator, 0, 1));
  CHECK_THROWS(gen_session(Archetype::hesitator, 60, 1, 0.0));
}

TEST_CASE("structured archetypes survive preprocessing intact") {
  // Gaps exceed every merge window, so merges never fire.
  for (Archetype a : kAllArchetypes) {
    if (a == Archetype::uniformNoise) continue;
    const Session s = gen_session(a, 60, 5);
    const Session p = preprocess_session(s, MergeConfig{});
    CHECK(p.events.size() == s.events.size());
  }
}

TEST_CASE("corpus generation is deterministic") {
  CorpusSpec spec = CorpusSpec::standard(3);
  for (auto& e : spec.entries) e.count = 2;
  const Corpus a = gen_corpus(spec), b = gen_corpus(spec);
  CHECK(a.sessions == b.sessions);
  REQUIRE(a.truth.size() == 36);
  spec.seed = 4;
  CHECK(gen_corpus(spec).sessions != a.sessions);

  for (std::size_t i = 0; i < a.truth.size(); ++i) {
    CHECK(archetype_of(a.truth[i].participantId) == a.truth[i].kind);
    CHECK(a.truth[i].rateScale >= 0.8);
    CHECK(a.truth[i].rateScale <= 1.2);
    CHECK(a.truth[i].plantedScore == a.sessions[i].overreliance);
  }
  CHECK(a.truth[0].participantId == "copyPasteHeavy-000");

  const auto back = truth_from_jsonl(truth_to_jsonl(a.truth));
  REQUIRE(back.size() == a.truth.size());
  CHECK(back[5].participantId == a.truth[5].participantId);
  CHECK(back[5].task == a.truth[5].task);
  CHECK(back[5].plantedScore == a.truth[5].plantedScore);
  CHECK(truth_to_jsonl(back) == truth_to_jsonl(a.truth));
}

TEST_CASE("bad corpus specs are rejected") {
  CorpusSpec spec;
  spec.entries = {{Archetype::hesitator, 0}};
  CHECK_THROWS(gen_corpus(spec));
  spec.entries = {{Archetype::hesitator, 1}};
  spec.jitter = 1.0;
  CHECK_THROWS(gen_corpus(spec));
  spec.jitter = 0.2;
  spec.tasks.clear();
  CHECK_THROWS(gen_corpus(spec));
  CHECK_FALSE(archetype_of("nobody-001"));
}
