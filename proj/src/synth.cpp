#include "relimine/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "relimine/rng.hpp"

namespace relimine {

namespace tbl = synth_table;

std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::copyPasteHeavy: return "copyPasteHeavy";
    case Archetype::readerFirst: return "readerFirst";
    case Archetype::frequentReferencer: return "frequentReferencer";
    case Archetype::coarseLocator: return "coarseLocator";
    case Archetype::hesitator: return "hesitator";
    case Archetype::uniformNoise: return "uniformNoise";
  }
  return "uniformNoise";
}

std::optional<Archetype> parse_archetype(std::string_view s) {
  for (Archetype a : kAllArchetypes)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

ScoreRange planted_score_range(Archetype a) {
  switch (a) {
    case Archetype::readerFirst: return {0.0, 0.3};
    case Archetype::uniformNoise: return {0.0, 1.0};
    default: return {0.7, 1.0};
  }
}

bool is_high_archetype(Archetype a) {
  return a != Archetype::readerFirst && a != Archetype::uniformNoise;
}

namespace {

using T = ActionType;

AttributeBag mouse_attrs(std::int64_t dur, std::int64_t dist) {
  AttributeBag b;
  b.set(NumAttr::totalMouseMovement, dist);
  b.set(NumAttr::mouseMovementDuration, dur);
  return b;
}
AttributeBag wheel_attrs(std::int64_t dur, std::int64_t dist, Direction d) {
  AttributeBag b;
  b.set(NumAttr::scrollDuration, dur);
  b.set(NumAttr::mousewheelDistance, dist);
  b.mousewheelDirection = d;
  return b;
}
AttributeBag scroll_attrs(std::int64_t dur, std::int64_t dist, Direction d) {
  AttributeBag b;
  b.set(NumAttr::scrollDuration, dur);
  b.set(NumAttr::scrollDistance, dist);
  b.scrollDirection = d;
  return b;
}
AttributeBag key_attrs(std::int64_t dur, std::int64_t keys) {
  AttributeBag b;
  b.set(NumAttr::keypressDuration, dur);
  b.set(NumAttr::keypressKeyCount, keys);
  return b;
}
AttributeBag delete_attrs(std::int64_t dur, std::int64_t keys) {
  AttributeBag b;
  b.set(NumAttr::deleteDuration, dur);
  b.set(NumAttr::deleteKeyCount, keys);
  return b;
}
AttributeBag one(NumAttr a, std::int64_t v) {
  AttributeBag b;
  b.set(a, v);
  return b;
}

class Timeline {
 public:
  Timeline(Rng& rng, std::int64_t endMs) : rng_(rng), end_(endMs) {}

  std::int64_t now() const { return cursor_; }
  std::int64_t end() const { return end_; }
  Rng& rng() { return rng_; }

  // Appends after a random gap; false when the event would pass the end.
  bool add(T type, Page page, std::int64_t dur, AttributeBag attrs, int gapLo = tbl::kGapMin,
           int gapHi = tbl::kGapMax) {
    const std::int64_t start = cursor_ + rng_.between(gapLo, gapHi);
    if (start + dur > end_) {
      cursor_ = end_;
      return false;
    }
    ActionEvent e;
    e.id = events_.size();
    e.type = type;
    e.page = page;
    e.tStart = start;
    e.tEnd = start + dur;
    e.attrs = std::move(attrs);
    events_.push_back(std::move(e));
    cursor_ = start + dur;
    return true;
  }

  bool idle(Page page, std::int64_t dur) {
    return add(T::idle, page, dur, one(NumAttr::idleDuration, dur));
  }

  // Advances the cursor toward t without emitting anything, keeping every
  // silent stretch below the idle threshold.
  void skip_to(std::int64_t t) {
    const std::int64_t limit = cursor_ + tbl::kIdleMin - tbl::kGapMax - 100;
    cursor_ = std::max(cursor_, std::min({t, limit, end_}));
  }

  std::vector<ActionEvent> take() { return std::move(events_); }

 private:
  Rng& rng_;
  std::int64_t end_;
  std::int64_t cursor_ = 0;
  std::vector<ActionEvent> events_;
};

// Small Task-page edits used as filler by several archetypes.
bool task_edit(Timeline& tl) {
  Rng& r = tl.rng();
  switch (r.below(5)) {
    case 0: return tl.add(T::click, Page::task, r.between(50, 120), {});
    case 1: {
      const auto d = r.between(300, 1500);
      return tl.add(T::keypress, Page::task, d, key_attrs(d, r.between(2, 10)));
    }
    case 2: {
      const auto d = r.between(100, 400);
      return tl.add(T::del, Page::task, d, delete_attrs(d, r.between(1, 3)));
    }
    case 3: {
      const auto d = r.between(150, 600);
      return tl.add(T::mouseMovement, Page::task, d, mouse_attrs(d, r.between(20, 120)));
    }
    default: return tl.add(T::highlight, Page::task, r.between(200, 600), one(NumAttr::highlightTextLength, r.between(5, 40)));
  }
}

void fill_task_edits(Timeline& tl, std::int64_t until) {
  while (tl.now() + tbl::kGapMax + 1500 < std::min(until, tl.end()))
    if (!task_edit(tl)) return;
}

int scaled_count(double perWindow, double windowSeconds, double durationSeconds) {
  return std::max(1, static_cast<int>(std::lround(perWindow * durationSeconds / windowSeconds)));
}

void copy_paste_heavy(Timeline& tl, double durS, double scale) {
  Rng& r = tl.rng();
  const double rate = static_cast<double>(r.between(tbl::kCopyCyclesMin, tbl::kCopyCyclesMax)) * scale;
  const int cycles = scaled_count(rate, 60.0, durS);
  const double slot = durS * 1000.0 / cycles;
  for (int c = 0; c < cycles; ++c) {
    const auto slotEnd = static_cast<std::int64_t>(slot * (c + 1));
    const auto len = r.between(tbl::kParagraphCopyMin, tbl::kParagraphCopyMax);
    if (!tl.add(T::highlight, Page::llm, r.between(600, 1400), one(NumAttr::highlightTextLength, len))) return;
    if (!tl.add(T::copy, Page::llm, r.between(80, 200), one(NumAttr::copyTextLength, len))) return;
    const auto md = r.between(400, 900);
    if (!tl.add(T::mouseMovement, Page::llm, md, mouse_attrs(md, r.between(300, 800)))) return;
    if (!tl.add(T::paste, Page::task, r.between(80, 200), one(NumAttr::pasteTextLength, len))) return;
    fill_task_edits(tl, slotEnd);
  }
}

void reader_first(Timeline& tl, double durS, double scale) {
  Rng& r = tl.rng();
  const double reading = (tbl::kReadingSecondsMin + r.uniform() * tbl::kReadingSecondsExtra * scale) * 1000.0;
  bool wheel = true;
  while (tl.now() < reading) {
    const auto d = r.between(300, 900);
    const Direction dir = r.chance(0.85) ? Direction::down : Direction::up;
    const bool ok = wheel ? tl.add(T::mousewheel, Page::task, d, wheel_attrs(d, r.between(80, 300), dir))
                          : tl.add(T::scroll, Page::task, d, scroll_attrs(d, r.between(100, 400), dir));
    if (!ok) return;
    wheel = !wheel;
    if (!tl.idle(Page::task, r.between(tbl::kIdleMin, 5500))) return;
  }
  fill_task_edits(tl, static_cast<std::int64_t>(durS * 1000.0));
}

void frequent_referencer(Timeline& tl, double durS, double scale) {
  Rng& r = tl.rng();
  const double rate = static_cast<double>(r.between(tbl::kReferCyclesMin, tbl::kReferCyclesMax)) * scale;
  const int cycles = scaled_count(rate, 10.0, durS);
  const double slot = durS * 1000.0 / cycles;
  for (int c = 0; c < cycles; ++c) {
    const auto slotEnd = static_cast<std::int64_t>(slot * (c + 1));
    tl.skip_to(static_cast<std::int64_t>(slot * c) - 300);
    const auto wd = r.between(250, 450);
    const Direction dir = r.chance(0.7) ? Direction::down : Direction::up;
    if (!tl.add(T::mousewheel, Page::llm, wd, wheel_attrs(wd, r.between(100, 300), dir), 250, 350)) return;
    const auto md = r.between(200, 400);
    if (!tl.add(T::mouseMovement, Page::task, md, mouse_attrs(md, r.between(200, 600)), 250, 350)) return;
    if (!tl.add(T::click, Page::task, r.between(50, 120), {}, 250, 350)) return;
    if (tl.now() + 1200 < slotEnd) {
      const auto kd = r.between(300, 700);
      if (!tl.add(T::keypress, Page::task, kd, key_attrs(kd, r.between(2, 6)), 250, 350)) return;
    }
  }
}

void coarse_locator(Timeline& tl, double durS, double scale) {
  Rng& r = tl.rng();
  const int cycles = scaled_count(tbl::kLocateCycles * scale, 60.0, durS);
  const double slot = durS * 1000.0 / cycles;
  for (int c = 0; c < cycles; ++c) {
    const auto slotEnd = static_cast<std::int64_t>(slot * (c + 1));
    const auto burst = r.between(tbl::kBurstMin, tbl::kBurstMax);
    for (int b = 0; b < burst; ++b) {
      const auto wd = r.between(150, 400);
      const Direction dir = r.chance(0.5) ? Direction::down : Direction::up;
      if (!tl.add(T::mousewheel, Page::llm, wd, wheel_attrs(wd, r.between(300, 900), dir), 250, 400)) return;
      const auto md = r.between(150, 400);
      if (!tl.add(T::mouseMovement, Page::llm, md, mouse_attrs(md, r.between(300, 900)), 250, 400)) return;
    }
    const auto len = r.between(tbl::kLongCopyMin, tbl::kLongCopyMax);
    if (!tl.add(T::highlight, Page::llm, r.between(2000, 3500), one(NumAttr::highlightTextLength, len))) return;
    if (!tl.add(T::copy, Page::llm, r.between(80, 200), one(NumAttr::copyTextLength, len))) return;
    if (!tl.add(T::paste, Page::task, r.between(80, 200), one(NumAttr::pasteTextLength, len))) return;
    while (tl.now() + 1500 < slotEnd) {
      const auto md = r.between(150, 500);
      if (!tl.add(T::mouseMovement, Page::task, md, mouse_attrs(md, r.between(40, 200)))) return;
      if (!tl.add(T::click, Page::task, r.between(50, 120), {})) return;
    }
  }
}

void hesitator(Timeline& tl, double durS, double scale) {
  Rng& r = tl.rng();
  const int cycles = scaled_count(tbl::kHesitateCycles * scale, 60.0, durS);
  const double slot = durS * 1000.0 / cycles;
  for (int c = 0; c < cycles; ++c) {
    const auto slotEnd = static_cast<std::int64_t>(slot * (c + 1));
    if (!tl.idle(Page::task, r.between(tbl::kHesitateIdleMin, tbl::kHesitateIdleMax))) return;
    const auto md = r.between(300, 700);
    if (!tl.add(T::mouseMovement, Page::llm, md, mouse_attrs(md, r.between(200, 600)))) return;
    const auto rounds = r.between(1, 2);
    for (int k = 0; k < rounds; ++k) {
      const auto kd = r.between(800, 2500);
      if (!tl.add(T::keypress, Page::llm, kd, key_attrs(kd, r.between(5, 20)))) return;
      const auto dd = r.between(200, 800);
      if (!tl.add(T::del, Page::llm, dd, delete_attrs(dd, r.between(2, 8)))) return;
    }
    if (!tl.add(T::promptInput, Page::llm, r.between(50, 150), {})) return;
    fill_task_edits(tl, slotEnd);
  }
}

void uniform_noise(Timeline& tl, double durS) {
  Rng& r = tl.rng();
  const auto end = static_cast<std::int64_t>(durS * 1000.0);
  while (tl.now() < end) {
    const auto type = kAllActionTypes[r.below(kActionTypeCount)];
    const Page page = r.chance(0.5) ? Page::task : Page::llm;
    const auto d = r.between(100, 1500);
    const auto dir = static_cast<Direction>(r.below(3));
    AttributeBag a;
    switch (type) {
      case T::mouseMovement: a = mouse_attrs(d, r.between(10, 900)); break;
      case T::scroll: a = scroll_attrs(d, r.between(20, 900), dir); break;
      case T::mousewheel: a = wheel_attrs(d, r.between(20, 900), dir); break;
      case T::keypress: a = key_attrs(d, r.between(1, 20)); break;
      case T::del: a = delete_attrs(d, r.between(1, 8)); break;
      case T::copy: a = one(NumAttr::copyTextLength, r.between(5, 3000)); break;
      case T::paste: a = one(NumAttr::pasteTextLength, r.between(5, 3000)); break;
      case T::highlight: a = one(NumAttr::highlightTextLength, r.between(5, 3000)); break;
      case T::idle: {
        if (!tl.idle(page, r.between(tbl::kIdleMin, 5000))) return;
        continue;
      }
      default: break;
    }
    if (!tl.add(type, page, d, std::move(a))) return;
  }
}

}  // namespace

Session gen_session(Archetype kind, double durationSeconds, std::uint64_t seed, double rateScale,
                    TaskId task, const std::string& participantId) {
  if (!(durationSeconds > 0.0)) throw std::invalid_argument("gen_session: duration must be positive");
  if (!(rateScale > 0.0)) throw std::invalid_argument("gen_session: rate scale must be positive");
  Rng rng(seed);
  Timeline tl(rng, static_cast<std::int64_t>(std::llround(durationSeconds * 1000.0)));
  switch (kind) {
    case Archetype::copyPasteHeavy: copy_paste_heavy(tl, durationSeconds, rateScale); break;
    case Archetype::readerFirst: reader_first(tl, durationSeconds, rateScale); break;
    case Archetype::frequentReferencer: frequent_referencer(tl, durationSeconds, rateScale); break;
    case Archetype::coarseLocator: coarse_locator(tl, durationSeconds, rateScale); break;
    case Archetype::hesitator: hesitator(tl, durationSeconds, rateScale); break;
    case Archetype::uniformNoise: uniform_noise(tl, durationSeconds); break;
  }
  Session s;
  s.participantId = participantId.empty() ? std::string(to_string(kind)) : participantId;
  s.task = task;
  s.condition = Condition::withLLM;
  s.stage = Stage::raw;
  s.events = tl.take();
  const auto range = planted_score_range(kind);
  Rng scoreRng(derive_seed(seed, 0x5C0E));
  s.overreliance = range.lo + (range.hi - range.lo) * scoreRng.uniform();
  s.metadata["archetype"] = std::string(to_string(kind));
  return s;
}

CorpusSpec CorpusSpec::standard(std::uint64_t seed) {
  CorpusSpec spec;
  for (Archetype a : kAllArchetypes) spec.entries.push_back({a, 20});
  spec.seed = seed;
  spec.tasks = {TaskId::quiz, TaskId::summarization, TaskId::trip};
  return spec;
}

Corpus gen_corpus(const CorpusSpec& spec) {
  if (!(spec.jitter >= 0.0 && spec.jitter < 1.0)) throw std::invalid_argument("gen_corpus: jitter must lie in [0, 1)");
  if (spec.tasks.empty()) throw std::invalid_argument("gen_corpus: no tasks");
  Corpus out;
  std::uint64_t serial = 0;
  for (const auto& entry : spec.entries) {
    if (entry.count <= 0) throw std::invalid_argument("gen_corpus: counts must be positive");
    for (int i = 0; i < entry.count; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "-%03d", i);
      const std::string pid = std::string(to_string(entry.kind)) + buf;
      for (TaskId task : spec.tasks) {
        const auto sessionSeed = derive_seed(spec.seed, serial++);
        Rng jitterRng(derive_seed(sessionSeed, 0x717));
        const double scale = 1.0 + spec.jitter * (2.0 * jitterRng.uniform() - 1.0);
        Session s = gen_session(entry.kind, spec.durationSeconds, sessionSeed, scale, task, pid);
        out.truth.push_back(GroundTruth{pid, task, entry.kind, *s.overreliance, scale});
        out.sessions.push_back(std::move(s));
      }
    }
  }
  return out;
}

std::optional<Archetype> archetype_of(std::string_view participantId) {
  const auto dash = participantId.rfind('-');
  return parse_archetype(participantId.substr(0, dash));
}

std::string truth_to_jsonl(const std::vector<GroundTruth>& truth) {
  std::ostringstream out;
  for (const auto& t : truth) {
    nlohmann::ordered_json j;
    j["participant"] = t.participantId;
    j["task"] = std::string(to_string(t.task));
    j["archetype"] = std::string(to_string(t.kind));
    j["plantedScore"] = t.plantedScore;
    j["rateScale"] = t.rateScale;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<GroundTruth> truth_from_jsonl(const std::string& text) {
  std::vector<GroundTruth> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    GroundTruth t;
    t.participantId = j.at("participant").get<std::string>();
    const auto task = parse_task(j.at("task").get<std::string>());
    const auto kind = parse_archetype(j.at("archetype").get<std::string>());
    if (!task || !kind) throw std::runtime_error("ground-truth manifest: bad task or archetype");
    t.task = *task;
    t.kind = *kind;
    t.plantedScore = j.at("plantedScore").get<double>();
    t.rateScale = j.value("rateScale", 1.0);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace relimine
