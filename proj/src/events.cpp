#include "relimine/events.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace relimine {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::array<std::string_view, kActionTypeCount> kActionNames = {
    "mouseMovement", "click",  "scroll",        "mousewheel", "keypress",
    "copy",          "paste",  "highlight",     "delete",     "idle",
    "elementSwitch", "tabSwitch", "promptInput", "blur",      "focus"};

constexpr std::array<std::string_view, kNumAttrCount> kNumAttrNames = {
    "totalMouseMovement", "mouseMovementDuration", "scrollDuration",
    "scrollDistance",     "mousewheelDistance",    "keypressDuration",
    "keypressKeyCount",   "copyTextLength",        "pasteTextLength",
    "highlightTextLength", "deleteDuration",       "deleteKeyCount",
    "idleDuration"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(ActionType t) { return kActionNames[static_cast<std::size_t>(t)]; }
std::string_view to_string(NumAttr a) { return kNumAttrNames[static_cast<std::size_t>(a)]; }

std::string_view to_string(Page p) { return p == Page::task ? "Task" : "LLM"; }

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::up: return "up";
    case Direction::down: return "down";
    case Direction::none: return "none";
  }
  return "none";
}

std::string_view to_string(TaskId t) {
  switch (t) {
    case TaskId::quiz: return "quiz";
    case TaskId::summarization: return "summarization";
    case TaskId::trip: return "trip";
  }
  return "quiz";
}

std::string_view to_string(Condition c) {
  return c == Condition::withLLM ? "withLLM" : "withoutLLM";
}

std::optional<ActionType> parse_action_type(std::string_view s) {
  return lookup<ActionType>(kActionNames, s);
}
std::optional<NumAttr> parse_num_attr(std::string_view s) {
  return lookup<NumAttr>(kNumAttrNames, s);
}
std::optional<Page> parse_page(std::string_view s) {
  if (s == "Task") return Page::task;
  if (s == "LLM") return Page::llm;
  return std::nullopt;
}
std::optional<Direction> parse_direction(std::string_view s) {
  constexpr std::array<std::string_view, 3> names = {"up", "down", "none"};
  return lookup<Direction>(names, s);
}
std::optional<TaskId> parse_task(std::string_view s) {
  constexpr std::array<std::string_view, 3> names = {"quiz", "summarization", "trip"};
  return lookup<TaskId>(names, s);
}
std::optional<Condition> parse_condition(std::string_view s) {
  constexpr std::array<std::string_view, 2> names = {"withLLM", "withoutLLM"};
  return lookup<Condition>(names, s);
}

bool num_attr_allowed(ActionType t, NumAttr a) {
  switch (a) {
    case NumAttr::totalMouseMovement:
    case NumAttr::mouseMovementDuration: return t == ActionType::mouseMovement;
    case NumAttr::scrollDuration: return t == ActionType::scroll || t == ActionType::mousewheel;
    case NumAttr::scrollDistance: return t == ActionType::scroll;
    case NumAttr::mousewheelDistance: return t == ActionType::mousewheel;
    case NumAttr::keypressDuration:
    case NumAttr::keypressKeyCount: return t == ActionType::keypress;
    case NumAttr::copyTextLength: return t == ActionType::copy;
    case NumAttr::pasteTextLength: return t == ActionType::paste;
    case NumAttr::highlightTextLength: return t == ActionType::highlight;
    case NumAttr::deleteDuration:
    case NumAttr::deleteKeyCount: return t == ActionType::del;
    case NumAttr::idleDuration: return t == ActionType::idle;
  }
  return false;
}

bool scroll_direction_allowed(ActionType t) { return t == ActionType::scroll; }
bool mousewheel_direction_allowed(ActionType t) { return t == ActionType::mousewheel; }
bool keypress_text_allowed(ActionType t) { return t == ActionType::keypress; }

bool AttributeBag::empty() const {
  for (const auto& v : num) {
    if (v) return false;
  }
  return !scrollDirection && !mousewheelDirection && !keypressText;
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct LineError {
  DiagnosticKind kind;
  std::string message;
};

std::int64_t require_int(const ojson& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw LineError{DiagnosticKind::malformed, std::string("missing key '") + key + "'"};
  if (!it->is_number_integer())
    throw LineError{DiagnosticKind::malformed, std::string("key '") + key + "' must be an integer"};
  return it->get<std::int64_t>();
}

std::string require_string(const ojson& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw LineError{DiagnosticKind::malformed, std::string("missing string key '") + key + "'"};
  return it->get<std::string>();
}

AttributeBag parse_attrs(const ojson& attrs) {
  AttributeBag bag;
  if (!attrs.is_object()) throw LineError{DiagnosticKind::malformed, "'attrs' must be an object"};
  for (const auto& [key, value] : attrs.items()) {
    if (auto a = parse_num_attr(key)) {
      if (!value.is_number_integer())
        throw LineError{DiagnosticKind::malformed, "attribute '" + key + "' must be an integer"};
      bag.set(*a, value.get<std::int64_t>());
    } else if (key == "scrollDirection" || key == "mousewheelDirection") {
      std::optional<Direction> d;
      if (value.is_string()) d = parse_direction(value.get<std::string>());
      if (!d) throw LineError{DiagnosticKind::malformed, "bad direction for '" + key + "'"};
      (key == "scrollDirection" ? bag.scrollDirection : bag.mousewheelDirection) = d;
    } else if (key == "keypressText") {
      if (!value.is_string())
        throw LineError{DiagnosticKind::malformed, "'keypressText' must be a string"};
      bag.keypressText = value.get<std::string>();
    } else {
      throw LineError{DiagnosticKind::malformed, "unknown attribute '" + key + "'"};
    }
  }
  return bag;
}

ActionEvent parse_event_line(const ojson& obj, Page defaultPage, Stage stage) {
  if (!obj.is_object()) throw LineError{DiagnosticKind::malformed, "record is not an object"};
  ActionEvent e;
  auto idIt = obj.find("id");
  if (idIt == obj.end() || !idIt->is_number_unsigned())
    throw LineError{DiagnosticKind::malformed, "'id' must be a non-negative integer"};
  e.id = idIt->get<std::uint64_t>();
  const std::string type = require_string(obj, "type");
  auto t = parse_action_type(type);
  if (!t) throw LineError{DiagnosticKind::unknownActionType, "unknown action type '" + type + "'"};
  e.type = *t;
  e.page = defaultPage;
  if (auto it = obj.find("page"); it != obj.end()) {
    std::optional<Page> p;
    if (it->is_string()) p = parse_page(it->get<std::string>());
    if (!p) throw LineError{DiagnosticKind::malformed, "bad 'page'"};
    e.page = *p;
  }
  e.tStart = require_int(obj, "t_start_ms");
  e.tEnd = require_int(obj, "t_end_ms");
  if (auto it = obj.find("t_norm"); it != obj.end()) {
    if (!it->is_number() || stage != Stage::preprocessed)
      throw LineError{DiagnosticKind::malformed, "'t_norm' only allowed as a number in preprocessed files"};
    e.tNorm = it->get<double>();
  }
  if (auto it = obj.find("attrs"); it != obj.end()) e.attrs = parse_attrs(*it);
  for (const auto& [key, _] : obj.items()) {
    if (key != "id" && key != "type" && key != "page" && key != "t_start_ms" &&
        key != "t_end_ms" && key != "t_norm" && key != "attrs")
      throw LineError{DiagnosticKind::malformed, "unknown key '" + key + "'"};
  }
  return e;
}

LogHeader parse_header(const std::string& line) {
  ojson h;
  try {
    h = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& err) {
    throw ParseError(1, std::string("header is not valid JSON: ") + err.what());
  }
  if (!h.is_object()) throw ParseError(1, "header is not an object");
  auto version = h.find("rmlog");
  if (version == h.end() || !version->is_number_integer() || version->get<int>() != 1)
    throw ParseError(1, "header must carry \"rmlog\":1");
  LogHeader out;
  auto str = [&](const char* key) -> std::string {
    auto it = h.find(key);
    if (it == h.end() || !it->is_string()) throw ParseError(1, std::string("header missing '") + key + "'");
    return it->get<std::string>();
  };
  out.participantId = str("participant");
  auto task = parse_task(str("task"));
  if (!task) throw ParseError(1, "header has unknown task");
  out.task = *task;
  auto page = parse_page(str("page"));
  if (!page) throw ParseError(1, "header has unknown page");
  out.page = *page;
  if (auto it = h.find("stage"); it != h.end()) {
    if (!it->is_string()) throw ParseError(1, "bad 'stage'");
    const auto s = it->get<std::string>();
    if (s == "preprocessed") out.stage = Stage::preprocessed;
    else if (s != "raw") throw ParseError(1, "unknown stage '" + s + "'");
  }
  if (auto it = h.find("condition"); it != h.end()) {
    std::optional<Condition> c;
    if (it->is_string()) c = parse_condition(it->get<std::string>());
    if (!c) throw ParseError(1, "bad 'condition'");
    out.condition = c;
  }
  if (auto it = h.find("overreliance"); it != h.end()) {
    if (!it->is_number()) throw ParseError(1, "bad 'overreliance'");
    out.overreliance = it->get<double>();
  }
  if (auto it = h.find("metadata"); it != h.end()) {
    if (!it->is_object()) throw ParseError(1, "'metadata' must be an object");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) throw ParseError(1, "metadata values must be strings");
      out.metadata[k] = v.get<std::string>();
    }
  }
  return out;
}

}  // namespace

LogParseResult parse_log(std::istream& in) {
  LogParseResult result;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!result.header) {
      if (lineNo != 1) throw ParseError(lineNo, "header must be the first line");
      result.header = parse_header(line);
      continue;
    }
    try {
      ojson obj;
      try {
        obj = ojson::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        throw LineError{DiagnosticKind::malformed, "not a valid record"};
      }
      result.records.push_back(
          RawEvent{lineNo, parse_event_line(obj, result.header->page, result.header->stage)});
    } catch (const LineError& err) {
      result.diagnostics.push_back(Diagnostic{lineNo, err.kind, err.message});
    } catch (const nlohmann::json::exception& err) {
      result.diagnostics.push_back(Diagnostic{lineNo, DiagnosticKind::malformed, err.what()});
    }
  }
  return result;
}

LogParseResult parse_log_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_log(in);
}

Session to_session(const LogParseResult& parsed) {
  if (!parsed.header) throw std::invalid_argument("log has no header");
  Session s;
  const auto& h = *parsed.header;
  s.participantId = h.participantId;
  s.task = h.task;
  s.condition = h.condition;
  s.stage = h.stage;
  s.overreliance = h.overreliance;
  s.metadata = h.metadata;
  s.events.reserve(parsed.records.size());
  for (const auto& r : parsed.records) s.events.push_back(r.event);
  return s;
}

Session read_session_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open log file: " + path);
  return to_session(parse_log(in));
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_session(const Session& s) {
  const Page headerPage = s.events.empty() ? Page::task : s.events.front().page;
  ojson h;
  h["rmlog"] = 1;
  h["participant"] = s.participantId;
  h["task"] = to_string(s.task);
  h["page"] = to_string(headerPage);
  if (s.stage == Stage::preprocessed) h["stage"] = "preprocessed";
  if (s.condition) h["condition"] = to_string(*s.condition);
  if (s.overreliance) h["overreliance"] = *s.overreliance;
  if (!s.metadata.empty()) {
    ojson meta = ojson::object();
    for (const auto& [k, v] : s.metadata) meta[k] = v;
    h["metadata"] = std::move(meta);
  }
  std::string out = h.dump();
  out.push_back('\n');

  for (const auto& e : s.events) {
    ojson rec;
    rec["id"] = e.id;
    rec["type"] = to_string(e.type);
    if (e.page != headerPage) rec["page"] = to_string(e.page);
    rec["t_start_ms"] = e.tStart;
    rec["t_end_ms"] = e.tEnd;
    if (s.stage == Stage::preprocessed) rec["t_norm"] = e.tNorm;
    ojson attrs = ojson::object();
    for (std::size_t i = 0; i < kNumAttrCount; ++i) {
      if (e.attrs.num[i]) attrs[std::string(kNumAttrNames[i])] = *e.attrs.num[i];
    }
    if (e.attrs.scrollDirection) attrs["scrollDirection"] = to_string(*e.attrs.scrollDirection);
    if (e.attrs.mousewheelDirection)
      attrs["mousewheelDirection"] = to_string(*e.attrs.mousewheelDirection);
    if (e.attrs.keypressText) attrs["keypressText"] = *e.attrs.keypressText;
    rec["attrs"] = std::move(attrs);
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

void write_session_file(const Session& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write log file: " + path);
  out << serialize_session(s);
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Violation> validate_session(const Session& s) {
  std::vector<Violation> out;
  auto flag = [&](const ActionEvent& e, std::string rule, std::string msg) {
    out.push_back(Violation{e.id, std::move(rule), std::move(msg)});
  };
  if (s.overreliance && !(*s.overreliance >= 0.0 && *s.overreliance <= 1.0))
    out.push_back(Violation{std::nullopt, "overreliance-range", "overreliance outside [0,1]"});

  const ActionEvent* prev = nullptr;
  for (const auto& e : s.events) {
    if (e.tEnd < e.tStart) flag(e, "time-order", "t_end_ms < t_start_ms");
    if (prev) {
      if (e.id <= prev->id) flag(e, "id-order", "ids must be strictly increasing");
      if (e.tStart < prev->tStart) flag(e, "start-order", "t_start_ms decreases");
    }
    if (!(e.tNorm >= 0.0 && e.tNorm <= 1.0)) flag(e, "tnorm-range", "t_norm outside [0,1]");
    for (std::size_t i = 0; i < kNumAttrCount; ++i) {
      const auto a = static_cast<NumAttr>(i);
      const auto& v = e.attrs.num[i];
      if (!v) continue;
      if (!num_attr_allowed(e.type, a))
        flag(e, "attribute-mismatch",
             std::string(to_string(a)) + " not allowed on " + std::string(to_string(e.type)));
      if (*v < 0) flag(e, "attribute-negative", std::string(to_string(a)) + " is negative");
    }
    if (e.attrs.scrollDirection && !scroll_direction_allowed(e.type))
      flag(e, "attribute-mismatch", "scrollDirection not allowed on " + std::string(to_string(e.type)));
    if (e.attrs.mousewheelDirection && !mousewheel_direction_allowed(e.type))
      flag(e, "attribute-mismatch",
           "mousewheelDirection not allowed on " + std::string(to_string(e.type)));
    if (e.attrs.keypressText && !keypress_text_allowed(e.type))
      flag(e, "attribute-mismatch", "keypressText not allowed on " + std::string(to_string(e.type)));
    prev = &e;
  }
  return out;
}

}  // namespace relimine
