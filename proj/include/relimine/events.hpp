#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relimine {

// Action categories. The order is the one-hot layout used by the encoder,
// so it must never be reordered.
enum class ActionType : std::uint8_t {
  mouseMovement,
  click,
  scroll,
  mousewheel,
  keypress,
  copy,
  paste,
  highlight,
  del,  // serialized as "delete"
  idle,
  elementSwitch,
  tabSwitch,
  promptInput,
  blur,
  focus,
};
inline constexpr std::size_t kActionTypeCount = 15;

enum class Page : std::uint8_t { task, llm };
enum class Direction : std::uint8_t { up, down, none };
enum class TaskId : std::uint8_t { quiz, summarization, trip };
enum class Condition : std::uint8_t { withLLM, withoutLLM };
enum class Stage : std::uint8_t { raw, preprocessed };

// Integer-valued attributes, in encoder order (Table-6 order with the two
// direction triples removed).
enum class NumAttr : std::uint8_t {
  totalMouseMovement,
  mouseMovementDuration,
  scrollDuration,
  scrollDistance,
  mousewheelDistance,
  keypressDuration,
  keypressKeyCount,
  copyTextLength,
  pasteTextLength,
  highlightTextLength,
  deleteDuration,
  deleteKeyCount,
  idleDuration,
};
inline constexpr std::size_t kNumAttrCount = 13;

std::string_view to_string(ActionType t);
std::string_view to_string(Page p);
std::string_view to_string(Direction d);
std::string_view to_string(TaskId t);
std::string_view to_string(Condition c);
std::string_view to_string(NumAttr a);

std::optional<ActionType> parse_action_type(std::string_view s);
std::optional<Page> parse_page(std::string_view s);
std::optional<Direction> parse_direction(std::string_view s);
std::optional<TaskId> parse_task(std::string_view s);
std::optional<Condition> parse_condition(std::string_view s);
std::optional<NumAttr> parse_num_attr(std::string_view s);

inline constexpr std::array<ActionType, kActionTypeCount> kAllActionTypes = {
    ActionType::mouseMovement, ActionType::click,       ActionType::scroll,
    ActionType::mousewheel,    ActionType::keypress,    ActionType::copy,
    ActionType::paste,         ActionType::highlight,   ActionType::del,
    ActionType::idle,          ActionType::elementSwitch, ActionType::tabSwitch,
    ActionType::promptInput,   ActionType::blur,        ActionType::focus};

inline constexpr std::array<TaskId, 3> kAllTasks = {TaskId::quiz, TaskId::summarization,
                                                    TaskId::trip};

// Attribute legality per action type.
bool num_attr_allowed(ActionType t, NumAttr a);
bool scroll_direction_allowed(ActionType t);      // scroll only
bool mousewheel_direction_allowed(ActionType t);  // mousewheel only
bool keypress_text_allowed(ActionType t);         // keypress only

struct AttributeBag {
  std::array<std::optional<std::int64_t>, kNumAttrCount> num{};
  std::optional<Direction> scrollDirection;
  std::optional<Direction> mousewheelDirection;
  std::optional<std::string> keypressText;

  const std::optional<std::int64_t>& get(NumAttr a) const {
    return num[static_cast<std::size_t>(a)];
  }
  std::optional<std::int64_t>& get(NumAttr a) { return num[static_cast<std::size_t>(a)]; }
  std::int64_t value_or_zero(NumAttr a) const { return get(a).value_or(0); }
  void set(NumAttr a, std::int64_t v) { get(a) = v; }

  bool empty() const;
  bool operator==(const AttributeBag&) const = default;
};

struct ActionEvent {
  std::uint64_t id = 0;
  ActionType type = ActionType::click;
  Page page = Page::task;
  std::int64_t tStart = 0;  // ms since session epoch
  std::int64_t tEnd = 0;
  double tNorm = 0.0;
  AttributeBag attrs;

  bool operator==(const ActionEvent&) const = default;
};

struct Session {
  std::string participantId;
  TaskId task = TaskId::quiz;
  std::optional<Condition> condition;
  Stage stage = Stage::raw;
  std::vector<ActionEvent> events;
  std::optional<double> overreliance;
  std::map<std::string, std::string> metadata;

  bool operator==(const Session&) const = default;
};

// ---------------------------------------------------------------------------
// RMLOG v1

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LogHeader {
  std::string participantId;
  TaskId task = TaskId::quiz;
  Page page = Page::task;
  Stage stage = Stage::raw;
  std::optional<Condition> condition;
  std::optional<double> overreliance;
  std::map<std::string, std::string> metadata;
};

struct RawEvent {
  std::size_t line = 0;
  ActionEvent event;
};

enum class DiagnosticKind { malformed, unknownActionType };

struct Diagnostic {
  std::size_t line = 0;
  DiagnosticKind kind = DiagnosticKind::malformed;
  std::string message;
};

struct LogParseResult {
  std::optional<LogHeader> header;  // absent only for an empty stream
  std::vector<RawEvent> records;
  std::vector<Diagnostic> diagnostics;
};

// Throws ParseError when the header line is unusable; bad event lines are
// reported in `diagnostics` and skipped.
LogParseResult parse_log(std::istream& in);
LogParseResult parse_log_string(std::string_view text);

// Builds a session from one parsed file (header + surviving records).
Session to_session(const LogParseResult& parsed);
Session read_session_file(const std::string& path);

std::string serialize_session(const Session& s);
void write_session_file(const Session& s, const std::string& path);

struct Violation {
  std::optional<std::uint64_t> eventId;  // empty for session-level rules
  std::string rule;
  std::string message;
};

std::vector<Violation> validate_session(const Session& s);

}  // namespace relimine
