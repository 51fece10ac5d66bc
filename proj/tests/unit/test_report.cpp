#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "relimine/report.hpp"

using namespace relimine;

namespace {

std::vector<StripEvent> fixture() {
  return {{ActionType::click, Page::task},
          {ActionType::mousewheel, Page::llm},
          {ActionType::keypress, Page::task}};
}

std::vector<StripEvent> mixed() {
  return {{ActionType::highlight, Page::llm}, {ActionType::copy, Page::llm},
          {ActionType::mouseMovement, Page::llm}, {ActionType::paste, Page::task},
          {ActionType::idle, Page::task},      {ActionType::del, Page::task},
          {ActionType::promptInput, Page::llm}};
}

// Set RELIMINE_UPDATE_GOLDEN=1 to rewrite the files after an intended change.
void check_golden(const std::string& name, const std::string& got) {
  const std::string path = std::string(RELIMINE_GOLDEN_DIR) + "/" + name;
  if (const char* u = std::getenv("RELIMINE_UPDATE_GOLDEN"); u && std::string(u) == "1") {
    std::ofstream(path, std::ios::binary) << got;
  }
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing golden file ", path);
  std::stringstream want;
  want << in.rdbuf();
  CHECK(got == want.str());
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

ClusterVerdict verdict(int id, bool retained, std::size_t reps) {
  ClusterVerdict v;
  v.clusterId = id;
  v.retained = retained;
  v.tP = 0.5;
  v.salience = retained ? Salience::high : Salience::neutral;
  for (std::size_t i = 0; i < reps; ++i) v.representatives.push_back(i);
  return v;
}

ClusterStrips strips_for(int id, std::size_t n) {
  ClusterStrips s;
  s.clusterId = id;
  for (std::size_t i = 0; i < n; ++i) {
    s.segmentIds.push_back("p/quiz/w10/s" + std::to_string(i));
    s.strips.push_back(fixture());
  }
  return s;
}

}  // namespace

TEST_CASE("strip for a three-event fixture") {
  const auto events = fixture();
  const std::string svg = render_strip(events, "fixture");
  check_golden("strip_fixture.svg", svg);
  // Three blocks plus the legend swatches.
  CHECK(count(svg, "<rect class=\"event\"") == 3);
  CHECK(svg.find("click_Task") != std::string::npos);
  CHECK(svg.find("mousewheel_LLM") != std::string::npos);
  CHECK(svg.find("keypress_Task") != std::string::npos);
  CHECK(svg.find(std::string(palette_color(ActionType::click))) != std::string::npos);
  CHECK(render_strip(events, "fixture") == svg);
}

TEST_CASE("strip with every column and extra legend types") {
  const auto events = mixed();
  check_golden("strip_mixed.svg", render_strip(events, "mixed"));
  check_golden("strip_empty.svg", render_strip({}, "empty"));
}

TEST_CASE("LLM blocks are right aligned") {
  const std::vector<StripEvent> llm = {{ActionType::copy, Page::llm}, {ActionType::paste, Page::llm}};
  const std::string svg = render_strip(llm);
  // Two blocks plus the column heading.
  CHECK(count(svg, "text-anchor=\"end\"") == 3);
  std::regex rectX("<rect class=\"event\" x=\"(\\d+)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), rectX); it != std::sregex_iterator(); ++it)
    CHECK((*it)[1] == "200");
}

TEST_CASE("legend covers every type present") {
  const std::vector<StripEvent> extra = {{ActionType::blur, Page::task}, {ActionType::tabSwitch, Page::llm}};
  const std::string svg = render_strip(extra);
  for (ActionType t : kLegendCore) CHECK(svg.find(">" + std::string(to_string(t)) + "<") != std::string::npos);
  CHECK(svg.find(">blur<") != std::string::npos);
  CHECK(svg.find(">tabSwitch<") != std::string::npos);
  CHECK(svg.find(">focus<") == std::string::npos);
}

TEST_CASE("palette is distinct") {
  std::set<std::string_view> seen;
  for (ActionType t : kAllActionTypes) seen.insert(palette_color(t));
  CHECK(seen.size() == kActionTypeCount);
  CHECK(palette_color(ActionType::mouseMovement) == "#4e79a7");
}

TEST_CASE("cluster report bundles") {
  const std::vector<ClusterVerdict> none = {verdict(0, false, 5)};
  const std::vector<ClusterStrips> s0 = {strips_for(0, 5)};
  const auto empty = render_cluster_report(none, s0);
  CHECK(empty.size() == 1);
  REQUIRE(empty.count("summary.txt"));
  CHECK(empty.at("summary.txt").find("clusters retained  0") != std::string::npos);

  const std::vector<ClusterVerdict> vs = {verdict(0, false, 3), verdict(1, true, 5), verdict(2, true, 2)};
  const std::vector<ClusterStrips> ss = {strips_for(0, 3), strips_for(1, 5), strips_for(2, 2)};
  const auto b = render_cluster_report(vs, ss, "quiz_w10");
  CHECK(b.size() == 1 + 5 + 2);
  CHECK(b.count("cluster_1/rep_00.svg"));
  CHECK(b.count("cluster_1/rep_04.svg"));
  CHECK_FALSE(b.count("cluster_0/rep_00.svg"));
  const std::string& sum = b.at("summary.txt");
  CHECK(sum.find("clusters found     3") != std::string::npos);
  CHECK(sum.find("clusters retained  2") != std::string::npos);
  CHECK(sum.find("clusters salient   2") != std::string::npos);
  check_golden("summary_fixture.txt", sum);
}
