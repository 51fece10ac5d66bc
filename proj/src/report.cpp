#include "relimine/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace relimine {

std::string_view palette_color(ActionType t) {
  switch (t) {
    case ActionType::mouseMovement: return "#4e79a7";
    case ActionType::mousewheel: return "#f28e2b";
    case ActionType::click: return "#e15759";
    case ActionType::keypress: return "#76b7b2";
    case ActionType::del: return "#59a14f";
    case ActionType::copy: return "#edc948";
    case ActionType::paste: return "#b07aa1";
    case ActionType::idle: return "#bab0ac";
    case ActionType::scroll: return "#ff9da7";
    case ActionType::highlight: return "#9c755f";
    case ActionType::elementSwitch: return "#86bcb6";
    case ActionType::tabSwitch: return "#d4a6c8";
    case ActionType::promptInput: return "#8cd17d";
    case ActionType::blur: return "#79706e";
    case ActionType::focus: return "#d7b5a6";
  }
  return "#000000";
}

std::vector<StripEvent> strip_events(std::span<const ActionEvent> events) {
  std::vector<StripEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.type, e.page});
  return out;
}

namespace {

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string page_suffix(Page p) { return p == Page::task ? "Task" : "LLM"; }

constexpr int kMargin = 10;
constexpr int kColumnWidth = 170;
constexpr int kColumnGap = 20;
constexpr int kBlockHeight = 18;
constexpr int kBlockGap = 2;
constexpr int kTitleHeight = 24;
constexpr int kLegendRow = 16;

}  // namespace

std::string render_strip(std::span<const StripEvent> events, std::string_view title) {
  std::vector<ActionType> legend(kLegendCore.begin(), kLegendCore.end());
  std::set<ActionType> present;
  for (const auto& e : events) present.insert(e.type);
  for (ActionType t : kAllActionTypes)
    if (present.contains(t) && std::find(legend.begin(), legend.end(), t) == legend.end()) legend.push_back(t);

  const int width = 2 * kMargin + 2 * kColumnWidth + kColumnGap;
  const int top = kMargin + kTitleHeight;
  const int blocksHeight = static_cast<int>(events.size()) * (kBlockHeight + kBlockGap);
  const int legendTop = top + blocksHeight + kMargin;
  const int height = legendTop + static_cast<int>(legend.size()) * kLegendRow + kMargin;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"monospace\" font-size=\"11\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"" << kMargin << "\" y=\"" << kMargin + 12 << "\" font-size=\"13\">" << escape_xml(title)
      << "</text>\n";
  svg << "<text x=\"" << kMargin << "\" y=\"" << top - 2 << "\" fill=\"#555555\">Task</text>\n";
  svg << "<text x=\"" << width - kMargin << "\" y=\"" << top - 2
      << "\" text-anchor=\"end\" fill=\"#555555\">LLM</text>\n";

  int y = top;
  for (const auto& e : events) {
    const bool task = e.page == Page::task;
    const int x = task ? kMargin : kMargin + kColumnWidth + kColumnGap;
    const std::string label = std::string(to_string(e.type)) + "_" + page_suffix(e.page);
    svg << "<rect class=\"event\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << kColumnWidth << "\" height=\""
        << kBlockHeight << "\" fill=\"" << palette_color(e.type) << "\"/>";
    if (task)
      svg << "<text x=\"" << x + 4 << "\" y=\"" << y + 13 << "\">" << escape_xml(label) << "</text>\n";
    else
      svg << "<text x=\"" << x + kColumnWidth - 4 << "\" y=\"" << y + 13 << "\" text-anchor=\"end\">"
          << escape_xml(label) << "</text>\n";
    y += kBlockHeight + kBlockGap;
  }

  int ly = legendTop;
  for (ActionType t : legend) {
    svg << "<rect class=\"legend\" x=\"" << kMargin << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\""
        << palette_color(t) << "\"/><text x=\"" << kMargin + 18 << "\" y=\"" << ly + 10 << "\">"
        << to_string(t) << "</text>\n";
    ly += kLegendRow;
  }
  svg << "</svg>\n";
  return svg.str();
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

DocumentBundle render_cluster_report(std::span<const ClusterVerdict> verdicts,
                                     std::span<const ClusterStrips> strips, std::string_view title) {
  DocumentBundle bundle;
  const Funnel f = funnel(verdicts);
  std::ostringstream sum;
  if (!title.empty()) sum << title << "\n\n";
  sum << "clusters found     " << f.found << "\n";
  sum << "clusters retained  " << f.retained << "\n";
  sum << "clusters salient   " << f.salient << "\n\n";
  sum << "cluster\tretained\tsalience\tp\tmean_train\tmean_test\tdelta\tn_train\tn_test\treason\n";
  for (const auto& v : verdicts) {
    sum << v.clusterId << '\t' << (v.retained ? "yes" : "no") << '\t' << to_string(v.salience) << '\t'
        << (v.tP ? fixed(*v.tP, 6) : std::string("-")) << '\t' << fixed(v.meanTrain) << '\t'
        << fixed(v.meanTest) << '\t' << fixed(v.delta) << '\t' << v.trainCount << '\t' << v.testCount
        << '\t' << (v.reason.empty() ? "-" : v.reason) << '\n';
  }
  bundle["summary.txt"] = sum.str();

  for (const auto& v : verdicts) {
    if (!v.retained) continue;
    const auto it = std::find_if(strips.begin(), strips.end(),
                                 [&](const ClusterStrips& s) { return s.clusterId == v.clusterId; });
    if (it == strips.end()) continue;
    const std::string dir = "cluster_" + std::to_string(v.clusterId) + "/";
    for (std::size_t k = 0; k < it->strips.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof(name), "rep_%02zu.svg", k);
      const std::string t = "cluster " + std::to_string(v.clusterId) + " (" +
                            std::string(to_string(v.salience)) + ") " +
                            (k < it->segmentIds.size() ? it->segmentIds[k] : std::string());
      bundle[dir + name] = render_strip(it->strips[k], t);
    }
  }
  return bundle;
}

}  // namespace relimine
