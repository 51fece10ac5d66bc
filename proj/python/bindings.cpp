#include <filesystem>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "relimine/cluster.hpp"
#include "relimine/encode.hpp"
#include "relimine/pipeline.hpp"
#include "relimine/preprocess.hpp"
#include "relimine/report.hpp"
#include "relimine/scoring.hpp"
#include "relimine/validate.hpp"

namespace py = pybind11;
using namespace relimine;

namespace {

RowMatrix to_rows(const std::vector<FeatureVector>& vs) {
  RowMatrix m(static_cast<Eigen::Index>(vs.size()), static_cast<Eigen::Index>(kFeatureDim));
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = 0; j < kFeatureDim; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vs[i][j];
  return m;
}

Session parse(const std::string& text) {
  const auto parsed = parse_log_string(text);
  return to_session(parsed);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Behavioral log mining: RMLOG parsing, encoding, clustering and selection.";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  m.def(
      "parse_diagnostics",
      [](const std::string& text) {
        std::vector<std::tuple<std::size_t, std::string>> out;
        for (const auto& d : parse_log_string(text).diagnostics) out.emplace_back(d.line, d.message);
        return out;
      },
      py::arg("text"), "(line, message) for every event line that was skipped.");

  m.def(
      "encode_log",
      [](const std::string& text, bool preprocess) {
        Session s = parse(text);
        if (preprocess && !s.events.empty()) s = preprocess_session(s, MergeConfig{});
        return to_rows(encode_session(s));
      },
      py::arg("text"), py::arg("preprocess") = true,
      "Parse an RMLOG v1 document and return its n x 37 feature matrix.");

  m.def("candidate_window_count", &candidate_window_count, py::arg("duration_ms"), py::arg("window_seconds"),
        py::arg("stride_seconds") = 1);

  m.def(
      "mean_abs_index_difference",
      [](const std::vector<std::tuple<double, double, bool>>& rows) {
        std::vector<ItemIndexPair> items;
        for (const auto& [gt, p, ex] : rows) items.push_back({gt, p, ex});
        return mean_abs_index_difference(items);
      },
      py::arg("rows"), "rows of (ground truth index, participant index, excluded)");

  m.def(
      "dbscan", [](const RowMatrix& points, double eps, int minSamples) { return dbscan(points, eps, minSamples); },
      py::arg("points"), py::arg("eps"), py::arg("min_samples"), "Labels per row; -1 is noise.");

  m.def(
      "welch_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = welch_t_test(a, b);
        return py::dict(py::arg("t") = r.t, py::arg("df") = r.df, py::arg("p") = r.p,
                        py::arg("degenerate") = r.degenerate);
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "render_strip",
      [](const std::vector<std::pair<std::string, std::string>>& events, const std::string& title) {
        std::vector<StripEvent> strip;
        for (const auto& [type, page] : events) {
          const auto t = parse_action_type(type);
          const auto p = parse_page(page);
          if (!t || !p) throw py::value_error("unknown action type or page: " + type + "/" + page);
          strip.push_back({*t, *p});
        }
        return render_strip(strip, title);
      },
      py::arg("events"), py::arg("title") = "", "events are (actionType, page) pairs; returns SVG text.");

  m.def("default_config", [] { return RunConfig::defaults().to_json(); });

  m.def(
      "run_pipeline",
      [](const std::string& configJson) {
        const RunConfig cfg = RunConfig::from_json(configJson);
        py::gil_scoped_release release;
        const RunContext ctx = open_run(cfg);
        run_pipeline(ctx);
        return ctx.root.string();
      },
      py::arg("config_json"), "Run every stage; returns the run directory.");
}
