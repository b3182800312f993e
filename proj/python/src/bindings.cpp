#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgdialog/benchmark.hpp"
#include "kgdialog/dialogue_manager.hpp"
#include "kgdialog/dialogue_tree.hpp"
#include "kgdialog/errors.hpp"
#include "kgdialog/eval_stats.hpp"
#include "kgdialog/knowledge_base.hpp"
#include "kgdialog/service.hpp"
#include "kgdialog/topic_matching.hpp"

namespace py = pybind11;
using namespace kgdialog;
using nlohmann::json;

namespace {

// Documents cross the boundary as plain Python dicts and lists.
py::object to_py(const json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

json from_py(const py::handle& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

Strategy strategy_arg(const std::string& name) {
  auto s = parse_strategy(name);
  if (!s) throw py::value_error("unknown strategy '" + name + "'");
  return *s;
}

py::dict stats_dict(const TreeStats& stats) {
  py::dict kinds;
  for (const auto& [kind, n] : stats.sentencesPerKind) kinds[py::str(std::string(to_string(kind)))] = n;
  py::dict out;
  out["topics"] = stats.topicCount;
  out["sentences"] = stats.sentenceCount;
  out["max_depth"] = stats.maxDepth;
  out["per_kind"] = kinds;
  return out;
}

/// Python-side handle on a loaded engine.
class PyEngine {
 public:
  PyEngine(const std::filesystem::path& kb, std::optional<std::filesystem::path> lexicon,
           std::optional<std::filesystem::path> phrases, std::optional<std::filesystem::path> index) {
    EngineConfig config;
    config.kbPath = kb;
    if (lexicon) config.lexiconPath = *lexicon;
    if (phrases) config.prefixPath = *phrases;
    if (index) config.indexPath = *index;
    config.strategy = lexicon ? Strategy::KeywordCategory : Strategy::Keyword;
    engine_ = build_engine(config, lexicon.has_value());
  }

  const DialogueManager& manager() const { return *engine_.manager; }
  const Engine& engine() const { return engine_; }

 private:
  Engine engine_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Knowledge-grounded dialogue engine: KB compilation, topic selection and evaluation statistics.";

  auto base = py::register_exception<Error>(m, "KgdialogError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<StatsError>(m, "StatsError", base.ptr());

  m.def("compile_kb", [](const std::filesystem::path& path) {
    return stats_dict(build_tree(load_kb(path)).stats());
  }, py::arg("path"), "Compile a KB file and return its dialogue-tree statistics.");

  m.def("tree_dump", [](const std::filesystem::path& path) {
    return to_py(tree_to_json(build_tree(load_kb(path))));
  }, py::arg("path"), "Canonical dump of the compiled dialogue tree.");

  m.def("pad_to_min_tokens", [](const std::string& text, std::size_t min_tokens) {
    return pad_to_min_tokens(text, min_tokens);
  }, py::arg("text"), py::arg("min_tokens") = kMinClassifierTokens);

  py::class_<SessionState>(m, "Session")
      .def_property_readonly("session_id", [](const SessionState& s) { return s.sessionId; })
      .def_property_readonly("current_topic", [](const SessionState& s) { return s.currentTopicId; })
      .def_property_readonly("turn", [](const SessionState& s) { return s.turnCount; })
      .def("to_dict", [](const SessionState& s) { return to_py(session_to_json(s)); })
      .def_static("from_dict", [](const py::object& d) { return session_from_json(from_py(d)); });

  py::class_<PyEngine>(m, "Engine")
      .def(py::init<std::filesystem::path, std::optional<std::filesystem::path>,
                    std::optional<std::filesystem::path>, std::optional<std::filesystem::path>>(),
           py::arg("kb"), py::arg("lexicon") = py::none(), py::arg("phrases") = py::none(),
           py::arg("index") = py::none())
      .def("tree_stats", [](const PyEngine& e) { return stats_dict(e.manager().tree().stats()); })
      .def("topics", [](const PyEngine& e) {
        std::vector<std::string> ids;
        for (const auto& n : e.manager().tree().nodes()) ids.push_back(n.topicId);
        return ids;
      })
      .def("match_keywords", [](const PyEngine& e, const std::string& text) {
        return match_keywords(text, e.manager().tree());
      }, py::arg("text"))
      .def("classify", [](const PyEngine& e, const std::string& text) {
        if (!e.engine().classifier) throw py::value_error("engine was loaded without a lexicon");
        std::vector<std::pair<std::string, double>> out;
        for (const auto& c : e.engine().classifier->classify(text).entries) {
          out.emplace_back(c.category, c.confidence);
        }
        return out;
      }, py::arg("text"))
      .def("new_session", [](const PyEngine& e, const std::string& session_id,
                             const std::string& user, const std::string& culture,
                             const std::string& strategy, std::uint64_t seed) {
        PersonProfile profile;
        profile.userId = user;
        profile.culture = culture;
        return e.manager().new_session(session_id, std::move(profile), strategy_arg(strategy), seed);
      }, py::arg("session_id") = "py", py::arg("user") = "anonymous", py::arg("culture") = "EN",
         py::arg("strategy") = "keyword-category", py::arg("seed") = 1)
      .def("step", [](const PyEngine& e, SessionState& session, const std::string& text) {
        const Reply reply = e.manager().step(session, text);
        return to_py(trace_line(session, text, reply));
      }, py::arg("session"), py::arg("text"),
         "Take one turn; returns the decision-trace record of the reply.")
      .def("benchmark", [](const PyEngine& e, const std::filesystem::path& scripts,
                           const std::vector<std::string>& strategies,
                           const std::vector<std::uint64_t>& seeds) {
        std::vector<Strategy> parsed;
        for (const auto& s : strategies) parsed.push_back(strategy_arg(s));
        json summary;
        {
          py::gil_scoped_release release;
          summary = benchmark_summary_json(
              run_strategy_benchmark(e.manager(), load_scripts(scripts), parsed, seeds));
        }
        return to_py(summary);
      }, py::arg("scripts"),
         py::arg("strategies") = std::vector<std::string>{"keyword-category", "keyword", "random"},
         py::arg("seeds") = std::vector<std::uint64_t>{1, 2, 3});

  m.def("mann_whitney_u", [](const std::vector<double>& a, const std::vector<double>& b) {
    const auto r = mann_whitney_u(a, b);
    py::dict out;
    out["u"] = r.u;
    out["ua"] = r.ua;
    out["ub"] = r.ub;
    out["z"] = r.z;
    out["p"] = r.p;
    return out;
  }, py::arg("a"), py::arg("b"));

  m.def("mann_whitney_u_critical", &mann_whitney_u_critical, py::arg("n1"), py::arg("n2"),
        py::arg("alpha") = 0.05);

  m.def("welch_t", [](const std::vector<double>& a, const std::vector<double>& b) {
    const auto r = welch_t(a, b);
    py::dict out;
    out["t"] = r.t;
    out["df"] = r.df;
    out["p"] = r.p;
    return out;
  }, py::arg("a"), py::arg("b"));

  m.def("moments_normality", [](const std::vector<double>& sample) {
    const auto r = moments_normality(sample);
    py::dict out;
    out["skewness"] = r.skewness;
    out["kurtosis"] = r.kurtosis;
    out["is_normal"] = r.isNormal;
    return out;
  }, py::arg("sample"));

  m.def("cronbach_alpha", &cronbach_alpha, py::arg("matrix"));
  m.def("pearson_r", [](const std::vector<double>& x, const std::vector<double>& y) {
    return pearson_r(x, y);
  }, py::arg("x"), py::arg("y"));
  m.def("invert_likert", &invert_likert, py::arg("score"));

  m.def("sassi_scores", [](const std::vector<int>& items) {
    return sassi_scores(SassiResponse{"py", 1, items}, default_scales());
  }, py::arg("items"), "Per-scale means of one 34-item response under the default scales.");

  m.def("compare_groups", [](const std::map<std::string, std::vector<double>>& groups) {
    return to_py(comparison_table_json(compare_groups(groups)));
  }, py::arg("groups"));
}
