#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tsexam/dsl.hpp"
#include "tsexam/evaluation.hpp"
#include "tsexam/exam.hpp"
#include "tsexam/gateway.hpp"
#include "tsexam/irt.hpp"
#include "tsexam/synth.hpp"
#include "tsexam/templates.hpp"

namespace py = pybind11;
using tsexam::json;

namespace {

// Structured values cross the boundary as JSON text; the Python package decodes them.
std::string dump(const json& j) { return j.dump(); }

tsexam::Exam exam_from_text(const std::string& text) { return tsexam::exam_io::parse(text); }

std::shared_ptr<const tsexam::data::DatasetAdapter> dataset_from_json(const std::string& text) {
    const json j = json::parse(text);
    std::vector<std::string> channels = j.value("channels", std::vector<std::string>{"value"});
    std::vector<tsexam::data::Sample> samples;
    for (const auto& s : j.at("samples")) {
        tsexam::data::Sample sample;
        sample.channels = s.at("channels").get<std::vector<std::vector<double>>>();
        if (s.contains("metadata"))
            for (auto it = s["metadata"].begin(); it != s["metadata"].end(); ++it) sample.metadata[it.key()] = *it;
        samples.push_back(std::move(sample));
    }
    return std::make_shared<tsexam::data::InMemoryDataset>(std::move(samples), std::move(channels));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of tsexam";

    py::register_exception<tsexam::Error>(m, "TsexamError", PyExc_RuntimeError);

    m.def("list_templates", [] {
        json out = json::array();
        for (const auto& t : tsexam::templates::list_templates())
            out.push_back({{"template_id", t.template_id},
                           {"category", tsexam::to_string(t.category.name)},
                           {"subcategory", t.category.subcategory},
                           {"option_count", t.option_count},
                           {"series_count", t.series_count},
                           {"description", t.description}});
        return dump(out);
    });
    m.def(
        "instantiate",
        [](const std::string& id, std::optional<int> forced, std::uint64_t seed) {
            return dump(tsexam::exam_io::to_json(tsexam::templates::instantiate(id, forced, seed)));
        },
        py::arg("template_id"), py::arg("forced_correct") = py::none(), py::arg("seed") = 0);
    m.def(
        "generate_exam",
        [](std::size_t total, std::uint64_t seed) {
            auto exam = tsexam::templates::generate_exam(tsexam::templates::default_counts(total), seed);
            exam.metadata.seed = seed;
            return tsexam::exam_io::serialize(exam);
        },
        py::arg("total") = 763, py::arg("seed") = 0);
    m.def("validate_exam", [](const std::string& text) { tsexam::validate(exam_from_text(text)); });

    m.def("predict_prob", &tsexam::irt::predict_prob, py::arg("a"), py::arg("b"), py::arg("theta"));
    m.def(
        "fit_2pl",
        [](const std::vector<std::vector<int>>& matrix, std::uint64_t epochs) {
            std::vector<std::string> qids, cids;
            for (std::size_t q = 0; q < matrix.size(); ++q) qids.push_back("q" + std::to_string(q));
            const std::size_t nc = matrix.empty() ? 0 : matrix.front().size();
            for (std::size_t c = 0; c < nc; ++c) cids.push_back("c" + std::to_string(c));
            tsexam::irt::ResponseMatrix r(qids, cids);
            for (std::size_t q = 0; q < matrix.size(); ++q) {
                if (matrix[q].size() != nc) throw tsexam::InvalidParameter("matrix", "rows must have equal length");
                for (std::size_t c = 0; c < nc; ++c) r.set(q, c, static_cast<std::int8_t>(matrix[q][c]));
            }
            tsexam::irt::FitConfig cfg;
            cfg.epochs = static_cast<int>(epochs);
            py::gil_scoped_release release;
            const auto fit = tsexam::irt::fit_2pl(r, cfg);
            return dump({{"a", fit.a},
                         {"b", fit.b},
                         {"theta", fit.theta},
                         {"log_likelihood", fit.log_likelihood},
                         {"converged", fit.converged}});
        },
        py::arg("matrix"), py::arg("epochs") = 2000);

    m.def("materialize", [](const std::string& recipe) {
        return tsexam::synth::materialize(tsexam::synth::recipe_from_json(json::parse(recipe))).values;
    });

    m.def("dsl_parse", [](const std::string& doc) {
        const auto p = tsexam::dsl::parse(std::string_view(doc));
        return p.name;
    });
    m.def(
        "dsl_evaluate",
        [](const std::string& doc, const std::string& dataset, std::size_t n, std::uint64_t seed) {
            const auto p = tsexam::dsl::parse(std::string_view(doc));
            const auto ds = dataset_from_json(dataset);
            const auto res = tsexam::dsl::evaluate(p, *ds, n, seed);
            json qs = json::array();
            for (const auto& q : res.questions) qs.push_back(tsexam::exam_io::to_json(q));
            json trace = json::array();
            for (const auto& t : res.report.trace) trace.push_back(tsexam::dsl::to_json(t));
            return dump({{"questions", qs},
                         {"report", {{"produced", res.report.produced}, {"attempted", res.report.attempted}, {"trace", trace}}}});
        },
        py::arg("document"), py::arg("dataset"), py::arg("num_samples"), py::arg("seed") = 0);

    m.def("serialize_text",
          [](const std::vector<double>& v, int decimals) {
              tsexam::TimeSeries s;
              s.values = v;
              return tsexam::gateway::serialize_text(s, decimals);
          },
          py::arg("values"), py::arg("decimals") = 3);
    m.def(
        "render_plot",
        [](const std::vector<std::vector<double>>& series, int dpi) {
            std::vector<tsexam::TimeSeries> ts;
            for (const auto& v : series) ts.push_back(tsexam::TimeSeries{v, 0, json::object()});
            return py::bytes(tsexam::gateway::render_plot(ts, dpi));
        },
        py::arg("series"), py::arg("dpi") = 50);

    m.def("parse_answer", &tsexam::eval::parse_answer, py::arg("raw"), py::arg("option_count"));
    m.def("levenshtein", &tsexam::eval::levenshtein);
    m.def("levenshtein_norm", &tsexam::eval::levenshtein_norm);
    m.def("cosine_distance", &tsexam::eval::cosine_distance);
    m.def(
        "score",
        [](const std::string& exam, const std::vector<std::string>& responses) {
            std::vector<tsexam::eval::ResponseRecord> recs;
            for (const auto& r : responses) recs.push_back(tsexam::eval::record_from_json(json::parse(r)));
            const auto scored = tsexam::eval::score(exam_from_text(exam), recs);
            json out = json::object();
            json records = json::array();
            for (const auto& r : scored) records.push_back(tsexam::eval::to_json(r));
            out["records"] = records;
            out["accuracy"] = tsexam::eval::to_json(tsexam::eval::accuracy(scored).at("all"));
            return dump(out);
        },
        py::arg("exam"), py::arg("responses"));
}
