#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "retgen/bank.hpp"
#include "retgen/manifest.hpp"
#include "retgen/metrics.hpp"
#include "retgen/mips.hpp"
#include "retgen/pipeline.hpp"
#include "retgen/tensor.hpp"

namespace py = pybind11;
using namespace retgen;

namespace {

bank::RawExample example_from_dict(const py::dict& d) {
    bank::RawExample ex;
    ex.task_id = d.contains("task") ? d["task"].cast<std::string>() : "task";
    ex.kind = bank::parse_kind(d.contains("kind") ? d["kind"].cast<std::string>() : "extractive-qa");
    ex.id = d.contains("id") ? d["id"].cast<std::string>() : "ex-0";
    ex.question = d["question"].cast<std::string>();
    if (d.contains("context")) {
        if (py::isinstance<py::str>(d["context"]))
            ex.context = {d["context"].cast<std::string>()};
        else
            ex.context = d["context"].cast<std::vector<std::string>>();
    }
    ex.answer = d["answer"].cast<std::string>();
    if (d.contains("options")) ex.options = d["options"].cast<std::vector<std::string>>();
    if (d.contains("labels")) ex.labels = d["labels"].cast<std::vector<std::string>>();
    return ex;
}

index::MipsIndex build_index(py::array_t<float, py::array::c_style | py::array::forcecast> embs,
                             std::vector<int64_t> ids, const std::string& mode, int clusters,
                             int probes, uint64_t seed) {
    if (embs.ndim() != 2) throw DimensionError("embeddings must be a 2-d array");
    const int64_t n = embs.shape(0), d = embs.shape(1);
    std::vector<float> data(embs.data(), embs.data() + n * d);
    if (ids.empty())
        for (int64_t i = 0; i < n; ++i) ids.push_back(i);
    if (mode == "clustered")
        return index::MipsIndex::build_clustered(std::move(data), d, std::move(ids),
                                                 index::ClusterOptions{clusters, probes, 10, seed});
    if (mode != "exact") throw ContractError("mode must be exact or clustered");
    return index::MipsIndex::build_exact(std::move(data), d, std::move(ids));
}

std::vector<std::pair<int64_t, float>>
index_top_k(const index::MipsIndex& ix,
            py::array_t<float, py::array::c_style | py::array::forcecast> query, int64_t k,
            const std::vector<int64_t>& exclude) {
    if (query.ndim() != 1) throw DimensionError("query must be a 1-d array");
    std::span<const float> q(query.data(), size_t(query.shape(0)));
    std::unordered_set<int64_t> excluded(exclude.begin(), exclude.end());
    auto hits = excluded.empty() ? ix.top_k(q, k) : ix.exclude_then_top_k(q, k, excluded);
    std::vector<std::pair<int64_t, float>> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.emplace_back(h.id, h.score);
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Demonstration-retrieval meta-training core";
    m.attr("__version__") = kCodeVersion;

    py::register_exception<DimensionError>(m, "DimensionError");
    py::register_exception<ContractError>(m, "ContractError");
    py::register_exception<FormatError>(m, "FormatError");
    py::register_exception<DataError>(m, "DataError");

    // metrics
    m.def("normalize_answer", &eval::normalize_answer, py::arg("text"),
          py::arg("strip_articles") = true);
    m.def("squad_f1", &eval::squad_f1, py::arg("prediction"), py::arg("gold"),
          py::arg("strip_articles") = true);
    m.def("exact_match", &eval::exact_match, py::arg("prediction"), py::arg("gold"),
          py::arg("strip_articles") = true);
    m.def(
        "extract_answer",
        [](const std::string& text) {
            auto r = eval::extract_answer(text);
            return py::make_tuple(r.answer, r.ok);
        },
        py::arg("generated"), "Returns (answer, ok): the text after the final 'answer:' header");
    m.def(
        "aggregate",
        [](const std::vector<double>& scores) {
            auto a = eval::aggregate(scores);
            return py::make_tuple(a.mean, a.stddev);
        },
        py::arg("scores"), "Returns (mean, population standard deviation)");
    m.def(
        "classification_metric",
        [](const std::vector<std::string>& preds, const std::vector<std::string>& golds,
           const std::vector<std::string>& labels, const std::string& metric) {
            return eval::classification_metric(preds, golds, labels,
                                               metric == "macro-f1" ? eval::ClsMetric::macro_f1
                                                                    : eval::ClsMetric::accuracy);
        },
        py::arg("predictions"), py::arg("golds"), py::arg("labels"),
        py::arg("metric") = "accuracy");

    // formatting
    m.def(
        "format_example",
        [](const py::dict& record, const std::string& variant) {
            auto f = bank::format_example(example_from_dict(record), bank::parse_variant(variant));
            return py::make_tuple(f.input_text, f.target_text);
        },
        py::arg("record"), py::arg("variant") = "options-in-context",
        "Returns (input_text, target_text) in the question/answer/context template");
    m.def(
        "render_demonstration",
        [](const py::dict& record, const std::string& variant) {
            auto d =
                bank::render_demonstration(example_from_dict(record), bank::parse_variant(variant));
            return py::make_tuple(d.text, d.title);
        },
        py::arg("record"), py::arg("variant") = "options-in-context",
        "Returns (text, title); the title equals the answer");
    m.def("parse_target_answer", &bank::parse_target_answer, py::arg("target_text"));
    m.def(
        "jaccard",
        [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
            return bank::jaccard(std::unordered_set<std::string>(a.begin(), a.end()),
                                 std::unordered_set<std::string>(b.begin(), b.end()));
        },
        py::arg("tokens_a"), py::arg("tokens_b"));
    m.def("question_tokens",
          [](const std::string& q) {
              auto s = bank::question_token_set(q);
              return std::vector<std::string>(s.begin(), s.end());
          });

    // retrieval weights and numeric helpers
    m.def(
        "document_weights",
        [](const std::vector<double>& raw, const std::string& norm) {
            return model::document_weights(raw, model::parse_weight_norm(norm));
        },
        py::arg("raw_scores"), py::arg("norm") = "softmax");
    m.def(
        "softmax",
        [](const std::vector<double>& logits) { return num::softmax<double>(logits); },
        py::arg("logits"));

    // schedules
    m.def("checkpoint_steps", &pipeline::checkpoint_steps, py::arg("max_steps"),
          py::arg("interval"));
    m.def(
        "plan_fine_tune",
        [](int split_size, int batch_size, int64_t min_steps, int max_epochs, int interval) {
            auto s = pipeline::plan_fine_tune(split_size, batch_size, min_steps, max_epochs,
                                              interval);
            py::dict d;
            d["steps_per_epoch"] = s.steps_per_epoch;
            d["total_steps"] = s.total_steps;
            d["total_epochs"] = s.total_epochs;
            d["checkpoint_epochs"] = s.checkpoint_epochs;
            return d;
        },
        py::arg("split_size"), py::arg("batch_size") = 4, py::arg("min_steps") = 1000,
        py::arg("max_epochs") = 35, py::arg("checkpoint_epoch_interval") = 2);

    // search index
    py::class_<index::MipsIndex>(m, "MipsIndex")
        .def_static("build", &build_index, py::arg("embeddings"),
                    py::arg("ids") = std::vector<int64_t>{}, py::arg("mode") = "exact",
                    py::arg("clusters") = 8, py::arg("probes") = 1, py::arg("seed") = 0)
        .def_static("load", &index::MipsIndex::load, py::arg("path"))
        .def("save", &index::MipsIndex::save, py::arg("path"))
        .def("top_k", &index_top_k, py::arg("query"), py::arg("k"),
             py::arg("exclude") = std::vector<int64_t>{})
        .def("set_probes", &index::MipsIndex::set_probes)
        .def_property_readonly("dim", &index::MipsIndex::dim)
        .def_property_readonly("size", &index::MipsIndex::size)
        .def_property_readonly("probes", &index::MipsIndex::probes);
}
