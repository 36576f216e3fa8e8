// Python face of the toolkit. Operates on the same CSV/JSON text formats as
// the CLI so artifacts stay interchangeable between the two.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "kds/errors.hpp"
#include "kds/experiment.hpp"
#include "kds/rng.hpp"

namespace py = pybind11;
using namespace kds;

namespace {

std::vector<evaluation::PatientScore> to_scores(
    const std::vector<std::tuple<std::string, double, int>>& rows) {
    std::vector<evaluation::PatientScore> scores;
    scores.reserve(rows.size());
    for (const auto& [sid, prob, label] : rows) scores.push_back({sid, prob, label});
    return scores;
}

}  // namespace

PYBIND11_MODULE(_kdscreen, m) {
    m.doc() = "keystroke-dynamics screening toolkit (C++ core)";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<MetricUndefinedError>(m, "MetricUndefinedError", PyExc_ValueError);

    m.def(
        "generate_cohort",
        [](std::size_t n_pd, std::size_t n_hc, std::uint64_t seed, const std::string& tag,
           double sessions_mean, double length_mean) {
            synth::SynthConfig cfg;
            cfg.n_pd = n_pd;
            cfg.n_hc = n_hc;
            cfg.seed = seed;
            cfg.cohort_tag = tag;
            cfg.sessions_mean = sessions_mean;
            cfg.length_mean = length_mean;
            auto out = synth::generate_cohort(cfg);
            return py::make_tuple(out.events_csv, out.labels_csv);
        },
        py::arg("n_pd"), py::arg("n_hc"), py::arg("seed"), py::arg("tag") = "",
        py::arg("sessions_mean") = 4.0, py::arg("length_mean") = 200.0,
        "Generate a synthetic cohort; returns (events_csv, labels_csv).");

    m.def(
        "preprocess_events",
        [](const std::string& events_csv, const std::string& labels_csv, const std::string& task,
           bool segment) {
            TaskKind tk = task_kind_from_string(task);
            std::istringstream lin(labels_csv);
            auto labels = ingest::parse_labels(lin);
            std::istringstream ein(events_csv);
            Cohort raw = ingest::parse_event_log(ein, tk, labels);
            Cohort out = experiment::preprocess_cohort(raw, tk, segment);
            return py::make_tuple(ingest::serialize_signals(out), ingest::serialize_labels(out));
        },
        py::arg("events_csv"), py::arg("labels_csv"), py::arg("task") = "fixed_text",
        py::arg("segment") = true,
        "Derive and clean signals from raw events; returns (signals_csv, labels_csv).");

    m.def(
        "shuffle_labels",
        [](const std::string& labels_csv, std::uint64_t seed) {
            return synth::shuffle_labels(labels_csv, seed);
        },
        py::arg("labels_csv"), py::arg("seed"),
        "Permute the label column across subjects (negative-control input).");

    m.def(
        "window_count",
        [](std::size_t length, std::size_t window_size, std::size_t stride) {
            return windowing::window_count(length, {window_size, stride});
        },
        py::arg("length"), py::arg("window_size"), py::arg("stride"),
        "Number of sliding windows over a sequence of the given length.");

    m.def(
        "make_folds",
        [](const std::map<std::string, int>& labels, std::size_t k, std::uint64_t seed) {
            auto plan = evaluation::make_folds(labels, k, seed);
            return py::make_tuple(plan.validation_subjects, plan.warnings);
        },
        py::arg("labels"), py::arg("k"), py::arg("seed"),
        "Stratified grouped K-fold; returns (validation_subjects_per_fold, warnings).");

    m.def(
        "auc_roc",
        [](const std::vector<std::tuple<std::string, double, int>>& scores) {
            return evaluation::auc_roc(to_scores(scores));
        },
        py::arg("scores"),
        "Patient-level AUC-ROC from (subject_id, probability, label) triples.");

    m.def(
        "f1",
        [](const std::vector<std::tuple<std::string, double, int>>& scores, double threshold) {
            return evaluation::f1(to_scores(scores), threshold);
        },
        py::arg("scores"), py::arg("threshold") = 0.5,
        "F1 with PD as the positive class.");

    m.def(
        "derive_seed",
        [](std::uint64_t base, const std::vector<std::uint64_t>& path) {
            std::uint64_t h = kds::mix64(base);
            for (std::uint64_t p : path) h = kds::mix64(h ^ kds::mix64(p));
            return h;
        },
        py::arg("base"), py::arg("path"),
        "Derive a named substream seed (same mixing as the C++ core).");

    m.def("stream_tag", [](const std::string& name) { return kds::tag(name); }, py::arg("name"),
          "FNV-1a tag for a named seed stream.");

    m.def(
        "run",
        [](const std::string& config_json) {
            auto cfg = experiment::parse_config(config_json);
            experiment::run(cfg);
        },
        py::arg("config_json"),
        "Run one pipeline stage from a JSON config string; artifacts land under its out dir.");

    m.def(
        "resolved_config",
        [](const std::string& config_json) {
            return experiment::resolved_snapshot(experiment::parse_config(config_json));
        },
        py::arg("config_json"), "Expand a config to its fully explicit snapshot.");
}
