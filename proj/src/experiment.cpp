#include "kds/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include <json.hpp>

#include "kds/errors.hpp"
#include "kds/rng.hpp"
#include "kds/signals.hpp"

namespace kds::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

Stage stage_from_string(const std::string& s) {
    if (s == "synth") return Stage::synth;
    if (s == "preprocess") return Stage::preprocess;
    if (s == "pretrain") return Stage::pretrain;
    if (s == "finetune") return Stage::finetune;
    if (s == "external") return Stage::external_validate;
    if (s == "report") return Stage::report;
    throw ConfigError("unknown stage: " + s);
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::synth: return "synth";
        case Stage::preprocess: return "preprocess";
        case Stage::pretrain: return "pretrain";
        case Stage::finetune: return "finetune";
        case Stage::external_validate: return "external";
        case Stage::report: return "report";
    }
    return "?";
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write: " + path);
}

std::string join_path(const std::string& dir, const std::string& rel) {
    return (fs::path(dir) / rel).string();
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void parallel_for(std::size_t jobs, std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t) {
        workers.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (err) std::rethrow_exception(err);
}

// ---------- config JSON ----------

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

json profile_json(const synth::PhenotypeProfile& p) {
    return {{"ht_mean", p.ht_mean},         {"ht_cv", p.ht_cv},
            {"ft_mean", p.ft_mean},         {"ft_cv", p.ft_cv},
            {"jitter_rho", p.jitter_rho},   {"fatigue_drift", p.fatigue_drift}};
}

synth::PhenotypeProfile parse_profile(const json& j, const std::string& where,
                                      synth::PhenotypeProfile base) {
    check_keys(j, where, {"ht_mean", "ht_cv", "ft_mean", "ft_cv", "jitter_rho", "fatigue_drift"});
    if (j.contains("ht_mean")) base.ht_mean = j["ht_mean"].get<double>();
    if (j.contains("ht_cv")) base.ht_cv = j["ht_cv"].get<double>();
    if (j.contains("ft_mean")) base.ft_mean = j["ft_mean"].get<double>();
    if (j.contains("ft_cv")) base.ft_cv = j["ft_cv"].get<double>();
    if (j.contains("jitter_rho")) base.jitter_rho = j["jitter_rho"].get<double>();
    if (j.contains("fatigue_drift")) base.fatigue_drift = j["fatigue_drift"].get<double>();
    return base;
}

json build_config_json(const ExperimentConfig& cfg) {
    json j;
    j["format"] = "kds-experiment";
    j["version"] = 1;
    j["stage"] = to_string(cfg.stage);
    if (cfg.seed_set) j["seed"] = cfg.seed;
    j["out"] = cfg.out_dir;
    j["jobs"] = cfg.jobs;
    j["data"] = {{"events", cfg.data.events_path},
                 {"signals", cfg.data.signals_path},
                 {"labels", cfg.data.labels_path},
                 {"task", to_string(cfg.data.task)},
                 {"segment", cfg.data.segment}};
    j["windowing"] = {{"window_size", cfg.wcfg.window_size}, {"stride", cfg.wcfg.stride}};
    j["balance"] = {
        {"strategy", balance::to_string(cfg.strategy)},
        {"fractions", cfg.fractions.empty() ? balance::kDefaultFractions : cfg.fractions}};
    j["model"] = {{"arch", nn::to_string(cfg.model.arch)},
                  {"input_channels", cfg.model.input_channels},
                  {"hidden", cfg.model.hidden},
                  {"depth", cfg.model.depth},
                  {"heads", cfg.model.heads},
                  {"ff", cfg.model.ff},
                  {"positional_encoding", cfg.model.positional_encoding}};
    json train = {{"epochs", cfg.train.epochs},
                  {"loss", training::to_string(cfg.train.loss)},
                  {"lr", cfg.train.lr},
                  {"batch_size", cfg.train.batch_size},
                  {"checkpoint", training::to_string(cfg.train.checkpoint)},
                  {"focal_gamma", cfg.train.focal_gamma},
                  {"flat_aggregation", cfg.train.flat_aggregation}};
    train["patience"] = cfg.train.patience ? json(*cfg.train.patience) : json(nullptr);
    train["focal_alpha"] = cfg.train.focal_alpha ? json(*cfg.train.focal_alpha) : json(nullptr);
    j["train"] = train;
    j["folds"] = cfg.folds;
    json sj = {{"enabled", cfg.search.enabled},
               {"dataset_class", search::to_string(cfg.search.dataset_class)}};
    {
        auto space =
            cfg.search.space ? *cfg.search.space : search::default_space(cfg.search.dataset_class);
        sj["window_sizes"] = space.window_sizes;
        json strides = json::array();
        for (const auto& sv : space.strides)
            strides.push_back(sv.kind == search::StrideValue::Kind::literal
                                  ? json(sv.value)
                                  : json(search::to_string(sv)));
        sj["strides"] = strides;
        sj["batch_sizes"] = space.batch_sizes;
        sj["learning_rates"] = space.learning_rates;
    }
    j["search"] = sj;
    j["synth"] = {{"n_pd", cfg.synth.n_pd},
                  {"n_hc", cfg.synth.n_hc},
                  {"cohort_tag", cfg.synth.cohort_tag},
                  {"sessions_mean", cfg.synth.sessions_mean},
                  {"sessions_dispersion", cfg.synth.sessions_dispersion},
                  {"length_mean", cfg.synth.length_mean},
                  {"length_dispersion", cfg.synth.length_dispersion},
                  {"pd_profile", profile_json(cfg.synth.pd_profile)},
                  {"hc_profile", profile_json(cfg.synth.hc_profile)}};
    j["shuffle_labels"] = cfg.shuffle_labels;
    json ft = {{"source_checkpoint", cfg.finetune.source_checkpoint},
               {"source_record", cfg.finetune.source_record}};
    ft["lr"] = cfg.finetune.lr ? json(*cfg.finetune.lr) : json(nullptr);
    j["finetune"] = ft;
    j["external"] = {{"source_record", cfg.external.source_record}};
    j["report"] = {{"records", cfg.report.records}, {"placeholders", cfg.report.placeholders}};
    return j;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        if (!j.is_object()) throw ConfigError("config root must be a JSON object");
        check_keys(j, "config",
                   {"format", "version", "stage", "seed", "out", "jobs", "data", "windowing",
                    "balance", "model", "train", "folds", "search", "synth", "shuffle_labels",
                    "finetune", "external", "report"});
        if (j.contains("format") && j["format"] != "kds-experiment")
            throw ConfigError("unknown config format");
        if (j.contains("version") && j["version"] != 1)
            throw ConfigError("unsupported config version");

        ExperimentConfig cfg;
        cfg.stage = stage_from_string(j.at("stage").get<std::string>());
        if (j.contains("seed")) {
            cfg.seed = j["seed"].get<std::uint64_t>();
            cfg.seed_set = true;
        }
        if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
        if (j.contains("jobs")) {
            cfg.jobs = j["jobs"].get<std::size_t>();
            if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
        }
        if (j.contains("data")) {
            const json& d = j["data"];
            check_keys(d, "data", {"events", "signals", "labels", "task", "segment"});
            if (d.contains("events")) cfg.data.events_path = d["events"].get<std::string>();
            if (d.contains("signals")) cfg.data.signals_path = d["signals"].get<std::string>();
            if (d.contains("labels")) cfg.data.labels_path = d["labels"].get<std::string>();
            if (d.contains("task")) cfg.data.task = task_kind_from_string(d["task"].get<std::string>());
            if (d.contains("segment")) cfg.data.segment = d["segment"].get<bool>();
        }
        if (j.contains("windowing")) {
            const json& w = j["windowing"];
            check_keys(w, "windowing", {"window_size", "stride"});
            if (w.contains("window_size")) cfg.wcfg.window_size = w["window_size"].get<std::size_t>();
            if (w.contains("stride")) cfg.wcfg.stride = w["stride"].get<std::size_t>();
        }
        if (j.contains("balance")) {
            const json& b = j["balance"];
            check_keys(b, "balance", {"strategy", "fractions"});
            if (b.contains("strategy"))
                cfg.strategy = balance::strategy_from_string(b["strategy"].get<std::string>());
            if (b.contains("fractions"))
                cfg.fractions = b["fractions"].get<std::vector<double>>();
        }
        if (j.contains("model")) {
            const json& m = j["model"];
            check_keys(m, "model", {"arch", "input_channels", "hidden", "depth", "heads", "ff",
                                    "positional_encoding"});
            if (m.contains("arch")) cfg.model.arch = nn::arch_from_string(m["arch"].get<std::string>());
            if (m.contains("input_channels"))
                cfg.model.input_channels = m["input_channels"].get<std::size_t>();
            if (m.contains("hidden")) cfg.model.hidden = m["hidden"].get<std::size_t>();
            if (m.contains("depth")) cfg.model.depth = m["depth"].get<std::size_t>();
            if (m.contains("heads")) cfg.model.heads = m["heads"].get<std::size_t>();
            if (m.contains("ff")) cfg.model.ff = m["ff"].get<std::size_t>();
            if (m.contains("positional_encoding"))
                cfg.model.positional_encoding = m["positional_encoding"].get<bool>();
        }
        if (j.contains("train")) {
            const json& t = j["train"];
            check_keys(t, "train",
                       {"epochs", "patience", "loss", "lr", "batch_size", "checkpoint",
                        "focal_gamma", "focal_alpha", "flat_aggregation"});
            if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<std::size_t>();
            if (t.contains("patience"))
                cfg.train.patience = t["patience"].is_null()
                                         ? std::nullopt
                                         : std::optional<std::size_t>(t["patience"].get<std::size_t>());
            if (t.contains("loss"))
                cfg.train.loss = training::loss_from_string(t["loss"].get<std::string>());
            if (t.contains("lr")) cfg.train.lr = t["lr"].get<double>();
            if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<std::size_t>();
            if (t.contains("checkpoint"))
                cfg.train.checkpoint =
                    training::checkpoint_strategy_from_string(t["checkpoint"].get<std::string>());
            if (t.contains("focal_gamma")) cfg.train.focal_gamma = t["focal_gamma"].get<double>();
            if (t.contains("focal_alpha"))
                cfg.train.focal_alpha = t["focal_alpha"].is_null()
                                            ? std::nullopt
                                            : std::optional<double>(t["focal_alpha"].get<double>());
            if (t.contains("flat_aggregation"))
                cfg.train.flat_aggregation = t["flat_aggregation"].get<bool>();
        }
        if (j.contains("folds")) cfg.folds = j["folds"].get<std::size_t>();
        if (j.contains("search")) {
            const json& s = j["search"];
            check_keys(s, "search", {"enabled", "dataset_class", "window_sizes", "strides",
                                     "batch_sizes", "learning_rates"});
            if (s.contains("enabled")) cfg.search.enabled = s["enabled"].get<bool>();
            if (s.contains("dataset_class"))
                cfg.search.dataset_class =
                    search::dataset_class_from_string(s["dataset_class"].get<std::string>());
            bool any_axis = s.contains("window_sizes") || s.contains("strides") ||
                            s.contains("batch_sizes") || s.contains("learning_rates");
            if (any_axis) {
                auto space = search::default_space(cfg.search.dataset_class);
                if (s.contains("window_sizes"))
                    space.window_sizes = s["window_sizes"].get<std::vector<std::size_t>>();
                if (s.contains("strides")) {
                    space.strides.clear();
                    for (const auto& sv : s["strides"]) {
                        if (sv.is_number())
                            space.strides.push_back(
                                {search::StrideValue::Kind::literal, sv.get<std::size_t>()});
                        else if (sv == "half")
                            space.strides.push_back({search::StrideValue::Kind::half, 0});
                        else if (sv == "full")
                            space.strides.push_back({search::StrideValue::Kind::full, 0});
                        else
                            throw ConfigError("stride candidates are numbers, \"half\" or \"full\"");
                    }
                }
                if (s.contains("batch_sizes"))
                    space.batch_sizes = s["batch_sizes"].get<std::vector<std::size_t>>();
                if (s.contains("learning_rates"))
                    space.learning_rates = s["learning_rates"].get<std::vector<double>>();
                cfg.search.space = std::move(space);
            }
        }
        if (j.contains("synth")) {
            const json& s = j["synth"];
            check_keys(s, "synth",
                       {"n_pd", "n_hc", "cohort_tag", "sessions_mean", "sessions_dispersion",
                        "length_mean", "length_dispersion", "pd_profile", "hc_profile"});
            if (s.contains("n_pd")) cfg.synth.n_pd = s["n_pd"].get<std::size_t>();
            if (s.contains("n_hc")) cfg.synth.n_hc = s["n_hc"].get<std::size_t>();
            if (s.contains("cohort_tag")) cfg.synth.cohort_tag = s["cohort_tag"].get<std::string>();
            if (s.contains("sessions_mean"))
                cfg.synth.sessions_mean = s["sessions_mean"].get<double>();
            if (s.contains("sessions_dispersion"))
                cfg.synth.sessions_dispersion = s["sessions_dispersion"].get<double>();
            if (s.contains("length_mean")) cfg.synth.length_mean = s["length_mean"].get<double>();
            if (s.contains("length_dispersion"))
                cfg.synth.length_dispersion = s["length_dispersion"].get<double>();
            if (s.contains("pd_profile"))
                cfg.synth.pd_profile =
                    parse_profile(s["pd_profile"], "synth.pd_profile", cfg.synth.pd_profile);
            if (s.contains("hc_profile"))
                cfg.synth.hc_profile =
                    parse_profile(s["hc_profile"], "synth.hc_profile", cfg.synth.hc_profile);
        }
        if (j.contains("shuffle_labels")) cfg.shuffle_labels = j["shuffle_labels"].get<bool>();
        if (j.contains("finetune")) {
            const json& f = j["finetune"];
            check_keys(f, "finetune", {"source_checkpoint", "lr", "source_record"});
            if (f.contains("source_checkpoint"))
                cfg.finetune.source_checkpoint = f["source_checkpoint"].get<std::string>();
            if (f.contains("lr"))
                cfg.finetune.lr = f["lr"].is_null() ? std::nullopt
                                                    : std::optional<double>(f["lr"].get<double>());
            if (f.contains("source_record"))
                cfg.finetune.source_record = f["source_record"].get<std::string>();
        }
        if (j.contains("external")) {
            const json& e = j["external"];
            check_keys(e, "external", {"source_record"});
            if (e.contains("source_record"))
                cfg.external.source_record = e["source_record"].get<std::string>();
        }
        if (j.contains("report")) {
            const json& r = j["report"];
            check_keys(r, "report", {"records", "placeholders"});
            if (r.contains("records"))
                cfg.report.records = r["records"].get<std::vector<std::string>>();
            if (r.contains("placeholders")) cfg.report.placeholders = r["placeholders"].get<bool>();
        }
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    try {
        return parse_config(read_file(path));
    } catch (const DataError& e) {
        throw ConfigError(e.what());  // missing config file is a config error
    }
}

std::string resolved_snapshot(const ExperimentConfig& cfg) {
    return build_config_json(cfg).dump(2) + "\n";
}

// ---------- data plumbing ----------

std::uint64_t file_digest(const std::string& path) { return fnv1a64(read_file(path)); }

LoadedCohort load_signals(const ExperimentConfig& cfg) {
    if (cfg.data.signals_path.empty() || cfg.data.labels_path.empty())
        throw ConfigError("this stage requires data.signals and data.labels paths");
    std::string labels_text = read_file(cfg.data.labels_path);
    if (cfg.shuffle_labels) labels_text = synth::shuffle_labels(labels_text, cfg.seed);
    std::istringstream lin(labels_text);
    auto labels = ingest::parse_labels(lin);
    std::istringstream sin(read_file(cfg.data.signals_path));
    LoadedCohort lc;
    lc.cohort = ingest::parse_signal_log(sin, labels, &lc.report, cfg.data.task);
    for (const auto& s : lc.cohort.subjects) lc.labels[s.subject_id] = s.label;
    return lc;
}

namespace {

std::map<std::string, const Subject*> subject_index(const Cohort& c) {
    std::map<std::string, const Subject*> idx;
    for (const auto& s : c.subjects) idx[s.subject_id] = &s;
    return idx;
}

const SignalSequence& as_signals(const SessionData& sd) {
    const auto* seq = std::get_if<SignalSequence>(&sd);
    if (!seq) throw DataError("expected derived signals; run the preprocess stage first");
    return *seq;
}

std::vector<windowing::Window> windows_for(const std::map<std::string, const Subject*>& idx,
                                           const std::vector<std::string>& subjects,
                                           const windowing::WindowingConfig& wcfg) {
    std::vector<windowing::Window> out;
    for (const auto& id : subjects) {
        auto it = idx.find(id);
        if (it == idx.end()) throw DataError("subject missing from cohort: " + id);
        for (const auto& sd : it->second->sessions) {
            auto w = windowing::slide(as_signals(sd), wcfg);
            out.insert(out.end(), std::make_move_iterator(w.begin()),
                       std::make_move_iterator(w.end()));
        }
    }
    return out;
}

std::vector<windowing::Window> standardized(const std::vector<windowing::Window>& raw,
                                            const windowing::ChannelStats& stats) {
    std::vector<windowing::Window> out;
    out.reserve(raw.size());
    for (const auto& w : raw) out.push_back(windowing::standardize(w, stats));
    return out;
}

void check_cohort_labels(const Cohort& cohort, const evaluation::LabelMap& labels) {
    for (const auto& s : cohort.subjects)
        if (!labels.count(s.subject_id))
            throw DataError("cohort subject has no label: " + s.subject_id);
    auto idx = subject_index(cohort);
    for (const auto& [sid, lbl] : labels)
        if (!idx.count(sid)) throw DataError("labeled subject missing from cohort: " + sid);
}

evaluation::PatientAggregate aggregate(const std::vector<evaluation::WindowProb>& probs,
                                       const evaluation::LabelMap& expected, bool flat) {
    return flat ? evaluation::aggregate_patient_flat(probs, expected)
                : evaluation::aggregate_patient(probs, expected);
}

MemberResult train_member(const std::map<std::string, const Subject*>& idx,
                          const evaluation::LabelMap& labels, std::size_t k, std::size_t m,
                          const balance::SubsetSpec& member,
                          const std::vector<windowing::Window>& val_raw,
                          const evaluation::LabelMap& val_labels, const ExperimentConfig& cfg) {
    auto train_raw = windows_for(idx, member.subject_ids, cfg.wcfg);
    if (train_raw.empty())
        throw DataError("fold " + std::to_string(k) + " member " + std::to_string(m) +
                        ": training subset produced no windows");
    char prov[64];
    std::snprintf(prov, sizeof(prov), "fold%zu/member%zu/train", k, m);
    auto stats = windowing::fit_stats(train_raw, prov);

    training::LabeledWindows train_set;
    train_set.windows = standardized(train_raw, stats);
    train_set.labels.reserve(train_set.windows.size());
    for (const auto& w : train_set.windows)
        train_set.labels.push_back(static_cast<double>(labels.at(w.subject_id)));
    auto val_std = standardized(val_raw, stats);

    nn::ModelSpec mspec = cfg.model;
    mspec.seed = derive_seed(cfg.seed, {tag("init"), k, m});
    nn::Model model(mspec);

    training::TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed(cfg.seed, {tag("train"), k, m});

    auto result = training::train(model, train_set, val_std, val_labels, tcfg, stats, cfg.wcfg);

    nn::Model chosen = checkpoint::restore_model(result.selected);
    auto probs = training::predict_windows(chosen, val_std, tcfg.batch_size);
    auto agg = aggregate(probs, val_labels, tcfg.flat_aggregation);

    MemberResult mr;
    mr.fold = k;
    mr.member = m;
    mr.history = std::move(result.history);
    mr.selected = std::move(result.selected);
    for (const auto& s : agg.scores) mr.patient_probs[s.subject_id] = s.prob;
    return mr;
}

}  // namespace

// ---------- stage cores ----------

PretrainOutcome pretrain_cohort(const Cohort& cohort, const evaluation::LabelMap& labels,
                                const ExperimentConfig& cfg) {
    check_cohort_labels(cohort, labels);
    auto idx = subject_index(cohort);

    PretrainOutcome out;
    out.folds = evaluation::make_folds(labels, cfg.folds, cfg.seed);
    const std::size_t K = cfg.folds;
    out.plans.resize(K);
    out.fold_members.resize(K);

    const auto& fractions = cfg.fractions.empty() ? balance::kDefaultFractions : cfg.fractions;

    std::vector<std::vector<windowing::Window>> val_raw(K);
    std::vector<evaluation::LabelMap> val_labels(K);
    struct Task {
        std::size_t fold, member;
    };
    std::vector<Task> tasks;
    for (std::size_t k = 0; k < K; ++k) {
        balance::LabelMap train_labels;
        for (const auto& sid : out.folds.train_subjects(k)) train_labels[sid] = labels.at(sid);
        out.plans[k] = balance::make_plan(cfg.strategy, train_labels, fractions,
                                          derive_seed(cfg.seed, {tag("balance"), k}));
        val_raw[k] = windows_for(idx, out.folds.validation_subjects[k], cfg.wcfg);
        for (const auto& sid : out.folds.validation_subjects[k])
            val_labels[k][sid] = labels.at(sid);
        out.fold_members[k].resize(out.plans[k].members.size());
        for (std::size_t m = 0; m < out.plans[k].members.size(); ++m) tasks.push_back({k, m});
    }

    parallel_for(cfg.jobs, tasks.size(), [&](std::size_t i) {
        const auto [k, m] = tasks[i];
        out.fold_members[k][m] =
            train_member(idx, labels, k, m, out.plans[k].members[m], val_raw[k], val_labels[k], cfg);
    });

    double auc_sum = 0.0, f1_sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<std::map<std::string, double>> member_probs;
        member_probs.reserve(out.fold_members[k].size());
        for (const auto& mr : out.fold_members[k]) member_probs.push_back(mr.patient_probs);
        auto ens = balance::ensemble_aggregate(member_probs);

        std::vector<evaluation::PatientScore> scores;
        scores.reserve(ens.size());
        for (const auto& [sid, p] : ens) scores.push_back({sid, p, labels.at(sid)});

        FoldSummary fsum;
        fsum.fold = k;
        fsum.ensemble_auc = evaluation::auc_roc(scores);
        fsum.ensemble_f1 = evaluation::f1(scores);
        fsum.n_val_subjects = out.folds.validation_subjects[k].size();
        fsum.best_member = 0;
        for (std::size_t m = 1; m < out.fold_members[k].size(); ++m)
            if (out.fold_members[k][m].history.best_val_auc >
                out.fold_members[k][fsum.best_member].history.best_val_auc)
                fsum.best_member = m;
        out.fold_summaries.push_back(fsum);
        auc_sum += fsum.ensemble_auc;
        f1_sum += fsum.ensemble_f1;
    }
    out.mean_auc = auc_sum / static_cast<double>(K);
    out.mean_f1 = f1_sum / static_cast<double>(K);
    out.best_fold = 0;
    for (std::size_t k = 1; k < K; ++k)
        if (out.fold_summaries[k].ensemble_auc > out.fold_summaries[out.best_fold].ensemble_auc)
            out.best_fold = k;
    return out;
}

const PolicyFoldResult& FinetuneOutcome::result_for(nn::FreezePolicy p, std::size_t fold) const {
    for (const auto& r : results)
        if (r.policy == p && r.fold == fold) return r;
    throw std::logic_error("finetune: missing result for policy/fold");
}

FinetuneOutcome finetune_cohort(const checkpoint::Checkpoint& source, const Cohort& cohort,
                                const evaluation::LabelMap& labels,
                                const ExperimentConfig& cfg) {
    check_cohort_labels(cohort, labels);
    if (cfg.wcfg.window_size != source.wcfg.window_size)
        throw DataError("finetune: windowing.window_size " + std::to_string(cfg.wcfg.window_size) +
                        " does not match the source checkpoint's " +
                        std::to_string(source.wcfg.window_size));
    auto idx = subject_index(cohort);

    FinetuneOutcome out;
    out.folds = evaluation::make_folds(labels, cfg.folds, cfg.seed);
    const std::size_t K = cfg.folds;
    const nn::FreezePolicy policies[2] = {nn::FreezePolicy::full, nn::FreezePolicy::head_only};

    // shared per-fold data: one member (the full training split), one stats fit
    struct FoldData {
        training::LabeledWindows train;
        std::vector<windowing::Window> val_std;
        evaluation::LabelMap val_labels;
        windowing::ChannelStats stats;
    };
    std::vector<FoldData> fd(K);
    for (std::size_t k = 0; k < K; ++k) {
        auto train_raw = windows_for(idx, out.folds.train_subjects(k), cfg.wcfg);
        if (train_raw.empty())
            throw DataError("fold " + std::to_string(k) + ": training split produced no windows");
        char prov[64];
        std::snprintf(prov, sizeof(prov), "fold%zu/train", k);
        fd[k].stats = windowing::fit_stats(train_raw, prov);
        fd[k].train.windows = standardized(train_raw, fd[k].stats);
        for (const auto& w : fd[k].train.windows)
            fd[k].train.labels.push_back(static_cast<double>(labels.at(w.subject_id)));
        auto val_raw = windows_for(idx, out.folds.validation_subjects[k], cfg.wcfg);
        fd[k].val_std = standardized(val_raw, fd[k].stats);
        for (const auto& sid : out.folds.validation_subjects[k])
            fd[k].val_labels[sid] = labels.at(sid);
    }

    out.results.resize(2 * K);
    parallel_for(cfg.jobs, 2 * K, [&](std::size_t i) {
        std::size_t k = i / 2, p = i % 2;
        training::TrainConfig tcfg = cfg.train;
        tcfg.seed = derive_seed(cfg.seed, {tag("train"), k, p});
        auto result = training::fine_tune(source, fd[k].train, fd[k].val_std, fd[k].val_labels,
                                          policies[p], tcfg, cfg.finetune.lr, fd[k].stats,
                                          cfg.wcfg);

        nn::Model chosen = checkpoint::restore_model(result.selected);
        auto probs = training::predict_windows(chosen, fd[k].val_std, tcfg.batch_size);
        auto agg = aggregate(probs, fd[k].val_labels, tcfg.flat_aggregation);

        PolicyFoldResult r;
        r.policy = policies[p];
        r.fold = k;
        r.history = std::move(result.history);
        r.selected = std::move(result.selected);
        r.val_auc = evaluation::auc_roc(agg.scores);
        r.val_f1 = evaluation::f1(agg.scores);
        r.n_val_subjects = out.folds.validation_subjects[k].size();
        out.results[i] = std::move(r);
    });

    double sum[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < 2 * K; ++i) sum[i % 2] += out.results[i].val_auc;
    out.mean_auc_full = sum[0] / static_cast<double>(K);
    out.mean_auc_head_only = sum[1] / static_cast<double>(K);
    out.selected_policy = out.mean_auc_full >= out.mean_auc_head_only
                              ? nn::FreezePolicy::full
                              : nn::FreezePolicy::head_only;
    out.best_fold = 0;
    for (std::size_t k = 1; k < K; ++k)
        if (out.result_for(out.selected_policy, k).val_auc >
            out.result_for(out.selected_policy, out.best_fold).val_auc)
            out.best_fold = k;
    return out;
}

ExternalOutcome external_cohort(const checkpoint::Checkpoint& ckpt, std::size_t source_fold,
                                const Cohort& cohort, const evaluation::LabelMap& labels,
                                const ExperimentConfig& cfg) {
    check_cohort_labels(cohort, labels);
    auto idx = subject_index(cohort);

    nn::Model model = checkpoint::restore_model(ckpt);
    const std::uint64_t h0 = checkpoint::param_hash(model);

    std::vector<std::string> all;
    all.reserve(cohort.subjects.size());
    for (const auto& s : cohort.subjects) all.push_back(s.subject_id);
    auto raw = windows_for(idx, all, ckpt.wcfg);
    auto std_w = standardized(raw, ckpt.stats);
    auto probs = training::predict_windows(model, std_w, cfg.train.batch_size);
    if (checkpoint::param_hash(model) != h0)
        throw std::logic_error("external: parameters changed during inference");

    auto agg = aggregate(probs, labels, cfg.train.flat_aggregation);

    ExternalOutcome out;
    out.source_fold = source_fold;
    out.param_hash = h0;
    out.scores = agg.scores;
    out.zero_window_subjects = agg.zero_window_subjects;
    out.f1 = evaluation::f1(agg.scores, 0.5, &out.warnings);
    try {
        out.auc = evaluation::auc_roc(agg.scores);
        out.auc_defined = true;
    } catch (const MetricUndefinedError&) {
        out.auc_defined = false;
    }
    return out;
}

// ---------- artifact plumbing ----------

namespace {

class Artifacts {
  public:
    explicit Artifacts(std::string dir) : dir_(std::move(dir)) {}

    void put(const std::string& rel, const std::string& bytes) {
        write_file(join_path(dir_, rel), bytes);
        digests_[rel] = fnv1a64(bytes);
    }

    json files_json() const {
        json j = json::object();
        for (const auto& [rel, d] : digests_) j[rel] = hex64(d);
        return j;
    }

  private:
    std::string dir_;
    std::map<std::string, std::uint64_t> digests_;
};

struct MetricsRow {
    std::string stage, arch, balancing, fold;
    bool auc_defined = true;
    double auc = 0.0;
    double f1 = 0.0;
    std::size_t n = 0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out << "stage,arch,balancing,fold,auc_roc,f1,n_subjects\n";
    for (const auto& r : rows) {
        out << r.stage << ',' << r.arch << ',' << r.balancing << ',' << r.fold << ',';
        if (r.auc_defined) out << fmt6(r.auc);
        out << ',' << fmt6(r.f1) << ',' << r.n << '\n';
    }
    return out.str();
}

std::string history_csv(const training::TrainHistory& h) {
    std::ostringstream out;
    out << "epoch,train_loss,val_auc,val_loss\n";
    for (const auto& e : h.epochs)
        out << e.epoch << ',' << fmt6(e.train_loss) << ',' << fmt6(e.val_auc) << ','
            << fmt6(e.val_loss) << '\n';
    return out.str();
}

json folds_json(const evaluation::FoldPlan& fp) {
    return {{"k", fp.k},
            {"seed", fp.seed},
            {"validation_subjects", fp.validation_subjects},
            {"warnings", fp.warnings}};
}

json plan_json(const balance::ResamplingPlan& p) {
    json members = json::array();
    for (const auto& m : p.members)
        members.push_back({{"subjects", m.subject_ids.size()},
                           {"target_minority_fraction", m.target_minority_fraction},
                           {"achieved_minority_fraction", m.achieved_minority_fraction},
                           {"majority_capped", m.majority_capped}});
    return {{"strategy", balance::to_string(p.strategy)}, {"seed", p.seed}, {"members", members}};
}

json history_json(const training::TrainHistory& h, const std::string& file) {
    return {{"epochs", h.epochs.size()},     {"best_epoch", h.best_epoch},
            {"best_val_auc", h.best_val_auc}, {"selected_epoch", h.selected_epoch},
            {"early_stopped", h.early_stopped}, {"history", file}};
}

std::vector<std::string> cohort_subject_ids(const evaluation::LabelMap& labels) {
    std::vector<std::string> ids;
    ids.reserve(labels.size());
    for (const auto& [sid, lbl] : labels) ids.push_back(sid);
    return ids;
}

using StageBody = std::function<void(json&, Artifacts&)>;

void run_stage(const ExperimentConfig& cfg, const StageBody& body) {
    if (!cfg.seed_set) throw ConfigError("seed is mandatory; pass --seed or set it in the config");
    if (cfg.out_dir.empty()) throw ConfigError("output directory is mandatory; pass --out");
    const auto t0 = std::chrono::steady_clock::now();
    Artifacts art(cfg.out_dir);
    json rec;
    rec["format"] = "kds-record";
    rec["version"] = 1;
    rec["stage"] = to_string(cfg.stage);
    rec["config"] = build_config_json(cfg);
    auto finish = [&](const char* status) {
        rec["status"] = status;
        rec["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec["files"] = art.files_json();
        write_file(join_path(cfg.out_dir, "record.json"), rec.dump(2) + "\n");
    };
    try {
        body(rec, art);
    } catch (const std::exception& e) {
        rec["error"] = e.what();
        finish("failed");
        throw;
    }
    finish("ok");
}

json load_source_record(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw DataError("source record " + path + " is not valid JSON: " + e.what());
    }
    if (j.value("status", std::string()) != "ok")
        throw DataError("source record " + path + " is not a completed run");
    return j;
}

void assert_stage_disjoint(const json& source_record, const evaluation::LabelMap& target,
                           const char* what) {
    std::set<std::string> upstream;
    for (const char* key : {"subjects", "upstream_subjects"})
        if (source_record.contains(key))
            for (const auto& s : source_record[key]) upstream.insert(s.get<std::string>());
    if (upstream.empty())
        throw DataError(std::string(what) + ": source record lists no subjects to audit against");
    for (const auto& [sid, lbl] : target)
        if (upstream.count(sid))
            throw DataError(std::string(what) + ": subject " + sid +
                            " already appears in an upstream stage; cohorts must be disjoint");
}

}  // namespace

// ---------- file-level stages ----------

void run_synth(const ExperimentConfig& cfg) {
    run_stage(cfg, [&](json& rec, Artifacts& art) {
        synth::SynthConfig sc = cfg.synth;
        sc.seed = cfg.seed;
        auto out = synth::generate_cohort(sc);
        art.put("events.csv", out.events_csv);
        art.put("labels.csv", out.labels_csv);
        std::istringstream lin(out.labels_csv);
        auto labels = ingest::parse_labels(lin);
        json subjects = json::array();
        for (const auto& [sid, lbl] : labels) subjects.push_back(sid);
        rec["subjects"] = subjects;
        rec["synth"] = {{"n_pd", sc.n_pd}, {"n_hc", sc.n_hc}, {"cohort_tag", sc.cohort_tag}};
    });
}

Cohort preprocess_cohort(const Cohort& raw, TaskKind task, bool segment,
                         PreprocessCounts* counts) {
    signals::CleaningConfig ccfg;
    ccfg.task_kind = task;
    PreprocessCounts local;
    PreprocessCounts& c = counts ? *counts : local;

    Cohort out_c;
    out_c.task_kind = task;
    for (const auto& subj : raw.subjects) {
        Subject kept{subj.subject_id, subj.label, {}};
        for (const auto& sd : subj.sessions) {
            const auto& ev = std::get<SessionEvents>(sd);
            std::vector<SessionEvents> segs = segment
                                                  ? signals::segment_sessions(ev, ccfg.session_gap)
                                                  : std::vector<SessionEvents>{ev};
            for (const auto& seg : segs) {
                ++c.segments_total;
                if (seg.events.size() < 2) {
                    ++c.segments_too_short;
                    continue;
                }
                auto seq = signals::derive_signals(seg);
                if (task == TaskKind::fixed_text) {
                    auto cleaned = signals::clean_fixed_text(seq, seg, ccfg);
                    if (!cleaned) continue;
                    c.steps_dropped += seq.length() - cleaned->length();
                    ++c.segments_kept;
                    kept.sessions.emplace_back(std::move(*cleaned));
                } else {
                    ++c.segments_kept;
                    kept.sessions.emplace_back(signals::clean_free_text(seq));
                }
            }
        }
        if (kept.sessions.empty())
            c.dropped_subjects.push_back(subj.subject_id);
        else
            out_c.subjects.push_back(std::move(kept));
    }
    if (out_c.subjects.empty()) throw DataError("preprocess: no sessions survived cleaning");
    return out_c;
}

void run_preprocess(const ExperimentConfig& cfg) {
    run_stage(cfg, [&](json& rec, Artifacts& art) {
        if (cfg.data.events_path.empty() || cfg.data.labels_path.empty())
            throw ConfigError("preprocess requires data.events and data.labels paths");
        std::istringstream lin(read_file(cfg.data.labels_path));
        auto labels = ingest::parse_labels(lin);
        std::istringstream ein(read_file(cfg.data.events_path));
        ingest::ValidationReport parse_report;
        Cohort raw = ingest::parse_event_log(ein, cfg.data.task, labels, &parse_report);

        PreprocessCounts counts;
        Cohort out_c = preprocess_cohort(raw, cfg.data.task, cfg.data.segment, &counts);

        art.put("signals.csv", ingest::serialize_signals(out_c));
        art.put("labels.csv", ingest::serialize_labels(out_c));

        std::vector<std::string> ids;
        for (const auto& s : out_c.subjects) ids.push_back(s.subject_id);
        std::sort(ids.begin(), ids.end());
        rec["subjects"] = ids;
        rec["preprocess"] = {{"parse_report", parse_report.summary()},
                             {"segments_total", counts.segments_total},
                             {"segments_kept", counts.segments_kept},
                             {"segments_too_short", counts.segments_too_short},
                             {"steps_dropped", counts.steps_dropped},
                             {"dropped_subjects", counts.dropped_subjects},
                             {"segmentation", cfg.data.segment}};
    });
}

void run_pretrain(const ExperimentConfig& cfg) {
    run_stage(cfg, [&](json& rec, Artifacts& art) {
        auto lc = load_signals(cfg);
        ExperimentConfig ecfg = cfg;

        if (cfg.search.enabled) {
            auto space = cfg.search.space ? *cfg.search.space
                                          : search::default_space(cfg.search.dataset_class);
            auto [chosen, trace] =
                search::forward_select(space, [&](const search::SearchConfig& sc) {
                    ExperimentConfig c2 = ecfg;
                    c2.search.enabled = false;
                    c2.wcfg.window_size = sc.window_size;
                    c2.wcfg.stride = sc.stride;
                    c2.train.batch_size = sc.batch_size;
                    c2.train.lr = sc.lr;
                    return pretrain_cohort(lc.cohort, lc.labels, c2).mean_auc;
                });
            ecfg.wcfg = {chosen.window_size, chosen.stride};
            ecfg.train.batch_size = chosen.batch_size;
            ecfg.train.lr = chosen.lr;
            art.put("trace.csv", search::trace_to_csv(trace));
            art.put("chosen_config.csv", search::config_to_csv(chosen));
            rec["search"] = {{"evaluator_calls", trace.evaluator_calls},
                             {"chosen",
                              {{"window_size", chosen.window_size},
                               {"stride", chosen.stride},
                               {"batch_size", chosen.batch_size},
                               {"lr", chosen.lr}}}};
        }

        auto outcome = pretrain_cohort(lc.cohort, lc.labels, ecfg);

        const std::string arch = nn::to_string(ecfg.model.arch);
        const std::string strat = balance::to_string(ecfg.strategy);

        json fold_results = json::array();
        std::vector<MetricsRow> rows;
        std::size_t total_subjects = 0;
        for (std::size_t k = 0; k < outcome.fold_summaries.size(); ++k) {
            const auto& fs = outcome.fold_summaries[k];
            json members = json::array();
            for (const auto& mr : outcome.fold_members[k]) {
                char name[64];
                std::snprintf(name, sizeof(name), "history/%zu_%zu.csv", k, mr.member);
                art.put(name, history_csv(mr.history));
                json mj = history_json(mr.history, name);
                mj["member"] = mr.member;
                members.push_back(mj);
            }
            char ck[64];
            std::snprintf(ck, sizeof(ck), "ckpt/fold%zu.json", k);
            art.put(ck, checkpoint::to_json(outcome.fold_members[k][fs.best_member].selected));
            fold_results.push_back({{"fold", k},
                                    {"ensemble_auc", fs.ensemble_auc},
                                    {"ensemble_f1", fs.ensemble_f1},
                                    {"best_member", fs.best_member},
                                    {"n_val_subjects", fs.n_val_subjects},
                                    {"checkpoint", ck},
                                    {"members", members}});
            rows.push_back({"pretrain", arch, strat, std::to_string(k), true, fs.ensemble_auc,
                            fs.ensemble_f1, fs.n_val_subjects});
            total_subjects += fs.n_val_subjects;
        }
        rows.push_back({"pretrain", arch, strat, "mean", true, outcome.mean_auc, outcome.mean_f1,
                        total_subjects});
        art.put("metrics.csv", metrics_csv(rows));

        char selck[64];
        std::snprintf(selck, sizeof(selck), "ckpt/fold%zu.json", outcome.best_fold);
        rec["folds"] = folds_json(outcome.folds);
        json plans = json::array();
        for (const auto& p : outcome.plans) plans.push_back(plan_json(p));
        rec["plans"] = plans;
        rec["fold_results"] = fold_results;
        rec["selected"] = {{"fold", outcome.best_fold},
                           {"checkpoint", selck},
                           {"ensemble_auc", outcome.fold_summaries[outcome.best_fold].ensemble_auc}};
        rec["mean"] = {{"auc", outcome.mean_auc}, {"f1", outcome.mean_f1}};
        rec["metrics"] = "metrics.csv";
        rec["subjects"] = cohort_subject_ids(lc.labels);
        rec["effective"] = {{"window_size", ecfg.wcfg.window_size},
                            {"stride", ecfg.wcfg.stride},
                            {"batch_size", ecfg.train.batch_size},
                            {"lr", ecfg.train.lr}};
        rec["table"] = {{"arch", arch},
                        {"branches", json::array({{{"name", strat},
                                                   {"auc", outcome.mean_auc},
                                                   {"f1", outcome.mean_f1}}})}};
    });
}

void run_finetune(const ExperimentConfig& cfg) {
    run_stage(cfg, [&](json& rec, Artifacts& art) {
        if (cfg.finetune.source_checkpoint.empty())
            throw ConfigError("finetune requires finetune.source_checkpoint");
        auto source = checkpoint::load_file(cfg.finetune.source_checkpoint);
        auto lc = load_signals(cfg);

        json upstream = json::array();
        if (!cfg.finetune.source_record.empty()) {
            json src = load_source_record(cfg.finetune.source_record);
            assert_stage_disjoint(src, lc.labels, "finetune");
            if (src.contains("subjects")) upstream = src["subjects"];
        }

        auto outcome = finetune_cohort(source, lc.cohort, lc.labels, cfg);

        const std::string arch = nn::to_string(source.spec.arch);
        std::vector<MetricsRow> rows;
        json policy_json = json::object();
        for (nn::FreezePolicy policy : {nn::FreezePolicy::full, nn::FreezePolicy::head_only}) {
            const std::string pname = nn::to_string(policy);
            double auc_sum = 0.0, f1_sum = 0.0;
            std::size_t total = 0;
            json folds = json::array();
            for (std::size_t k = 0; k < cfg.folds; ++k) {
                const auto& r = outcome.result_for(policy, k);
                char hist[64], ck[64];
                std::snprintf(hist, sizeof(hist), "history/%zu_%s.csv", k, pname.c_str());
                std::snprintf(ck, sizeof(ck), "ckpt/fold%zu_%s.json", k, pname.c_str());
                art.put(hist, history_csv(r.history));
                art.put(ck, checkpoint::to_json(r.selected));
                json fj = history_json(r.history, hist);
                fj["fold"] = k;
                fj["val_auc"] = r.val_auc;
                fj["val_f1"] = r.val_f1;
                fj["checkpoint"] = ck;
                folds.push_back(fj);
                rows.push_back({"finetune", arch, pname, std::to_string(k), true, r.val_auc,
                                r.val_f1, r.n_val_subjects});
                auc_sum += r.val_auc;
                f1_sum += r.val_f1;
                total += r.n_val_subjects;
            }
            double mean_auc = auc_sum / static_cast<double>(cfg.folds);
            double mean_f1 = f1_sum / static_cast<double>(cfg.folds);
            rows.push_back({"finetune", arch, pname, "mean", true, mean_auc, mean_f1, total});
            policy_json[pname] = {{"mean_val_auc", mean_auc}, {"mean_val_f1", mean_f1},
                                  {"folds", folds}};
        }
        art.put("metrics.csv", metrics_csv(rows));

        const std::string sel_policy = nn::to_string(outcome.selected_policy);
        char selck[80];
        std::snprintf(selck, sizeof(selck), "ckpt/fold%zu_%s.json", outcome.best_fold,
                      sel_policy.c_str());
        rec["folds"] = folds_json(outcome.folds);
        rec["policies"] = policy_json;
        rec["selected_policy"] = sel_policy;
        rec["selected"] = {
            {"fold", outcome.best_fold},
            {"policy", sel_policy},
            {"checkpoint", selck},
            {"val_auc", outcome.result_for(outcome.selected_policy, outcome.best_fold).val_auc}};
        rec["mean"] = {{"auc", outcome.selected_policy == nn::FreezePolicy::full
                                   ? outcome.mean_auc_full
                                   : outcome.mean_auc_head_only}};
        rec["metrics"] = "metrics.csv";
        rec["source_checkpoint"] = cfg.finetune.source_checkpoint;
        rec["subjects"] = cohort_subject_ids(lc.labels);
        rec["upstream_subjects"] = upstream;
        rec["table"] = {
            {"arch", arch},
            {"branches",
             json::array(
                 {{{"name", "full"},
                   {"auc", outcome.mean_auc_full},
                   {"f1", policy_json["full"]["mean_val_f1"]}},
                  {{"name", "head_only"},
                   {"auc", outcome.mean_auc_head_only},
                   {"f1", policy_json["head_only"]["mean_val_f1"]}}})}};
    });
}

void run_external(const ExperimentConfig& cfg) {
    bool auc_defined = true;
    run_stage(cfg, [&](json& rec, Artifacts& art) {
        if (cfg.external.source_record.empty())
            throw ConfigError("external requires external.source_record");
        json src = load_source_record(cfg.external.source_record);
        if (!src.contains("selected"))
            throw DataError("source record has no selected checkpoint");
        const json& sel = src["selected"];
        std::size_t fold = sel.at("fold").get<std::size_t>();
        std::string ckpt_rel = sel.at("checkpoint").get<std::string>();
        fs::path base = fs::path(cfg.external.source_record).parent_path();
        auto ckpt = checkpoint::load_file((base / ckpt_rel).string());

        auto lc = load_signals(cfg);
        assert_stage_disjoint(src, lc.labels, "external");

        auto outcome = external_cohort(ckpt, fold, lc.cohort, lc.labels, cfg);
        auc_defined = outcome.auc_defined;

        const std::string arch = nn::to_string(ckpt.spec.arch);
        std::vector<MetricsRow> rows;
        rows.push_back({"external", arch, "none", std::to_string(outcome.source_fold),
                        outcome.auc_defined, outcome.auc, outcome.f1, outcome.scores.size()});
        art.put("metrics.csv", metrics_csv(rows));

        json scores = json::array();
        for (const auto& s : outcome.scores)
            scores.push_back(
                {{"subject", s.subject_id}, {"prob", s.prob}, {"label", s.label}});
        rec["external"] = {{"auc", outcome.auc_defined ? json(outcome.auc) : json(nullptr)},
                           {"f1", outcome.f1},
                           {"source_fold", outcome.source_fold},
                           {"n_subjects", outcome.scores.size()},
                           {"zero_window_subjects", outcome.zero_window_subjects},
                           {"warnings", outcome.warnings},
                           {"param_hash", hex64(outcome.param_hash)},
                           {"scores", scores}};
        rec["metrics"] = "metrics.csv";
        rec["subjects"] = cohort_subject_ids(lc.labels);
        rec["table"] = {
            {"arch", arch},
            {"branches",
             json::array({{{"name", "none"},
                           {"auc", outcome.auc_defined ? json(outcome.auc) : json(nullptr)},
                           {"f1", outcome.f1}}})}};
    });
    if (!auc_defined)
        throw MetricUndefinedError(
            "external: cohort contains a single class; AUC-ROC is undefined (F1 reported)");
}

void run_report(const ExperimentConfig& cfg) {
    run_stage(cfg, [&](json& rec, Artifacts& art) {
        if (cfg.report.records.empty())
            throw ConfigError("report requires at least one record path");

        struct Cell {
            bool has_auc = false;
            double auc = 0.0;
            double f1 = 0.0;
        };
        std::map<std::string, std::map<std::string, Cell>> grid;  // arch -> branch -> cell
        std::vector<std::string> branch_order;
        for (const auto& path : cfg.report.records) {
            json r = load_source_record(path);
            if (!r.contains("table"))
                throw DataError("record " + path + " carries no reportable table");
            const json& t = r["table"];
            std::string arch = t.at("arch").get<std::string>();
            for (const auto& b : t.at("branches")) {
                std::string name = b.at("name").get<std::string>();
                if (grid[arch].count(name))
                    throw ConfigError("duplicate report cell for arch " + arch + ", branch " +
                                      name);
                Cell c;
                if (!b.at("auc").is_null()) {
                    c.has_auc = true;
                    c.auc = b["auc"].get<double>();
                }
                c.f1 = b.at("f1").get<double>();
                grid[arch][name] = c;
                if (std::find(branch_order.begin(), branch_order.end(), name) ==
                    branch_order.end())
                    branch_order.push_back(name);
            }
        }

        // canonical column order first, then any extras in first-appearance order
        std::vector<std::string> columns;
        for (const char* b : {"unbalanced", "undersample", "imbalmed", "full", "head_only", "none"})
            if (std::find(branch_order.begin(), branch_order.end(), b) != branch_order.end())
                columns.push_back(b);
        for (const auto& b : branch_order)
            if (std::find(columns.begin(), columns.end(), b) == columns.end())
                columns.push_back(b);

        // paper row order; the two skipped architectures slot into their table positions
        const std::vector<std::pair<std::string, bool>> arch_order = {
            {"gru", false},  {"lstm", false},        {"gru_fcn", false},
            {"lstm_fcn", false}, {"tcn", false},     {"xcm", true},
            {"transformer", false}, {"tstplus", true}, {"affine", false}};
        std::vector<std::pair<std::string, bool>> table_rows;  // (arch, skipped)
        for (const auto& [name, placeholder] : arch_order) {
            if (placeholder) {
                if (cfg.report.placeholders) table_rows.push_back({name, true});
            } else if (grid.count(name)) {
                table_rows.push_back({name, false});
            }
        }
        for (const auto& [name, cells] : grid)  // archs outside the canonical list
            if (std::find_if(arch_order.begin(), arch_order.end(), [&](const auto& a) {
                    return a.first == name;
                }) == arch_order.end())
                table_rows.push_back({name, false});

        std::ostringstream out;
        out << "arch";
        for (const auto& c : columns) out << ',' << c << "_auc," << c << "_f1";
        out << ",best\n";
        std::size_t emitted = 0;
        for (const auto& [name, skipped] : table_rows) {
            out << name;
            std::string best;
            double best_auc = 0.0;
            for (const auto& c : columns) {
                auto git = grid.find(name);
                const Cell* cell = nullptr;
                if (!skipped && git != grid.end()) {
                    auto cit = git->second.find(c);
                    if (cit != git->second.end()) cell = &cit->second;
                }
                if (cell) {
                    out << ',' << (cell->has_auc ? fmt6(cell->auc) : "") << ',' << fmt6(cell->f1);
                    if (cell->has_auc && (best.empty() || cell->auc > best_auc)) {
                        best = c;
                        best_auc = cell->auc;
                    }
                } else {
                    out << ",,";
                }
            }
            out << ',' << (skipped ? "skipped" : best) << '\n';
            ++emitted;
        }
        art.put("report.csv", out.str());
        rec["report"] = {{"rows", emitted}, {"columns", columns}};
    });
}

void run(const ExperimentConfig& cfg) {
    switch (cfg.stage) {
        case Stage::synth: run_synth(cfg); return;
        case Stage::preprocess: run_preprocess(cfg); return;
        case Stage::pretrain: run_pretrain(cfg); return;
        case Stage::finetune: run_finetune(cfg); return;
        case Stage::external_validate: run_external(cfg); return;
        case Stage::report: run_report(cfg); return;
    }
    throw ConfigError("unknown stage");
}

}  // namespace kds::experiment
