// kdscreen — keystroke-dynamics screening pipeline driver.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 undefined metric,
// 5 internal failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kds/errors.hpp"
#include "kds/experiment.hpp"

namespace {

using kds::experiment::ExperimentConfig;
using kds::experiment::Stage;

struct CommonFlags {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::string arch;
    std::string balance;
    std::size_t jobs = 0;
};

struct StageFlags {
    CommonFlags common;
    std::string events, signals, labels, task;
    std::size_t window = 0, stride = 0, folds = 0, epochs = 0;
    bool no_segment = false;
    bool search = false;
    bool shuffle_labels = false;
    std::size_t n_pd = 0, n_hc = 0;
    std::string cohort_tag;
    double sessions_mean = 0.0, length_mean = 0.0;
    std::string checkpoint, source_record;
    double lr = 0.0;
    std::vector<std::string> records;
    bool placeholders = false;
};

bool given(const CLI::App* sub, const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "JSON experiment config");
    sub->add_option("--seed", f.seed, "master seed (mandatory unless set in the config)");
    sub->add_option("--out", f.out, "output directory for record.json and artifacts");
    sub->add_option("--arch", f.arch,
                    "model architecture (gru, lstm, gru_fcn, lstm_fcn, tcn, transformer, affine)");
    sub->add_option("--balance", f.balance, "balancing strategy (unbalanced, undersample, imbalmed)");
    sub->add_option("--jobs", f.jobs, "worker threads for fold/member training");
}

ExperimentConfig assemble(const CLI::App* sub, const StageFlags& f, Stage stage) {
    ExperimentConfig cfg;
    if (given(sub, "--config")) cfg = kds::experiment::load_config(f.common.config);
    cfg.stage = stage;
    if (given(sub, "--seed")) {
        cfg.seed = f.common.seed;
        cfg.seed_set = true;
    }
    if (given(sub, "--out")) cfg.out_dir = f.common.out;
    if (given(sub, "--arch")) cfg.model.arch = kds::nn::arch_from_string(f.common.arch);
    if (given(sub, "--balance")) cfg.strategy = kds::balance::strategy_from_string(f.common.balance);
    if (given(sub, "--jobs")) {
        if (f.common.jobs < 1) throw kds::ConfigError("--jobs must be >= 1");
        cfg.jobs = f.common.jobs;
    }
    if (given(sub, "--events")) cfg.data.events_path = f.events;
    if (given(sub, "--signals")) cfg.data.signals_path = f.signals;
    if (given(sub, "--labels")) cfg.data.labels_path = f.labels;
    if (given(sub, "--task")) cfg.data.task = kds::task_kind_from_string(f.task);
    if (given(sub, "--no-segment")) cfg.data.segment = false;
    if (given(sub, "--window")) cfg.wcfg.window_size = f.window;
    if (given(sub, "--stride")) cfg.wcfg.stride = f.stride;
    if (given(sub, "--folds")) cfg.folds = f.folds;
    if (given(sub, "--epochs")) cfg.train.epochs = f.epochs;
    if (given(sub, "--search")) cfg.search.enabled = true;
    if (given(sub, "--shuffle-labels")) cfg.shuffle_labels = true;
    if (given(sub, "--pd")) cfg.synth.n_pd = f.n_pd;
    if (given(sub, "--hc")) cfg.synth.n_hc = f.n_hc;
    if (given(sub, "--tag")) cfg.synth.cohort_tag = f.cohort_tag;
    if (given(sub, "--sessions")) cfg.synth.sessions_mean = f.sessions_mean;
    if (given(sub, "--length")) cfg.synth.length_mean = f.length_mean;
    if (given(sub, "--checkpoint")) cfg.finetune.source_checkpoint = f.checkpoint;
    if (given(sub, "--lr")) cfg.finetune.lr = f.lr;
    if (given(sub, "--source-record")) {
        if (stage == Stage::finetune)
            cfg.finetune.source_record = f.source_record;
        else
            cfg.external.source_record = f.source_record;
    }
    if (!f.records.empty()) cfg.report.records = f.records;
    if (given(sub, "--placeholders")) cfg.report.placeholders = true;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"keystroke-dynamics screening pipeline"};
    app.require_subcommand(1);

    StageFlags f;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort (events + labels)");
    add_common(synth, f.common);
    synth->add_option("--pd", f.n_pd, "number of PD subjects");
    synth->add_option("--hc", f.n_hc, "number of control subjects");
    synth->add_option("--tag", f.cohort_tag, "subject-id prefix keeping cohorts disjoint");
    synth->add_option("--sessions", f.sessions_mean, "mean sessions per subject");
    synth->add_option("--length", f.length_mean, "mean keystrokes per session");

    CLI::App* pre = app.add_subcommand("preprocess", "derive and clean signals from raw events");
    add_common(pre, f.common);
    pre->add_option("--events", f.events, "raw event CSV");
    pre->add_option("--labels", f.labels, "labels CSV");
    pre->add_option("--task", f.task, "fixed_text or free_text");
    pre->add_flag("--no-segment", f.no_segment, "disable 30 s session segmentation");

    CLI::App* pt = app.add_subcommand("pretrain", "K-fold pre-training with balancing ensembles");
    add_common(pt, f.common);
    pt->add_option("--signals", f.signals, "preprocessed signal CSV");
    pt->add_option("--labels", f.labels, "labels CSV");
    pt->add_option("--task", f.task, "fixed_text or free_text");
    pt->add_option("--window", f.window, "window size (steps)");
    pt->add_option("--stride", f.stride, "window stride (steps)");
    pt->add_option("--folds", f.folds, "number of folds");
    pt->add_option("--epochs", f.epochs, "training epochs");
    pt->add_flag("--search", f.search, "run forward selection before the final fit");
    pt->add_flag("--shuffle-labels", f.shuffle_labels, "negative control: permute labels");

    CLI::App* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on a new cohort");
    add_common(ft, f.common);
    ft->add_option("--signals", f.signals, "preprocessed signal CSV");
    ft->add_option("--labels", f.labels, "labels CSV");
    ft->add_option("--task", f.task, "fixed_text or free_text");
    ft->add_option("--checkpoint", f.checkpoint, "source checkpoint JSON");
    ft->add_option("--source-record", f.source_record, "source record.json for the subject audit");
    ft->add_option("--lr", f.lr, "fine-tuning learning rate (default: source lr / 10)");
    ft->add_option("--window", f.window, "window size (must match the source checkpoint)");
    ft->add_option("--stride", f.stride, "window stride (steps)");
    ft->add_option("--folds", f.folds, "number of folds");
    ft->add_option("--epochs", f.epochs, "training epochs");

    CLI::App* ext = app.add_subcommand("external", "apply a selected checkpoint to a held-out cohort");
    add_common(ext, f.common);
    ext->add_option("--signals", f.signals, "preprocessed signal CSV");
    ext->add_option("--labels", f.labels, "labels CSV");
    ext->add_option("--task", f.task, "fixed_text or free_text");
    ext->add_option("--source-record", f.source_record, "record.json naming the selected checkpoint");

    CLI::App* rep = app.add_subcommand("report", "merge stage records into comparison tables");
    add_common(rep, f.common);
    rep->add_option("records", f.records, "record.json paths to merge");
    rep->add_flag("--placeholders", f.placeholders, "include the two skipped-architecture rows");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    Stage stage = Stage::pretrain;
    const CLI::App* sub = nullptr;
    if (synth->parsed()) { stage = Stage::synth; sub = synth; }
    else if (pre->parsed()) { stage = Stage::preprocess; sub = pre; }
    else if (pt->parsed()) { stage = Stage::pretrain; sub = pt; }
    else if (ft->parsed()) { stage = Stage::finetune; sub = ft; }
    else if (ext->parsed()) { stage = Stage::external_validate; sub = ext; }
    else if (rep->parsed()) { stage = Stage::report; sub = rep; }

    try {
        ExperimentConfig cfg = assemble(sub, f, stage);
        kds::experiment::run(cfg);
        return 0;
    } catch (const kds::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const kds::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const kds::MetricUndefinedError& e) {
        std::cerr << "undefined metric: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 5;
    }
}
