#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kds/balance.hpp"
#include "kds/checkpoint.hpp"
#include "kds/data.hpp"
#include "kds/evaluation.hpp"
#include "kds/ingest.hpp"
#include "kds/nn.hpp"
#include "kds/search.hpp"
#include "kds/synth.hpp"
#include "kds/training.hpp"
#include "kds/windowing.hpp"

namespace kds::experiment {

enum class Stage { synth, preprocess, pretrain, finetune, external_validate, report };

Stage stage_from_string(const std::string& s);
std::string to_string(Stage s);

struct DataConfig {
    std::string events_path;   // preprocess input
    std::string signals_path;  // training-stage input
    std::string labels_path;
    TaskKind task = TaskKind::fixed_text;
    bool segment = true;  // split sessions at >30 s press gaps during preprocess
};

struct SearchSettings {
    bool enabled = false;
    search::DatasetClass dataset_class = search::DatasetClass::fixed_text_short;
    std::optional<search::SearchSpace> space;  // unset -> default_space(dataset_class)
};

struct FinetuneSettings {
    std::string source_checkpoint;
    std::optional<double> lr;   // unset -> source lr / 10
    std::string source_record;  // optional; enables the cross-stage subject audit
};

struct ExternalSettings {
    std::string source_record;  // record.json of the stage providing the checkpoint
};

struct ReportSettings {
    std::vector<std::string> records;
    bool placeholders = false;  // add the two skipped-architecture rows
};

struct ExperimentConfig {
    Stage stage = Stage::pretrain;
    std::uint64_t seed = 0;
    bool seed_set = false;  // seed is mandatory; CLI/--seed or config must set it
    std::string out_dir;
    std::size_t jobs = 1;
    DataConfig data;
    windowing::WindowingConfig wcfg;
    balance::Strategy strategy = balance::Strategy::imbalmed;
    std::vector<double> fractions;  // empty -> balance::kDefaultFractions
    nn::ModelSpec model;
    training::TrainConfig train;
    std::size_t folds = 10;
    SearchSettings search;
    synth::SynthConfig synth;
    bool shuffle_labels = false;  // negative-control switch
    FinetuneSettings finetune;
    ExternalSettings external;
    ReportSettings report;
};

// JSON config, schema "kds-experiment" v1; unknown keys are a ConfigError so
// typos cannot silently fall back to defaults
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// every default made explicit; stored inside record.json
std::string resolved_snapshot(const ExperimentConfig& cfg);

// ---- in-memory stage cores (file wrappers below persist their artifacts) ----

struct MemberResult {
    std::size_t fold = 0;
    std::size_t member = 0;
    training::TrainHistory history;
    checkpoint::Checkpoint selected;
    std::map<std::string, double> patient_probs;  // fold validation subjects
};

struct FoldSummary {
    std::size_t fold = 0;
    double ensemble_auc = 0.0;
    double ensemble_f1 = 0.0;
    std::size_t best_member = 0;  // highest best_val_auc, ties -> lowest index
    std::size_t n_val_subjects = 0;
};

struct PretrainOutcome {
    evaluation::FoldPlan folds;
    std::vector<balance::ResamplingPlan> plans;           // per fold
    std::vector<std::vector<MemberResult>> fold_members;  // [fold][member]
    std::vector<FoldSummary> fold_summaries;
    std::size_t best_fold = 0;  // highest ensemble AUC, ties -> lowest index
    double mean_auc = 0.0;      // mean of per-fold ensemble AUCs
    double mean_f1 = 0.0;
};

PretrainOutcome pretrain_cohort(const Cohort& cohort, const evaluation::LabelMap& labels,
                                const ExperimentConfig& cfg);

struct PolicyFoldResult {
    nn::FreezePolicy policy = nn::FreezePolicy::full;
    std::size_t fold = 0;
    training::TrainHistory history;
    checkpoint::Checkpoint selected;
    double val_auc = 0.0;  // patient-level, from the selected checkpoint
    double val_f1 = 0.0;
    std::size_t n_val_subjects = 0;
};

struct FinetuneOutcome {
    evaluation::FoldPlan folds;
    std::vector<PolicyFoldResult> results;  // both policies x K folds
    nn::FreezePolicy selected_policy = nn::FreezePolicy::full;
    double mean_auc_full = 0.0;
    double mean_auc_head_only = 0.0;
    std::size_t best_fold = 0;  // within the selected policy

    const PolicyFoldResult& result_for(nn::FreezePolicy p, std::size_t fold) const;
};

FinetuneOutcome finetune_cohort(const checkpoint::Checkpoint& source, const Cohort& cohort,
                                const evaluation::LabelMap& labels,
                                const ExperimentConfig& cfg);

struct ExternalOutcome {
    bool auc_defined = false;
    double auc = 0.0;
    double f1 = 0.0;
    std::size_t source_fold = 0;
    std::vector<evaluation::PatientScore> scores;
    std::vector<std::string> zero_window_subjects;
    std::vector<std::string> warnings;
    std::uint64_t param_hash = 0;  // asserted unchanged across the whole stage
};

// inference only: reuses the checkpoint's windowing config and channel stats
ExternalOutcome external_cohort(const checkpoint::Checkpoint& ckpt, std::size_t source_fold,
                                const Cohort& cohort, const evaluation::LabelMap& labels,
                                const ExperimentConfig& cfg);

// ---- file-level stage runners; artifacts land under cfg.out_dir ----

void run(const ExperimentConfig& cfg);  // dispatches on cfg.stage

void run_synth(const ExperimentConfig& cfg);
void run_preprocess(const ExperimentConfig& cfg);
void run_pretrain(const ExperimentConfig& cfg);
void run_finetune(const ExperimentConfig& cfg);
void run_external(const ExperimentConfig& cfg);
void run_report(const ExperimentConfig& cfg);

// fnv-1a digest of a file's bytes, as recorded in record.json
std::uint64_t file_digest(const std::string& path);

// preprocess core shared by the CLI stage and the python module: segmentation
// (optional), signal derivation, task-appropriate cleaning
struct PreprocessCounts {
    std::size_t segments_total = 0;
    std::size_t segments_kept = 0;
    std::size_t segments_too_short = 0;
    std::size_t steps_dropped = 0;
    std::vector<std::string> dropped_subjects;
};
Cohort preprocess_cohort(const Cohort& raw, TaskKind task, bool segment,
                         PreprocessCounts* counts = nullptr);

// signals + labels loaded per cfg.data, honoring cfg.shuffle_labels
struct LoadedCohort {
    Cohort cohort;
    evaluation::LabelMap labels;
    ingest::ValidationReport report;
};
LoadedCohort load_signals(const ExperimentConfig& cfg);

}  // namespace kds::experiment
