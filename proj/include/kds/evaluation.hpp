#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kds::evaluation {

using LabelMap = std::map<std::string, int>;  // subject_id -> label (PD=1, HC=0)

struct FoldPlan {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> validation_subjects;  // one entry per fold
    std::vector<std::string> warnings;

    // training split = everything not in fold `i`
    std::vector<std::string> train_subjects(std::size_t fold) const;
    std::vector<std::string> all_subjects() const;
};

struct WindowProb {
    std::string subject_id;
    std::string session_id;
    double prob = 0.0;
};

struct PatientScore {
    std::string subject_id;
    double prob = 0.0;
    int label = 0;
};

struct PatientAggregate {
    std::vector<PatientScore> scores;               // subjects with >= 1 window, sorted by id
    std::vector<std::string> zero_window_subjects;  // expected but saw no windows
};

FoldPlan make_folds(const LabelMap& labels, std::size_t k, std::uint64_t seed);

// hierarchical mean: windows -> session mean -> subject mean over sessions
PatientAggregate aggregate_patient(const std::vector<WindowProb>& window_probs,
                                   const LabelMap& expected);

// flat mean over all of a subject's windows, kept for sensitivity analysis
PatientAggregate aggregate_patient_flat(const std::vector<WindowProb>& window_probs,
                                        const LabelMap& expected);

double auc_roc(const std::vector<PatientScore>& scores);

double f1(const std::vector<PatientScore>& scores, double threshold = 0.5,
          std::vector<std::string>* warnings = nullptr);

}  // namespace kds::evaluation
