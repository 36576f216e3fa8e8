#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kds::balance {

enum class Strategy { unbalanced, undersample, imbalmed };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct SubsetSpec {
    std::vector<std::string> subject_ids;
    double target_minority_fraction = 0.0;
    double achieved_minority_fraction = 0.0;
    bool majority_capped = false;
};

struct ResamplingPlan {
    Strategy strategy = Strategy::unbalanced;
    std::vector<SubsetSpec> members;
    std::uint64_t seed = 0;
};

using LabelMap = std::map<std::string, int>;  // subject_id -> label (PD=1, HC=0)

extern const std::vector<double> kDefaultFractions;  // {0.20, 0.35, 0.50, 0.65, 0.80}

ResamplingPlan unbalanced_plan(const LabelMap& train_labels);
ResamplingPlan undersample(const LabelMap& train_labels, std::uint64_t seed);
ResamplingPlan imbalmed_plan(const LabelMap& train_labels, const std::vector<double>& fractions,
                             std::uint64_t seed);

ResamplingPlan make_plan(Strategy strategy, const LabelMap& train_labels,
                         const std::vector<double>& fractions, std::uint64_t seed);

// unweighted mean of member patient-level probabilities; all members must
// cover the same subject set
std::map<std::string, double> ensemble_aggregate(
    const std::vector<std::map<std::string, double>>& member_patient_probs);

}  // namespace kds::balance
