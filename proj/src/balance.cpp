#include "kds/balance.hpp"

#include <algorithm>
#include <cmath>

#include "kds/errors.hpp"
#include "kds/rng.hpp"

namespace kds::balance {

const std::vector<double> kDefaultFractions = {0.20, 0.35, 0.50, 0.65, 0.80};

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::unbalanced: return "unbalanced";
        case Strategy::undersample: return "undersample";
        case Strategy::imbalmed: return "imbalmed";
    }
    return "unbalanced";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "unbalanced") return Strategy::unbalanced;
    if (s == "undersample") return Strategy::undersample;
    if (s == "imbalmed") return Strategy::imbalmed;
    throw ConfigError("unknown balancing strategy: " + s);
}

namespace {

struct Split {
    std::vector<std::string> minority;  // ties broken toward PD, see below
    std::vector<std::string> majority;
    int minority_label = 1;
};

Split split_classes(const LabelMap& train_labels) {
    Split sp;
    std::vector<std::string> pd, hc;
    for (const auto& [id, label] : train_labels) (label == 1 ? pd : hc).push_back(id);
    if (pd.empty() || hc.empty())
        throw DataError("balancing requires both classes in the training split");
    // PD wins ties so the scarce clinical class is never downsampled
    if (pd.size() <= hc.size()) {
        sp.minority = std::move(pd);
        sp.majority = std::move(hc);
        sp.minority_label = 1;
    } else {
        sp.minority = std::move(hc);
        sp.majority = std::move(pd);
        sp.minority_label = 0;
    }
    return sp;
}

double minority_fraction(const LabelMap& train_labels) {
    std::size_t pd = 0, total = 0;
    for (const auto& [id, label] : train_labels) {
        pd += (label == 1);
        ++total;
    }
    std::size_t hc = total - pd;
    std::size_t m = std::min(pd, hc);
    return static_cast<double>(m) / static_cast<double>(total);
}

SubsetSpec member_from(const Split& sp, std::vector<std::string> majority_sample,
                       double target_fraction) {
    SubsetSpec spec;
    spec.subject_ids = sp.minority;
    spec.subject_ids.insert(spec.subject_ids.end(), majority_sample.begin(),
                            majority_sample.end());
    std::sort(spec.subject_ids.begin(), spec.subject_ids.end());
    spec.target_minority_fraction = target_fraction;
    spec.achieved_minority_fraction =
        static_cast<double>(sp.minority.size()) / static_cast<double>(spec.subject_ids.size());
    return spec;
}

}  // namespace

ResamplingPlan unbalanced_plan(const LabelMap& train_labels) {
    if (train_labels.empty()) throw DataError("unbalanced_plan: empty training split");
    ResamplingPlan plan;
    plan.strategy = Strategy::unbalanced;
    SubsetSpec spec;
    for (const auto& [id, label] : train_labels) spec.subject_ids.push_back(id);
    double f = minority_fraction(train_labels);
    spec.target_minority_fraction = f;
    spec.achieved_minority_fraction = f;
    plan.members.push_back(std::move(spec));
    return plan;
}

ResamplingPlan undersample(const LabelMap& train_labels, std::uint64_t seed) {
    Split sp = split_classes(train_labels);
    ResamplingPlan plan;
    plan.strategy = Strategy::undersample;
    plan.seed = seed;
    std::vector<std::string> pool = sp.majority;
    Rng rng(derive_seed(seed, {tag("undersample")}));
    rng.shuffle(pool);
    pool.resize(sp.minority.size());
    plan.members.push_back(member_from(sp, std::move(pool), 0.5));
    return plan;
}

ResamplingPlan imbalmed_plan(const LabelMap& train_labels, const std::vector<double>& fractions,
                             std::uint64_t seed) {
    if (fractions.empty()) throw ConfigError("imbalmed: empty fraction list");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] < 1.0))
            throw ConfigError("imbalmed: fractions must lie in (0,1)");
        if (i > 0 && !(fractions[i] > fractions[i - 1]))
            throw ConfigError("imbalmed: fractions must be strictly increasing");
    }
    Split sp = split_classes(train_labels);
    ResamplingPlan plan;
    plan.strategy = Strategy::imbalmed;
    plan.seed = seed;
    std::size_t m = sp.minority.size();
    for (std::size_t k = 0; k < fractions.size(); ++k) {
        double f = fractions[k];
        auto want = static_cast<std::size_t>(
            std::llround(static_cast<double>(m) * (1.0 - f) / f));
        bool capped = want > sp.majority.size();
        std::size_t take = capped ? sp.majority.size() : want;
        std::vector<std::string> pool = sp.majority;
        Rng rng(derive_seed(seed, {tag("imbalmed"), static_cast<std::uint64_t>(k)}));
        rng.shuffle(pool);
        pool.resize(take);
        SubsetSpec spec = member_from(sp, std::move(pool), f);
        spec.majority_capped = capped;
        plan.members.push_back(std::move(spec));
    }
    return plan;
}

ResamplingPlan make_plan(Strategy strategy, const LabelMap& train_labels,
                         const std::vector<double>& fractions, std::uint64_t seed) {
    switch (strategy) {
        case Strategy::unbalanced: return unbalanced_plan(train_labels);
        case Strategy::undersample: return undersample(train_labels, seed);
        case Strategy::imbalmed: return imbalmed_plan(train_labels, fractions, seed);
    }
    throw ConfigError("make_plan: bad strategy");
}

std::map<std::string, double> ensemble_aggregate(
    const std::vector<std::map<std::string, double>>& member_patient_probs) {
    if (member_patient_probs.empty()) throw DataError("ensemble_aggregate: no members");
    const auto& first = member_patient_probs.front();
    for (const auto& member : member_patient_probs) {
        if (member.size() != first.size())
            throw DataError("ensemble_aggregate: members cover different subject sets");
        for (const auto& [id, p] : member)
            if (!first.count(id))
                throw DataError("ensemble_aggregate: members cover different subject sets");
    }
    std::map<std::string, double> out;
    for (const auto& [id, p] : first) {
        double sum = 0.0;
        for (const auto& member : member_patient_probs) sum += member.at(id);
        out[id] = sum / static_cast<double>(member_patient_probs.size());
    }
    return out;
}

}  // namespace kds::balance
