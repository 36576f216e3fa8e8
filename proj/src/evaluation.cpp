#include "kds/evaluation.hpp"

#include <algorithm>
#include <set>

#include "kds/errors.hpp"
#include "kds/rng.hpp"

namespace kds::evaluation {

std::vector<std::string> FoldPlan::train_subjects(std::size_t fold) const {
    std::set<std::string> held(validation_subjects.at(fold).begin(),
                               validation_subjects.at(fold).end());
    std::vector<std::string> out;
    for (const auto& f : validation_subjects)
        for (const auto& id : f)
            if (!held.count(id)) out.push_back(id);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> FoldPlan::all_subjects() const {
    std::vector<std::string> out;
    for (const auto& f : validation_subjects) out.insert(out.end(), f.begin(), f.end());
    std::sort(out.begin(), out.end());
    return out;
}

FoldPlan make_folds(const LabelMap& labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("make_folds: K must be >= 2");
    if (k > labels.size()) throw ConfigError("make_folds: K exceeds subject count");
    std::vector<std::string> hc, pd;
    for (const auto& [id, label] : labels) (label == 1 ? pd : hc).push_back(id);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.validation_subjects.assign(k, {});
    if (hc.size() < k)
        plan.warnings.push_back("class 0 has fewer subjects than folds; stratification is "
                                "best-effort");
    if (pd.size() < k)
        plan.warnings.push_back("class 1 has fewer subjects than folds; stratification is "
                                "best-effort");

    Rng rng(derive_seed(seed, {tag("folds")}));
    rng.shuffle(hc);
    rng.shuffle(pd);

    // Deal each class round-robin, but hand class-0 remainders to the lowest
    // folds and class-1 remainders to the highest so total sizes stay within 1.
    std::size_t base0 = hc.size() / k, rem0 = hc.size() % k;
    std::size_t base1 = pd.size() / k, rem1 = pd.size() % k;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t take = base0 + (i < rem0 ? 1 : 0);
        for (std::size_t j = 0; j < take; ++j) plan.validation_subjects[i].push_back(hc[pos++]);
    }
    pos = 0;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t take = base1 + (i >= k - rem1 ? 1 : 0);
        for (std::size_t j = 0; j < take; ++j) plan.validation_subjects[i].push_back(pd[pos++]);
    }
    for (auto& fold : plan.validation_subjects) std::sort(fold.begin(), fold.end());
    return plan;
}

namespace {

PatientAggregate aggregate_impl(const std::vector<WindowProb>& window_probs,
                                const LabelMap& expected, bool hierarchical) {
    for (const auto& wp : window_probs) {
        if (!(wp.prob >= 0.0 && wp.prob <= 1.0))
            throw DataError("aggregate_patient: window probability outside [0,1]");
        if (!expected.count(wp.subject_id))
            throw DataError("aggregate_patient: window for unexpected subject " + wp.subject_id);
    }
    // subject -> session -> probs, maps keep the iteration order deterministic
    std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
    for (const auto& wp : window_probs) grouped[wp.subject_id][wp.session_id].push_back(wp.prob);

    PatientAggregate out;
    for (const auto& [id, label] : expected) {
        auto it = grouped.find(id);
        if (it == grouped.end()) {
            out.zero_window_subjects.push_back(id);
            continue;
        }
        double prob;
        if (hierarchical) {
            double sum = 0.0;
            for (const auto& [session, probs] : it->second) {
                double s = 0.0;
                for (double p : probs) s += p;
                sum += s / static_cast<double>(probs.size());
            }
            prob = sum / static_cast<double>(it->second.size());
        } else {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& [session, probs] : it->second) {
                for (double p : probs) sum += p;
                n += probs.size();
            }
            prob = sum / static_cast<double>(n);
        }
        out.scores.push_back({id, prob, label});
    }
    return out;
}

}  // namespace

PatientAggregate aggregate_patient(const std::vector<WindowProb>& window_probs,
                                   const LabelMap& expected) {
    return aggregate_impl(window_probs, expected, true);
}

PatientAggregate aggregate_patient_flat(const std::vector<WindowProb>& window_probs,
                                        const LabelMap& expected) {
    return aggregate_impl(window_probs, expected, false);
}

double auc_roc(const std::vector<PatientScore>& scores) {
    std::vector<std::pair<double, int>> pts;
    pts.reserve(scores.size());
    std::size_t pos = 0, neg = 0;
    for (const auto& s : scores) {
        pts.emplace_back(s.prob, s.label);
        (s.label == 1 ? pos : neg)++;
    }
    if (pos == 0 || neg == 0)
        throw MetricUndefinedError("auc_roc: both classes required");
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // sweep tie groups; exact integer win/tie counts keep this bitwise equal to
    // the O(n^2) pairwise definition
    std::uint64_t wins = 0, ties = 0, neg_below = 0;
    std::size_t i = 0;
    while (i < pts.size()) {
        std::size_t j = i;
        std::uint64_t gpos = 0, gneg = 0;
        while (j < pts.size() && pts[j].first == pts[i].first) {
            (pts[j].second == 1 ? gpos : gneg)++;
            ++j;
        }
        wins += gpos * neg_below;
        ties += gpos * gneg;
        neg_below += gneg;
        i = j;
    }
    return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
           (static_cast<double>(pos) * static_cast<double>(neg));
}

double f1(const std::vector<PatientScore>& scores, double threshold,
          std::vector<std::string>* warnings) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& s : scores) {
        bool pred = s.prob >= threshold;
        if (pred && s.label == 1) ++tp;
        else if (pred && s.label == 0) ++fp;
        else if (!pred && s.label == 1) ++fn;
    }
    auto warn = [&](const char* msg) {
        if (warnings) warnings->push_back(msg);
    };
    if (tp + fp == 0) {
        warn("f1: no positive predictions; precision undefined, reporting 0");
        return 0.0;
    }
    if (tp + fn == 0) {
        warn("f1: no positive labels; recall undefined, reporting 0");
        return 0.0;
    }
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (precision + recall == 0.0) {
        warn("f1: precision+recall is zero, reporting 0");
        return 0.0;
    }
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace kds::evaluation
