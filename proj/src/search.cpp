#include "kds/search.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "kds/csv.hpp"
#include "kds/errors.hpp"

namespace kds::search {

DatasetClass dataset_class_from_string(const std::string& s) {
    if (s == "free_text_long") return DatasetClass::free_text_long;
    if (s == "fixed_text_short") return DatasetClass::fixed_text_short;
    throw ConfigError("unknown dataset class: " + s);
}

std::string to_string(DatasetClass dc) {
    return dc == DatasetClass::free_text_long ? "free_text_long" : "fixed_text_short";
}

std::size_t resolve_stride(const StrideValue& sv, std::size_t window) {
    if (window == 0) throw ConfigError("resolve_stride: window must be positive");
    switch (sv.kind) {
        case StrideValue::Kind::literal:
            if (sv.value == 0) throw ConfigError("resolve_stride: stride must be positive");
            return sv.value;
        case StrideValue::Kind::half:
            return window / 2;
        case StrideValue::Kind::full:
            return window;
    }
    throw ConfigError("resolve_stride: bad stride kind");
}

std::string to_string(const StrideValue& sv) {
    switch (sv.kind) {
        case StrideValue::Kind::literal:
            return std::to_string(sv.value);
        case StrideValue::Kind::half:
            return "half";
        case StrideValue::Kind::full:
            return "full";
    }
    return "?";
}

SearchSpace default_space(DatasetClass dc) {
    SearchSpace s;
    s.window_sizes = dc == DatasetClass::free_text_long ? std::vector<std::size_t>{90, 100, 110}
                                                        : std::vector<std::size_t>{40, 50, 60};
    return s;
}

namespace {

struct Axis {
    std::string name;
    std::size_t size;
    std::function<void(SearchConfig&, std::size_t)> apply;  // set candidate i
    std::function<std::string(std::size_t)> label;
};

void sweep_axis(const Axis& axis, SearchConfig& cfg, const Evaluator& evaluate,
                SearchTrace& trace) {
    AxisStep step;
    step.axis = axis.name;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_i = axis.size;  // sentinel: nothing viable yet
    for (std::size_t i = 0; i < axis.size; ++i) {
        SearchConfig candidate = cfg;
        axis.apply(candidate, i);
        step.candidates.push_back(axis.label(i));
        double score = std::numeric_limits<double>::quiet_NaN();
        bool ok = true;
        try {
            score = evaluate(candidate);
        } catch (const std::exception&) {
            ok = false;
        }
        ++trace.evaluator_calls;
        step.scores.push_back(score);
        step.failed.push_back(!ok);
        if (ok && score > best) {  // strict: ties keep the first declared value
            best = score;
            best_i = i;
        }
    }
    if (best_i == axis.size)
        throw DataError("forward_select: every candidate failed on axis " + axis.name);
    axis.apply(cfg, best_i);
    step.chosen = step.candidates[best_i];
    trace.steps.push_back(std::move(step));
}

}  // namespace

std::pair<SearchConfig, SearchTrace> forward_select(const SearchSpace& space,
                                                    const Evaluator& evaluate) {
    if (space.window_sizes.empty() || space.strides.empty() || space.batch_sizes.empty() ||
        space.learning_rates.empty())
        throw ConfigError("forward_select: every axis needs at least one candidate");

    // later axes start at their first declared value until their own sweep
    SearchConfig cfg;
    cfg.window_size = space.window_sizes.front();
    cfg.stride = resolve_stride(space.strides.front(), cfg.window_size);
    cfg.batch_size = space.batch_sizes.front();
    cfg.lr = space.learning_rates.front();

    SearchTrace trace;

    sweep_axis({"window_size", space.window_sizes.size(),
                [&](SearchConfig& c, std::size_t i) {
                    c.window_size = space.window_sizes[i];
                    // stride tracks the provisional window until its own sweep
                    c.stride = resolve_stride(space.strides.front(), c.window_size);
                },
                [&](std::size_t i) { return std::to_string(space.window_sizes[i]); }},
               cfg, evaluate, trace);

    sweep_axis({"stride", space.strides.size(),
                [&](SearchConfig& c, std::size_t i) {
                    c.stride = resolve_stride(space.strides[i], c.window_size);
                },
                [&](std::size_t i) {
                    return to_string(space.strides[i]) + "=" +
                           std::to_string(resolve_stride(space.strides[i], cfg.window_size));
                }},
               cfg, evaluate, trace);

    sweep_axis({"batch_size", space.batch_sizes.size(),
                [&](SearchConfig& c, std::size_t i) { c.batch_size = space.batch_sizes[i]; },
                [&](std::size_t i) { return std::to_string(space.batch_sizes[i]); }},
               cfg, evaluate, trace);

    sweep_axis({"learning_rate", space.learning_rates.size(),
                [&](SearchConfig& c, std::size_t i) { c.lr = space.learning_rates[i]; },
                [&](std::size_t i) { return csv::format_double(space.learning_rates[i]); }},
               cfg, evaluate, trace);

    return {cfg, trace};
}

std::string trace_to_csv(const SearchTrace& trace) {
    std::ostringstream out;
    out << "step,axis,candidate,mean_val_auc,failed,chosen\n";
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        const auto& step = trace.steps[s];
        for (std::size_t i = 0; i < step.candidates.size(); ++i) {
            out << (s + 1) << ',' << step.axis << ',' << step.candidates[i] << ',';
            if (!step.failed[i]) out << csv::format_double(step.scores[i]);
            out << ',' << (step.failed[i] ? 1 : 0) << ','
                << (step.candidates[i] == step.chosen ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

std::string config_to_csv(const SearchConfig& cfg) {
    std::ostringstream out;
    out << "window_size,stride,learning_rate,batch_size\n";
    out << cfg.window_size << ',' << cfg.stride << ',' << csv::format_double(cfg.lr) << ','
        << cfg.batch_size << '\n';
    return out.str();
}

}  // namespace kds::search
