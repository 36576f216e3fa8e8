#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace kds::search {

enum class DatasetClass { free_text_long, fixed_text_short };

DatasetClass dataset_class_from_string(const std::string& s);
std::string to_string(DatasetClass dc);

// stride candidates are declared relative to the window axis ("1, half, full")
// and only become concrete once a window size is fixed
struct StrideValue {
    enum class Kind { literal, half, full };
    Kind kind = Kind::literal;
    std::size_t value = 1;  // only read when kind == literal
};

std::size_t resolve_stride(const StrideValue& sv, std::size_t window);
std::string to_string(const StrideValue& sv);

struct SearchSpace {
    std::vector<std::size_t> window_sizes;
    std::vector<StrideValue> strides = {{StrideValue::Kind::literal, 1},
                                        {StrideValue::Kind::half, 0},
                                        {StrideValue::Kind::full, 0}};
    std::vector<std::size_t> batch_sizes = {8, 16, 32};
    std::vector<double> learning_rates = {1e-3, 1e-4, 1e-5};
};

struct SearchConfig {
    std::size_t window_size = 0;
    std::size_t stride = 0;  // resolved, in steps
    std::size_t batch_size = 0;
    double lr = 0.0;
};

struct AxisStep {
    std::string axis;
    std::vector<std::string> candidates;
    std::vector<double> scores;  // NaN where failed
    std::vector<bool> failed;
    std::string chosen;
};

struct SearchTrace {
    std::vector<AxisStep> steps;
    std::size_t evaluator_calls = 0;
};

SearchSpace default_space(DatasetClass dc);

using Evaluator = std::function<double(const SearchConfig&)>;

// Axis-by-axis greedy sweep, WS -> ST -> BS -> LR. Every candidate on an axis
// costs one evaluator call (no caching), so the total is the sum of the axis
// sizes. Unselected later axes sit at their first declared value. Ties pick
// the first candidate in declared order.
std::pair<SearchConfig, SearchTrace> forward_select(const SearchSpace& space,
                                                    const Evaluator& evaluate);

std::string trace_to_csv(const SearchTrace& trace);
std::string config_to_csv(const SearchConfig& cfg);  // WS/ST/LR/BS column order

}  // namespace kds::search
