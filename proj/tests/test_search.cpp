#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "kds/errors.hpp"
#include "kds/search.hpp"

using namespace kds;
using search::SearchConfig;
using search::SearchSpace;
using search::StrideValue;

namespace {

StrideValue lit(std::size_t v) { return {StrideValue::Kind::literal, v}; }

SearchSpace short_space() { return search::default_space(search::DatasetClass::fixed_text_short); }

}  // namespace

TEST_CASE("stride candidates resolve against the current window") {
    CHECK(search::resolve_stride(lit(1), 90) == 1);
    CHECK(search::resolve_stride(lit(7), 40) == 7);
    CHECK(search::resolve_stride({StrideValue::Kind::half, 0}, 90) == 45);
    CHECK(search::resolve_stride({StrideValue::Kind::full, 0}, 90) == 90);
    CHECK(search::resolve_stride({StrideValue::Kind::half, 0}, 45) == 22);
    CHECK_THROWS_AS(search::resolve_stride(lit(1), 0), ConfigError);
    CHECK_THROWS_AS(search::resolve_stride(lit(0), 50), ConfigError);
}

TEST_CASE("default spaces carry the published grids") {
    auto long_space = search::default_space(search::DatasetClass::free_text_long);
    CHECK(long_space.window_sizes == std::vector<std::size_t>{90, 100, 110});
    auto short_sp = short_space();
    CHECK(short_sp.window_sizes == std::vector<std::size_t>{40, 50, 60});

    for (const auto& sp : {long_space, short_sp}) {
        REQUIRE(sp.strides.size() == 3);
        CHECK(sp.strides[0].kind == StrideValue::Kind::literal);
        CHECK(sp.strides[0].value == 1);
        CHECK(sp.strides[1].kind == StrideValue::Kind::half);
        CHECK(sp.strides[2].kind == StrideValue::Kind::full);
        CHECK(sp.batch_sizes == std::vector<std::size_t>{8, 16, 32});
        CHECK(sp.learning_rates == std::vector<double>{1e-3, 1e-4, 1e-5});
    }
}

TEST_CASE("dataset class names round-trip") {
    CHECK(search::dataset_class_from_string("free_text_long") ==
          search::DatasetClass::free_text_long);
    CHECK(search::dataset_class_from_string(
              search::to_string(search::DatasetClass::fixed_text_short)) ==
          search::DatasetClass::fixed_text_short);
    CHECK_THROWS_AS(search::dataset_class_from_string("numpad"), ConfigError);
}

TEST_CASE("separable objective: greedy sweep recovers the planted optimum in 12 calls") {
    // optimum at (50, 25, 16, 1e-4); each axis contributes independently
    auto score = [](const SearchConfig& c) {
        return -std::abs(double(c.window_size) - 50.0) / 100.0 -
               std::abs(double(c.stride) - 25.0) / 100.0 -
               std::abs(double(c.batch_size) - 16.0) / 100.0 -
               std::abs(std::log10(c.lr) + 4.0) / 10.0;
    };
    std::vector<SearchConfig> calls;
    auto [best, trace] = search::forward_select(short_space(), [&](const SearchConfig& c) {
        calls.push_back(c);
        return score(c);
    });

    CHECK(best.window_size == 50);
    CHECK(best.stride == 25);
    CHECK(best.batch_size == 16);
    CHECK(best.lr == 1e-4);
    CHECK(trace.evaluator_calls == 12);
    REQUIRE(calls.size() == 12);

    // later axes sit at their first declared value until their own sweep
    std::vector<SearchConfig> expected = {
        {40, 1, 8, 1e-3},  {50, 1, 8, 1e-3},   {60, 1, 8, 1e-3},    // window
        {50, 1, 8, 1e-3},  {50, 25, 8, 1e-3},  {50, 50, 8, 1e-3},   // stride
        {50, 25, 8, 1e-3}, {50, 25, 16, 1e-3}, {50, 25, 32, 1e-3},  // batch
        {50, 25, 16, 1e-3}, {50, 25, 16, 1e-4}, {50, 25, 16, 1e-5},
    };
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CAPTURE(i);
        CHECK(calls[i].window_size == expected[i].window_size);
        CHECK(calls[i].stride == expected[i].stride);
        CHECK(calls[i].batch_size == expected[i].batch_size);
        CHECK(calls[i].lr == expected[i].lr);
    }

    REQUIRE(trace.steps.size() == 4);
    CHECK(trace.steps[0].axis == "window_size");
    CHECK(trace.steps[1].axis == "stride");
    CHECK(trace.steps[2].axis == "batch_size");
    CHECK(trace.steps[3].axis == "learning_rate");
    CHECK(trace.steps[0].chosen == "50");
    CHECK(trace.steps[1].chosen == "half=25");
    CHECK(trace.steps[2].chosen == "16");

    // every recorded choice is the argmax of its own recorded scores
    for (const auto& step : trace.steps) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < step.scores.size(); ++i)
            if (!step.failed[i] && step.scores[i] > step.scores[arg]) arg = i;
        CHECK(step.chosen == step.candidates[arg]);
    }
}

TEST_CASE("axis-wise indicator objective also recovers its optimum") {
    auto [best, trace] = search::forward_select(short_space(), [](const SearchConfig& c) {
        return (c.window_size == 60 ? 1.0 : 0.0) + (c.stride == 60 ? 1.0 : 0.0) +
               (c.batch_size == 32 ? 1.0 : 0.0) + (c.lr == 1e-5 ? 1.0 : 0.0);
    });
    CHECK(best.window_size == 60);
    CHECK(best.stride == 60);  // "full" of the chosen window
    CHECK(best.batch_size == 32);
    CHECK(best.lr == 1e-5);
    CHECK(trace.evaluator_calls == 12);
}

TEST_CASE("ties go to the first candidate in declared order") {
    auto [best, trace] = search::forward_select(short_space(),
                                                [](const SearchConfig&) { return 0.7; });
    CHECK(best.window_size == 40);
    CHECK(best.stride == 1);
    CHECK(best.batch_size == 8);
    CHECK(best.lr == 1e-3);
    for (const auto& step : trace.steps) CHECK(step.chosen == step.candidates.front());
}

TEST_CASE("failing candidates are recorded and excluded from the argmax") {
    // window 40 would win on score but its evaluations all throw
    auto [best, trace] = search::forward_select(short_space(), [](const SearchConfig& c) {
        if (c.window_size == 40) throw DataError("diverged");
        return c.window_size == 50 ? 0.6 : 0.9 - double(c.window_size) / 100.0;
    });
    CHECK(best.window_size == 50);
    const auto& ws = trace.steps[0];
    REQUIRE(ws.failed.size() == 3);
    CHECK(ws.failed[0]);
    CHECK_FALSE(ws.failed[1]);
    CHECK(std::isnan(ws.scores[0]));
    CHECK(trace.evaluator_calls == 12);  // failures still consume their call
}

TEST_CASE("an axis with no surviving candidate aborts the search") {
    CHECK_THROWS_AS(search::forward_select(
                        short_space(),
                        [](const SearchConfig&) -> double { throw DataError("always fails"); }),
                    DataError);
}

TEST_CASE("empty axes are rejected up front") {
    auto space = short_space();
    space.window_sizes.clear();
    int calls = 0;
    CHECK_THROWS_AS(search::forward_select(space,
                                           [&](const SearchConfig&) {
                                               ++calls;
                                               return 0.0;
                                           }),
                    ConfigError);
    CHECK(calls == 0);
}

TEST_CASE("trace and config CSV layouts") {
    auto [best, trace] = search::forward_select(short_space(), [](const SearchConfig& c) {
        if (c.batch_size == 32) throw DataError("oom");
        return double(c.window_size) / 100.0;
    });

    auto csv = search::trace_to_csv(trace);
    std::istringstream in(csv);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "step,axis,candidate,mean_val_auc,failed,chosen");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 12);
    CHECK(rows[0] == "1,window_size,40,0.4,0,0");
    CHECK(rows[2] == "1,window_size,60,0.6,0,1");
    CHECK(rows[11] == "4,learning_rate,1e-05,0.6,0,0");
    // failed candidate: empty score, failed=1, never chosen
    CHECK(rows[8] == "3,batch_size,32,,1,0");

    // stride/lr swept on ties, so both keep their first declared value
    CHECK(search::config_to_csv(best) ==
          "window_size,stride,learning_rate,batch_size\n60,1,0.001,8\n");
}
