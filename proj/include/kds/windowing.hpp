#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kds/data.hpp"

namespace kds::windowing {

struct WindowingConfig {
    std::size_t window_size = 50;
    std::size_t stride = 25;
};

// values laid out row-major: step t, channel c -> values[t*4 + c], channels (ht, ft, pp, rr)
struct Window {
    std::string subject_id;
    std::string session_id;
    std::size_t start = 0;
    std::size_t window_size = 0;
    std::vector<double> values;

    double at(std::size_t step, std::size_t channel) const { return values[step * 4 + channel]; }
    double& at(std::size_t step, std::size_t channel) { return values[step * 4 + channel]; }
};

struct ChannelStats {
    double mean[4] = {0, 0, 0, 0};
    double stddev[4] = {1, 1, 1, 1};
    // records which split the stats were fitted on, e.g. "fold3/train"; consumers
    // assert on it before touching validation data
    std::string provenance;
};

std::size_t window_count(std::size_t length, const WindowingConfig& cfg);

std::vector<Window> slide(const SignalSequence& seq, const WindowingConfig& cfg);

// population statistics over every cell of every window, per channel
ChannelStats fit_stats(const std::vector<Window>& train_windows, const std::string& provenance);

Window standardize(const Window& w, const ChannelStats& stats);

}  // namespace kds::windowing
