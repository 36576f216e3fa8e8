#include "kds/windowing.hpp"

#include <algorithm>
#include <cmath>

#include "kds/errors.hpp"

namespace kds::windowing {

std::size_t window_count(std::size_t length, const WindowingConfig& cfg) {
    if (cfg.window_size == 0 || cfg.stride == 0)
        throw ConfigError("window size and stride must be >= 1");
    if (length < cfg.window_size) return 0;
    return (length - cfg.window_size) / cfg.stride + 1;
}

std::vector<Window> slide(const SignalSequence& seq, const WindowingConfig& cfg) {
    std::size_t n = window_count(seq.length(), cfg);
    std::vector<Window> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Window w;
        w.subject_id = seq.subject_id;
        w.session_id = seq.session_id;
        w.start = k * cfg.stride;
        w.window_size = cfg.window_size;
        w.values.resize(cfg.window_size * 4);
        for (std::size_t t = 0; t < cfg.window_size; ++t) {
            std::size_t i = w.start + t;
            w.values[t * 4 + 0] = seq.ht[i];
            w.values[t * 4 + 1] = seq.ft[i];
            w.values[t * 4 + 2] = seq.pp[i];
            w.values[t * 4 + 3] = seq.rr[i];
        }
        out.push_back(std::move(w));
    }
    return out;
}

ChannelStats fit_stats(const std::vector<Window>& train_windows, const std::string& provenance) {
    if (train_windows.empty()) throw DataError("fit_stats: no training windows");
    // accumulate over sorted cell values so the result is bitwise independent of
    // window-list order (the reduction may be fed by parallel producers)
    std::vector<double> cells[4];
    for (const Window& w : train_windows)
        for (std::size_t t = 0; t < w.window_size; ++t)
            for (std::size_t c = 0; c < 4; ++c) cells[c].push_back(w.values[t * 4 + c]);
    ChannelStats stats;
    stats.provenance = provenance;
    static const char* names[4] = {"ht", "ft", "pp", "rr"};
    for (std::size_t c = 0; c < 4; ++c) {
        std::sort(cells[c].begin(), cells[c].end());
        double n = static_cast<double>(cells[c].size());
        double sum = 0.0;
        for (double x : cells[c]) sum += x;
        double mean = sum / n;
        double ss = 0.0;
        for (double x : cells[c]) ss += (x - mean) * (x - mean);
        double var = ss / n;
        double sd = std::sqrt(var);
        if (sd < 1e-12)
            throw DataError(std::string("fit_stats: degenerate channel ") + names[c] +
                            " (zero variance)");
        stats.mean[c] = mean;
        stats.stddev[c] = sd;
    }
    return stats;
}

Window standardize(const Window& w, const ChannelStats& stats) {
    Window out = w;
    for (std::size_t t = 0; t < w.window_size; ++t)
        for (std::size_t c = 0; c < 4; ++c)
            out.values[t * 4 + c] = (w.values[t * 4 + c] - stats.mean[c]) / stats.stddev[c];
    return out;
}

}  // namespace kds::windowing
