#include "kds/signals.hpp"

#include <limits>
#include <numeric>

#include "kds/errors.hpp"

namespace kds::signals {

SignalSequence derive_signals(const SessionEvents& s) {
    if (s.events.size() < 2)
        throw DataError("session " + s.session_id + ": need at least 2 events to derive signals");
    SignalSequence seq;
    seq.subject_id = s.subject_id;
    seq.session_id = s.session_id;
    std::size_t n = s.events.size() - 1;
    seq.ht.reserve(n);
    seq.ft.reserve(n);
    seq.pp.reserve(n);
    seq.rr.reserve(n);
    for (std::size_t i = 1; i < s.events.size(); ++i) {
        const KeyEvent& prev = s.events[i - 1];
        const KeyEvent& cur = s.events[i];
        seq.ht.push_back(cur.release_ts - cur.press_ts);
        seq.ft.push_back(cur.press_ts - prev.release_ts);
        seq.pp.push_back(cur.press_ts - prev.press_ts);
        seq.rr.push_back(cur.release_ts - prev.release_ts);
    }
    return seq;
}

double typing_rate(const SessionEvents& s) {
    if (s.events.size() < 2) throw DataError("typing rate undefined for fewer than 2 events");
    double span = s.events.back().press_ts - s.events.front().press_ts;
    if (span <= 0.0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(s.events.size()) / (span / 60.0);
}

double typing_rate(const SignalSequence& seq) {
    if (seq.length() == 0) throw DataError("typing rate undefined for empty sequence");
    double span = std::accumulate(seq.pp.begin(), seq.pp.end(), 0.0);
    if (span <= 0.0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(seq.length() + 1) / (span / 60.0);
}

namespace {

std::optional<SignalSequence> clean_fixed_impl(const SignalSequence& seq, double rate,
                                               const CleaningConfig& cfg) {
    if (rate < cfg.min_typing_rate) return std::nullopt;
    SignalSequence out;
    out.subject_id = seq.subject_id;
    out.session_id = seq.session_id;
    for (std::size_t i = 0; i < seq.length(); ++i) {
        if (seq.ft[i] > cfg.ft_outlier_cap) continue;
        out.ht.push_back(seq.ht[i]);
        out.ft.push_back(seq.ft[i]);
        out.pp.push_back(seq.pp[i]);
        out.rr.push_back(seq.rr[i]);
    }
    if (out.length() == 0) return std::nullopt;
    return out;
}

}  // namespace

std::optional<SignalSequence> clean_fixed_text(const SignalSequence& seq,
                                               const CleaningConfig& cfg) {
    if (seq.length() == 0) return std::nullopt;
    return clean_fixed_impl(seq, typing_rate(seq), cfg);
}

std::optional<SignalSequence> clean_fixed_text(const SignalSequence& seq,
                                               const SessionEvents& src,
                                               const CleaningConfig& cfg) {
    if (seq.length() == 0) return std::nullopt;
    return clean_fixed_impl(seq, typing_rate(src), cfg);
}

SignalSequence clean_free_text(const SignalSequence& seq) { return seq; }

std::vector<SessionEvents> segment_sessions(const SessionEvents& s, double gap) {
    std::vector<SessionEvents> segments;
    std::vector<KeyEvent> current;
    auto flush = [&]() {
        if (current.empty()) return;
        SessionEvents seg;
        seg.subject_id = s.subject_id;
        seg.session_id = s.session_id + "#" + std::to_string(segments.size());
        seg.task_kind = s.task_kind;
        seg.events = std::move(current);
        current.clear();
        segments.push_back(std::move(seg));
    };
    for (std::size_t i = 0; i < s.events.size(); ++i) {
        if (i > 0 && s.events[i].press_ts - s.events[i - 1].press_ts > gap) flush();
        current.push_back(s.events[i]);
    }
    flush();
    return segments;
}

}  // namespace kds::signals
