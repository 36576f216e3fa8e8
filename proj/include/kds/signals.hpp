#pragma once

#include <optional>
#include <vector>

#include "kds/data.hpp"

namespace kds::signals {

struct CleaningConfig {
    double min_typing_rate = 20.0;  // chars per minute
    double ft_outlier_cap = 3.0;    // seconds
    double session_gap = 30.0;      // seconds
    TaskKind task_kind = TaskKind::fixed_text;
};

/// Derive the four aligned channels from raw events. Step i covers the
/// digraph (event i, event i+1); length = events - 1. The first event's hold
/// time is dropped so all channels align without padding. Negative FT
/// (rollover) is retained. Throws DataError on fewer than two events.
SignalSequence derive_signals(const SessionEvents& s);

/// Characters per minute over first-to-last press. Zero duration -> +inf.
/// Throws DataError on fewer than two events.
double typing_rate(const SessionEvents& s);

/// Same rate computed from a derived sequence: chars = length + 1 and the
/// press span equals the sum of PP.
double typing_rate(const SignalSequence& seq);

/// Fixed-text cleaning: sessions below the minimum typing rate are rejected
/// outright; otherwise every step with ft > cap is dropped from all four
/// channels. Returns nullopt when the session is rejected (including empty
/// after cleaning).
std::optional<SignalSequence> clean_fixed_text(const SignalSequence& seq,
                                               const CleaningConfig& cfg);

/// Overload taking the source events; the rate check then uses the raw
/// event span instead of the PP sum (identical up to rounding).
std::optional<SignalSequence> clean_fixed_text(const SignalSequence& seq,
                                               const SessionEvents& src,
                                               const CleaningConfig& cfg);

/// Free-text pipelines apply no cleaning; identity by contract.
SignalSequence clean_free_text(const SignalSequence& seq);

/// Split a session strictly after event i when press(i+1) - press(i) > gap.
/// A gap of exactly `gap` does not split. Segment session ids get a 0-based
/// "#k" suffix; concatenating the segments reproduces the input events.
std::vector<SessionEvents> segment_sessions(const SessionEvents& s, double gap);

}  // namespace kds::signals
