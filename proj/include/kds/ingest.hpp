#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "kds/data.hpp"

namespace kds::ingest {

enum class Reason {
    malformed_row,     // non-finite or negative press timestamp
    negative_hold,     // release_ts < press_ts
    empty_session,     // session lost all rows
    duplicate_id,      // subject listed twice
    unsorted_events,   // events out of press order (audit only; parsing sorts)
    ragged_channels,   // signal channels of unequal length
    missing_label,     // subject absent from the labels file
    too_short,         // fewer than two events, no digraph exists
};

const char* to_string(Reason r);

/// Audit result. Row counters refer to data rows (header excluded); session
/// counters refer to whole sessions offered vs. kept.
struct ValidationReport {
    std::size_t rows_total = 0;
    std::size_t rows_accepted = 0;
    std::size_t rows_rejected = 0;
    std::size_t sessions_total = 0;
    std::size_t sessions_accepted = 0;
    std::size_t sessions_rejected = 0;
    std::map<Reason, std::size_t> reasons;

    void count(Reason r, std::size_t n = 1) { reasons[r] += n; }
    std::size_t reason_count(Reason r) const;
    std::string summary() const;
};

using LabelMap = std::map<std::string, int>;

/// Labels CSV: header `subject_id,label`, label in {0,1}.
LabelMap parse_labels(std::istream& in);

/// Event CSV: header `subject_id,session_id,key_id,press_ts,release_ts`.
/// Rows are grouped by (subject, session) in first-appearance order and each
/// session's events are sorted by press_ts. Structural faults (bad header,
/// wrong field count, non-numeric timestamp) throw DataError naming the line;
/// semantic faults reject the row and are counted in the report.
Cohort parse_event_log(std::istream& in, TaskKind task, const LabelMap& labels,
                       ValidationReport* report = nullptr);

/// Signal CSV: header `subject_id,session_id,step,ht,ft,pp,rr`, `rr` may be
/// empty (recomputed as ht + ft). Sessions whose ht/ft/pp channels end up
/// with unequal lengths are rejected as ragged.
Cohort parse_signal_log(std::istream& in, const LabelMap& labels,
                        ValidationReport* report = nullptr,
                        TaskKind task = TaskKind::free_text);

/// Pure audit of every cohort invariant; the cohort is not modified.
ValidationReport validate_cohort(const Cohort& c);

/// Serializers for the canonical schemas. Doubles are written in shortest
/// round-trip form so parse(serialize(c)) == c field-for-field.
std::string serialize_events(const Cohort& c);
std::string serialize_signals(const Cohort& c);
std::string serialize_labels(const Cohort& c);

bool cohort_equal(const Cohort& a, const Cohort& b);

}  // namespace kds::ingest
