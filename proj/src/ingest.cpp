#include "kds/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kds/csv.hpp"
#include "kds/errors.hpp"

namespace kds {

const char* to_string(TaskKind k) {
    return k == TaskKind::fixed_text ? "fixed_text" : "free_text";
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "fixed_text") return TaskKind::fixed_text;
    if (s == "free_text") return TaskKind::free_text;
    throw ConfigError("unknown task kind: " + s);
}

std::size_t Cohort::session_count() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.sessions.size();
    return n;
}

int Cohort::label_count(int label) const {
    int n = 0;
    for (const auto& s : subjects)
        if (s.label == label) ++n;
    return n;
}

}  // namespace kds

namespace kds::ingest {

const char* to_string(Reason r) {
    switch (r) {
        case Reason::malformed_row: return "malformed row";
        case Reason::negative_hold: return "negative hold";
        case Reason::empty_session: return "empty";
        case Reason::duplicate_id: return "duplicate id";
        case Reason::unsorted_events: return "unsorted";
        case Reason::ragged_channels: return "ragged channels";
        case Reason::missing_label: return "missing label";
        case Reason::too_short: return "too short";
    }
    return "unknown";
}

std::size_t ValidationReport::reason_count(Reason r) const {
    auto it = reasons.find(r);
    return it == reasons.end() ? 0 : it->second;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    os << "rows " << rows_accepted << "/" << rows_total << " accepted; sessions "
       << sessions_accepted << "/" << sessions_total << " accepted";
    for (const auto& [r, n] : reasons) os << "; " << to_string(r) << ": " << n;
    return os.str();
}

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& what) {
    throw DataError("line " + std::to_string(line) + ": " + what);
}

void expect_header(const std::string& line, const std::vector<std::string>& want,
                   std::size_t line_no) {
    auto fields = csv::split(line);
    if (fields.size() != want.size()) fail(line_no, "expected " + std::to_string(want.size()) + " header columns");
    for (std::size_t i = 0; i < want.size(); ++i)
        if (fields[i] != want[i]) fail(line_no, "missing column '" + want[i] + "'");
}

double parse_ts(const std::string& field, std::size_t line_no, const char* col) {
    auto v = csv::parse_double(field);
    if (!v) fail(line_no, std::string("non-numeric ") + col);
    return *v;
}

}  // namespace

LabelMap parse_labels(std::istream& in) {
    csv::LineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw DataError("empty labels file");
    expect_header(line, {"subject_id", "label"}, reader.line_number());
    LabelMap labels;
    while (reader.next(line)) {
        if (line.empty()) continue;
        auto fields = csv::split(line);
        if (fields.size() != 2) fail(reader.line_number(), "expected 2 fields");
        auto v = csv::parse_int(fields[1]);
        if (!v || (*v != 0 && *v != 1)) fail(reader.line_number(), "label must be 0 or 1");
        if (!labels.emplace(fields[0], static_cast<int>(*v)).second)
            fail(reader.line_number(), "duplicate label for subject " + fields[0]);
    }
    return labels;
}

namespace {

// Shared assembly: rows arrive keyed by (subject, session) and must preserve
// first-appearance order of both.
struct CohortBuilder {
    Cohort cohort;
    std::map<std::string, std::size_t> subject_index;

    Subject& subject(const std::string& id, int label) {
        auto it = subject_index.find(id);
        if (it != subject_index.end()) return cohort.subjects[it->second];
        subject_index.emplace(id, cohort.subjects.size());
        cohort.subjects.push_back(Subject{id, label, {}});
        return cohort.subjects.back();
    }
};

}  // namespace

Cohort parse_event_log(std::istream& in, TaskKind task, const LabelMap& labels,
                       ValidationReport* report) {
    csv::LineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw DataError("empty event file");
    expect_header(line, {"subject_id", "session_id", "key_id", "press_ts", "release_ts"},
                  reader.line_number());

    ValidationReport local;
    ValidationReport& rep = report ? *report : local;

    // (subject, session) -> events, with appearance order tracked per subject.
    struct SessionAcc {
        std::vector<KeyEvent> events;
    };
    std::vector<std::pair<std::string, std::string>> session_order;
    std::map<std::pair<std::string, std::string>, SessionAcc> sessions;
    std::map<std::string, bool> unlabeled_noted;

    while (reader.next(line)) {
        if (line.empty()) continue;
        ++rep.rows_total;
        auto fields = csv::split(line);
        if (fields.size() != 5) fail(reader.line_number(), "expected 5 fields");
        const std::string& subj = fields[0];
        const std::string& sess = fields[1];
        double press = parse_ts(fields[3], reader.line_number(), "press_ts");
        double release = parse_ts(fields[4], reader.line_number(), "release_ts");

        if (!labels.count(subj)) {
            // Counted once per rejected row; the session itself never forms.
            ++rep.rows_rejected;
            rep.count(Reason::missing_label);
            unlabeled_noted[subj] = true;
            continue;
        }
        if (!std::isfinite(press) || !std::isfinite(release) || press < 0.0) {
            ++rep.rows_rejected;
            rep.count(Reason::malformed_row);
            continue;
        }
        if (release < press) {
            ++rep.rows_rejected;
            rep.count(Reason::negative_hold);
            continue;
        }
        auto key = std::make_pair(subj, sess);
        auto it = sessions.find(key);
        if (it == sessions.end()) {
            session_order.push_back(key);
            it = sessions.emplace(key, SessionAcc{}).first;
        }
        it->second.events.push_back(KeyEvent{fields[2], press, release});
        ++rep.rows_accepted;
    }

    CohortBuilder builder;
    builder.cohort.task_kind = task;
    for (const auto& key : session_order) {
        ++rep.sessions_total;
        auto& acc = sessions[key];
        if (acc.events.empty()) {
            ++rep.sessions_rejected;
            rep.count(Reason::empty_session);
            continue;
        }
        std::stable_sort(acc.events.begin(), acc.events.end(),
                         [](const KeyEvent& a, const KeyEvent& b) { return a.press_ts < b.press_ts; });
        SessionEvents se;
        se.subject_id = key.first;
        se.session_id = key.second;
        se.task_kind = task;
        se.events = std::move(acc.events);
        builder.subject(key.first, labels.at(key.first)).sessions.emplace_back(std::move(se));
        ++rep.sessions_accepted;
    }
    return std::move(builder.cohort);
}

Cohort parse_signal_log(std::istream& in, const LabelMap& labels, ValidationReport* report,
                        TaskKind task) {
    csv::LineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw DataError("empty signal file");
    expect_header(line, {"subject_id", "session_id", "step", "ht", "ft", "pp", "rr"},
                  reader.line_number());

    ValidationReport local;
    ValidationReport& rep = report ? *report : local;

    struct Row {
        long long step;
        std::string ht, ft, pp, rr;
    };
    std::vector<std::pair<std::string, std::string>> session_order;
    std::map<std::pair<std::string, std::string>, std::vector<Row>> sessions;

    while (reader.next(line)) {
        if (line.empty()) continue;
        ++rep.rows_total;
        auto fields = csv::split(line);
        if (fields.size() != 7) fail(reader.line_number(), "expected 7 fields");
        auto step = csv::parse_int(fields[2]);
        if (!step) fail(reader.line_number(), "non-numeric step");
        // Channel cells are validated numerically below; structural numeric
        // errors (non-empty, non-numeric) are schema failures here.
        for (int c = 3; c < 7; ++c) {
            if (fields[c].empty()) continue;  // empty cell = absent value
            if (!csv::parse_double(fields[c]))
                fail(reader.line_number(), "non-numeric channel value");
        }
        if (!labels.count(fields[0])) {
            ++rep.rows_rejected;
            rep.count(Reason::missing_label);
            continue;
        }
        auto key = std::make_pair(fields[0], fields[1]);
        auto it = sessions.find(key);
        if (it == sessions.end()) {
            session_order.push_back(key);
            it = sessions.emplace(key, std::vector<Row>{}).first;
        }
        it->second.push_back(Row{*step, fields[3], fields[4], fields[5], fields[6]});
        ++rep.rows_accepted;
    }

    CohortBuilder builder;
    builder.cohort.task_kind = task;
    for (const auto& key : session_order) {
        ++rep.sessions_total;
        auto& rows = sessions[key];
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Row& a, const Row& b) { return a.step < b.step; });
        SignalSequence seq;
        seq.subject_id = key.first;
        seq.session_id = key.second;
        bool rr_pending = false;
        for (const auto& r : rows) {
            if (auto v = csv::parse_double(r.ht)) seq.ht.push_back(*v);
            if (auto v = csv::parse_double(r.ft)) seq.ft.push_back(*v);
            if (auto v = csv::parse_double(r.pp)) seq.pp.push_back(*v);
            if (auto v = csv::parse_double(r.rr)) {
                seq.rr.push_back(*v);
            } else {
                rr_pending = true;
                seq.rr.push_back(std::numeric_limits<double>::quiet_NaN());
            }
        }
        if (seq.ht.size() != seq.ft.size() || seq.ft.size() != seq.pp.size() ||
            seq.rr.size() != seq.ht.size()) {
            ++rep.sessions_rejected;
            rep.count(Reason::ragged_channels);
            continue;
        }
        if (seq.ht.empty()) {
            ++rep.sessions_rejected;
            rep.count(Reason::empty_session);
            continue;
        }
        if (rr_pending) {
            for (std::size_t i = 0; i < seq.rr.size(); ++i)
                if (std::isnan(seq.rr[i])) seq.rr[i] = seq.ht[i] + seq.ft[i];
        }
        builder.subject(key.first, labels.at(key.first)).sessions.emplace_back(std::move(seq));
        ++rep.sessions_accepted;
    }
    return std::move(builder.cohort);
}

ValidationReport validate_cohort(const Cohort& c) {
    ValidationReport rep;
    std::map<std::string, int> seen;
    for (const auto& subj : c.subjects) {
        if (++seen[subj.subject_id] > 1) rep.count(Reason::duplicate_id);
        if (subj.label != 0 && subj.label != 1) rep.count(Reason::malformed_row);
        for (const auto& sess : subj.sessions) {
            ++rep.sessions_total;
            bool ok = true;
            if (const auto* ev = std::get_if<SessionEvents>(&sess)) {
                if (ev->events.empty()) {
                    rep.count(Reason::empty_session);
                    ok = false;
                }
                for (std::size_t i = 0; i + 1 < ev->events.size(); ++i) {
                    if (ev->events[i + 1].press_ts < ev->events[i].press_ts) {
                        rep.count(Reason::unsorted_events);
                        ok = false;
                        break;
                    }
                }
                for (const auto& e : ev->events) {
                    if (e.release_ts < e.press_ts) {
                        rep.count(Reason::negative_hold);
                        ok = false;
                        break;
                    }
                    if (!std::isfinite(e.press_ts) || e.press_ts < 0.0) {
                        rep.count(Reason::malformed_row);
                        ok = false;
                        break;
                    }
                }
            } else {
                const auto& sq = std::get<SignalSequence>(sess);
                if (sq.ht.size() != sq.ft.size() || sq.ft.size() != sq.pp.size() ||
                    sq.pp.size() != sq.rr.size()) {
                    rep.count(Reason::ragged_channels);
                    ok = false;
                } else if (sq.ht.empty()) {
                    rep.count(Reason::empty_session);
                    ok = false;
                }
            }
            if (ok)
                ++rep.sessions_accepted;
            else
                ++rep.sessions_rejected;
        }
    }
    return rep;
}

std::string serialize_events(const Cohort& c) {
    std::ostringstream os;
    os << "subject_id,session_id,key_id,press_ts,release_ts\n";
    for (const auto& subj : c.subjects) {
        for (const auto& sess : subj.sessions) {
            const auto* ev = std::get_if<SessionEvents>(&sess);
            if (!ev) continue;
            for (const auto& e : ev->events) {
                os << subj.subject_id << ',' << ev->session_id << ',' << e.key_id << ','
                   << csv::format_double(e.press_ts) << ',' << csv::format_double(e.release_ts)
                   << '\n';
            }
        }
    }
    return os.str();
}

std::string serialize_signals(const Cohort& c) {
    std::ostringstream os;
    os << "subject_id,session_id,step,ht,ft,pp,rr\n";
    for (const auto& subj : c.subjects) {
        for (const auto& sess : subj.sessions) {
            const auto* sq = std::get_if<SignalSequence>(&sess);
            if (!sq) continue;
            for (std::size_t i = 0; i < sq->length(); ++i) {
                os << subj.subject_id << ',' << sq->session_id << ',' << i << ','
                   << csv::format_double(sq->ht[i]) << ',' << csv::format_double(sq->ft[i]) << ','
                   << csv::format_double(sq->pp[i]) << ',' << csv::format_double(sq->rr[i])
                   << '\n';
            }
        }
    }
    return os.str();
}

std::string serialize_labels(const Cohort& c) {
    std::ostringstream os;
    os << "subject_id,label\n";
    for (const auto& subj : c.subjects) os << subj.subject_id << ',' << subj.label << '\n';
    return os.str();
}

namespace {

bool events_equal(const SessionEvents& a, const SessionEvents& b) {
    if (a.subject_id != b.subject_id || a.session_id != b.session_id ||
        a.events.size() != b.events.size())
        return false;
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        const auto& x = a.events[i];
        const auto& y = b.events[i];
        if (x.key_id != y.key_id || x.press_ts != y.press_ts || x.release_ts != y.release_ts)
            return false;
    }
    return true;
}

bool signals_equal(const SignalSequence& a, const SignalSequence& b) {
    return a.subject_id == b.subject_id && a.session_id == b.session_id && a.ht == b.ht &&
           a.ft == b.ft && a.pp == b.pp && a.rr == b.rr;
}

}  // namespace

bool cohort_equal(const Cohort& a, const Cohort& b) {
    if (a.subjects.size() != b.subjects.size()) return false;
    for (std::size_t i = 0; i < a.subjects.size(); ++i) {
        const auto& x = a.subjects[i];
        const auto& y = b.subjects[i];
        if (x.subject_id != y.subject_id || x.label != y.label ||
            x.sessions.size() != y.sessions.size())
            return false;
        for (std::size_t j = 0; j < x.sessions.size(); ++j) {
            if (x.sessions[j].index() != y.sessions[j].index()) return false;
            if (const auto* ev = std::get_if<SessionEvents>(&x.sessions[j])) {
                if (!events_equal(*ev, std::get<SessionEvents>(y.sessions[j]))) return false;
            } else {
                if (!signals_equal(std::get<SignalSequence>(x.sessions[j]),
                                   std::get<SignalSequence>(y.sessions[j])))
                    return false;
            }
        }
    }
    return true;
}

}  // namespace kds::ingest
