#pragma once

#include <string>
#include <variant>
#include <vector>

namespace kds {

enum class TaskKind { fixed_text, free_text };

const char* to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

/// One key press/release pair. Timestamps are seconds from an arbitrary
/// session origin.
struct KeyEvent {
    std::string key_id;
    double press_ts = 0.0;
    double release_ts = 0.0;
};

/// All keystrokes of one recording session, sorted by press_ts.
struct SessionEvents {
    std::string subject_id;
    std::string session_id;
    TaskKind task_kind = TaskKind::free_text;
    std::vector<KeyEvent> events;
};

/// The four aligned temporal channels of one session. Step i describes the
/// digraph (event i, event i+1); all arrays share one length.
struct SignalSequence {
    std::string subject_id;
    std::string session_id;
    std::vector<double> ht;  // hold time of the digraph's second key
    std::vector<double> ft;  // release -> next press (negative under rollover)
    std::vector<double> pp;  // press -> press
    std::vector<double> rr;  // release -> release

    std::size_t length() const { return ht.size(); }
};

using SessionData = std::variant<SessionEvents, SignalSequence>;

struct Subject {
    std::string subject_id;
    int label = 0;  // PD = 1, HC = 0
    std::vector<SessionData> sessions;
};

struct Cohort {
    TaskKind task_kind = TaskKind::free_text;
    std::vector<Subject> subjects;

    std::size_t session_count() const;
    int label_count(int label) const;
};

}  // namespace kds
