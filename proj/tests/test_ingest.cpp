#include <doctest.h>

#include <sstream>
#include <variant>

#include "kds/csv.hpp"
#include "kds/errors.hpp"
#include "kds/ingest.hpp"
#include "kds/rng.hpp"

using namespace kds;

namespace {

ingest::LabelMap labels_of(const std::string& csv) {
    std::istringstream in(csv);
    return ingest::parse_labels(in);
}

Cohort events_of(const std::string& csv, const ingest::LabelMap& labels,
                 ingest::ValidationReport* rep = nullptr) {
    std::istringstream in(csv);
    return ingest::parse_event_log(in, TaskKind::fixed_text, labels, rep);
}

}  // namespace

TEST_CASE("minimal well-formed input: 1 subject, 1 session, 2 events") {
    auto labels = labels_of("subject_id,label\ns1,1\n");
    auto c = events_of(
        "subject_id,session_id,key_id,press_ts,release_ts\n"
        "s1,a,k,0.0,0.1\n"
        "s1,a,k,0.3,0.45\n",
        labels);
    REQUIRE(c.subjects.size() == 1);
    REQUIRE(c.subjects[0].sessions.size() == 1);
    const auto& ev = std::get<SessionEvents>(c.subjects[0].sessions[0]);
    CHECK(ev.events.size() == 2);
    CHECK(ev.events[0].press_ts == 0.0);
    CHECK(ev.events[1].release_ts == 0.45);
}

TEST_CASE("release < press rejects the row, keeps the session") {
    auto labels = labels_of("subject_id,label\ns1,0\n");
    ingest::ValidationReport rep;
    auto c = events_of(
        "subject_id,session_id,key_id,press_ts,release_ts\n"
        "s1,a,k,0.0,0.1\n"
        "s1,a,k,0.2,0.15\n"
        "s1,a,k,0.4,0.5\n",
        labels, &rep);
    const auto& ev = std::get<SessionEvents>(c.subjects[0].sessions[0]);
    CHECK(ev.events.size() == 2);
    CHECK(rep.reason_count(ingest::Reason::negative_hold) == 1);
    CHECK(rep.rows_rejected == 1);
    CHECK(rep.rows_accepted + rep.rows_rejected == rep.rows_total);
}

TEST_CASE("structural faults name the line") {
    auto labels = labels_of("subject_id,label\ns1,1\n");
    std::string bad_count =
        "subject_id,session_id,key_id,press_ts,release_ts\n"
        "s1,a,k,0.0\n";
    CHECK_THROWS_WITH_AS(events_of(bad_count, labels), doctest::Contains("line 2"), DataError);
    std::string bad_ts =
        "subject_id,session_id,key_id,press_ts,release_ts\n"
        "s1,a,k,zero,0.1\n";
    CHECK_THROWS_AS(events_of(bad_ts, labels), DataError);
    CHECK_THROWS_AS(events_of("wrong,header\n", labels), DataError);
}

TEST_CASE("db3-shaped cohort: 103 subjects, 57 PD / 46 HC") {
    std::string lab = "subject_id,label\n";
    std::string ev = "subject_id,session_id,key_id,press_ts,release_ts\n";
    for (int i = 0; i < 103; ++i) {
        std::string sid = "p" + std::to_string(i);
        lab += sid + "," + (i < 57 ? "1" : "0") + "\n";
        ev += sid + ",s,k,0.0,0.1\n" + sid + ",s,k,0.2,0.3\n";
    }
    auto c = events_of(ev, labels_of(lab));
    CHECK(c.subjects.size() == 103);
    CHECK(c.label_count(1) == 57);  // PD
    CHECK(c.label_count(0) == 46);  // HC
}

TEST_CASE("subjects keep first-appearance order") {
    auto labels = labels_of("subject_id,label\nzz,1\naa,0\n");
    auto c = events_of(
        "subject_id,session_id,key_id,press_ts,release_ts\n"
        "zz,a,k,0.0,0.1\nzz,a,k,0.2,0.3\n"
        "aa,a,k,0.0,0.1\naa,a,k,0.2,0.3\n",
        labels);
    REQUIRE(c.subjects.size() == 2);
    CHECK(c.subjects[0].subject_id == "zz");
    CHECK(c.subjects[1].subject_id == "aa");
}

TEST_CASE("missing label rejects the subject's rows with a reason") {
    auto labels = labels_of("subject_id,label\nknown,1\n");
    ingest::ValidationReport rep;
    auto c = events_of(
        "subject_id,session_id,key_id,press_ts,release_ts\n"
        "known,a,k,0.0,0.1\nknown,a,k,0.2,0.3\n"
        "ghost,a,k,0.0,0.1\n",
        labels, &rep);
    CHECK(c.subjects.size() == 1);
    CHECK(rep.reason_count(ingest::Reason::missing_label) == 1);
}

TEST_CASE("signal log reconstructs rr when absent") {
    auto labels = labels_of("subject_id,label\ns1,1\n");
    std::istringstream in(
        "subject_id,session_id,step,ht,ft,pp,rr\n"
        "s1,a,0,0.1,0.2,0.3,\n");
    auto c = ingest::parse_signal_log(in, labels);
    const auto& seq = std::get<SignalSequence>(c.subjects[0].sessions[0]);
    REQUIRE(seq.length() == 1);
    CHECK(seq.rr[0] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("ragged channels reject the session") {
    auto labels = labels_of("subject_id,label\ns1,1\ns2,0\n");
    // an absent ht cell leaves that channel one short -> ragged session
    std::istringstream in(
        "subject_id,session_id,step,ht,ft,pp,rr\n"
        "s1,a,0,0.1,0.2,0.3,0.3\n"
        "s1,a,1,,0.2,0.3,0.3\n"
        "s2,a,0,0.1,0.2,0.3,0.3\n");
    ingest::ValidationReport rep;
    auto c = ingest::parse_signal_log(in, labels, &rep);
    CHECK(c.subjects.size() == 1);
    CHECK(c.subjects[0].subject_id == "s2");
    CHECK(rep.reason_count(ingest::Reason::ragged_channels) == 1);
}

TEST_CASE("230-subject signal file: 100 PD / 130 HC") {
    std::string lab = "subject_id,label\n";
    std::string sig = "subject_id,session_id,step,ht,ft,pp,rr\n";
    for (int i = 0; i < 230; ++i) {
        std::string sid = "p" + std::to_string(i);
        lab += sid + "," + (i < 100 ? "1" : "0") + "\n";
        sig += sid + ",s,0,0.1,0.2,0.3,0.3\n";
    }
    std::istringstream in(sig);
    auto c = ingest::parse_signal_log(in, labels_of(lab));
    CHECK(c.subjects.size() == 230);
    CHECK(c.label_count(1) == 100);
    CHECK(c.label_count(0) == 130);
}

TEST_CASE("validate_cohort flags duplicates and unsorted events") {
    auto labels = labels_of("subject_id,label\ns1,1\n");
    auto c = events_of(
        "subject_id,session_id,key_id,press_ts,release_ts\n"
        "s1,a,k,0.0,0.1\ns1,a,k,0.2,0.3\n",
        labels);
    CHECK(ingest::validate_cohort(c).sessions_rejected == 0);

    Cohort dup = c;
    dup.subjects.push_back(dup.subjects[0]);
    CHECK(ingest::validate_cohort(dup).reason_count(ingest::Reason::duplicate_id) == 1);

    Cohort uns = c;
    auto& ev = std::get<SessionEvents>(uns.subjects[0].sessions[0]);
    std::swap(ev.events[0], ev.events[1]);
    CHECK(ingest::validate_cohort(uns).reason_count(ingest::Reason::unsorted_events) == 1);
}

TEST_CASE("event round-trip: serialize then parse is field-identical") {
    Rng rng(2024);
    std::string lab = "subject_id,label\n";
    std::string ev = "subject_id,session_id,key_id,press_ts,release_ts\n";
    for (int s = 0; s < 5; ++s) {
        std::string sid = "subj" + std::to_string(s);
        lab += sid + "," + std::to_string(s % 2) + "\n";
        double t = 0;
        for (int i = 0; i < 20; ++i) {
            t += rng.uniform(0.05, 0.4);
            double hold = rng.uniform(0.01, 0.3);
            ev += sid + ",sess,k" + std::to_string(i) + "," + csv::format_double(t) + "," +
                  csv::format_double(t + hold) + "\n";
        }
    }
    auto labels = labels_of(lab);
    auto c1 = events_of(ev, labels);
    auto text = ingest::serialize_events(c1);
    std::istringstream in2(text);
    auto c2 = ingest::parse_event_log(in2, TaskKind::fixed_text, labels);
    CHECK(ingest::cohort_equal(c1, c2));
}

TEST_CASE("signal round-trip preserves exact doubles") {
    auto labels = labels_of("subject_id,label\ns1,1\n");
    std::istringstream in(
        "subject_id,session_id,step,ht,ft,pp,rr\n"
        "s1,a,0,0.1,0.2,0.30000000000000004,0.3\n"
        "s1,a,1,-0.05,0.125,0.1,0.075\n");
    auto c1 = ingest::parse_signal_log(in, labels);
    std::istringstream in2(ingest::serialize_signals(c1));
    auto c2 = ingest::parse_signal_log(in2, labels);
    CHECK(ingest::cohort_equal(c1, c2));
    const auto& seq = std::get<SignalSequence>(c2.subjects[0].sessions[0]);
    CHECK(seq.pp[0] == 0.30000000000000004);
}

TEST_CASE("labels parser rejects non-binary labels") {
    CHECK_THROWS_AS(labels_of("subject_id,label\ns1,2\n"), DataError);
    CHECK_THROWS_AS(labels_of("subject_id,label\ns1,\n"), DataError);
    CHECK_THROWS_AS(labels_of("bad,header\n"), DataError);
}
