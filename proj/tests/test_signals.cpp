#include <doctest.h>

#include <cmath>
#include <limits>

#include "kds/errors.hpp"
#include "kds/rng.hpp"
#include "kds/signals.hpp"

using namespace kds;

namespace {

SessionEvents session(std::vector<std::pair<double, double>> pr) {
    SessionEvents s;
    s.subject_id = "x";
    s.session_id = "s";
    for (auto [p, r] : pr) s.events.push_back({"k", p, r});
    return s;
}

SessionEvents random_session(Rng& rng, int n, bool allow_rollover) {
    SessionEvents s;
    s.subject_id = "x";
    s.session_id = "s";
    double t = 0.0;
    double prev_release = 0.0;
    for (int i = 0; i < n; ++i) {
        double hold = rng.uniform(0.01, 0.5);
        s.events.push_back({"k", t, t + hold});
        prev_release = t + hold;
        double gap = allow_rollover ? rng.uniform(-0.3, 0.6) : rng.uniform(0.01, 0.6);
        t = std::max(t + 0.001, prev_release + gap);
    }
    return s;
}

}  // namespace

TEST_CASE("derive_signals worked example") {
    auto seq = signals::derive_signals(session({{0.0, 0.1}, {0.3, 0.45}}));
    REQUIRE(seq.length() == 1);
    CHECK(seq.ht[0] == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(seq.ft[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(seq.pp[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(seq.rr[0] == doctest::Approx(0.35).epsilon(1e-12));
}

TEST_CASE("rollover keeps negative ft") {
    auto seq = signals::derive_signals(session({{0.0, 0.5}, {0.2, 0.6}}));
    CHECK(seq.ft[0] == doctest::Approx(-0.3).epsilon(1e-12));
}

TEST_CASE("fewer than two events is an error") {
    CHECK_THROWS_AS(signals::derive_signals(session({{0.0, 0.1}})), DataError);
}

TEST_CASE("rr = ht + ft within 1e-9 over 1000 random event streams") {
    Rng rng(314);
    for (int trial = 0; trial < 1000; ++trial) {
        auto s = random_session(rng, 2 + static_cast<int>(rng.uniform_int(30)), true);
        auto seq = signals::derive_signals(s);
        for (std::size_t i = 0; i < seq.length(); ++i)
            REQUIRE(std::abs(seq.rr[i] - (seq.ht[i] + seq.ft[i])) < 1e-9);
    }
}

TEST_CASE("derive_signals is translation invariant") {
    Rng rng(11);
    auto s = random_session(rng, 15, true);
    auto shifted = s;
    for (auto& e : shifted.events) {
        e.press_ts += 1234.5;
        e.release_ts += 1234.5;
    }
    auto a = signals::derive_signals(s);
    auto b = signals::derive_signals(shifted);
    REQUIRE(a.length() == b.length());
    for (std::size_t i = 0; i < a.length(); ++i) {
        CHECK(a.ht[i] == doctest::Approx(b.ht[i]).epsilon(1e-9));
        CHECK(a.ft[i] == doctest::Approx(b.ft[i]).epsilon(1e-9));
        CHECK(a.pp[i] == doctest::Approx(b.pp[i]).epsilon(1e-9));
        CHECK(a.rr[i] == doctest::Approx(b.rr[i]).epsilon(1e-9));
    }
}

TEST_CASE("typing_rate arithmetic") {
    // 40 events, presses spread over exactly 60 s -> 40 cpm
    std::vector<std::pair<double, double>> pr;
    for (int i = 0; i < 40; ++i) {
        double p = 60.0 * i / 39.0;
        pr.push_back({p, p + 0.05});
    }
    CHECK(signals::typing_rate(session(pr)) == doctest::Approx(40.0).epsilon(1e-12));

    pr.clear();
    for (int i = 0; i < 10; ++i) {
        double p = 60.0 * i / 9.0;
        pr.push_back({p, p + 0.05});
    }
    CHECK(signals::typing_rate(session(pr)) == doctest::Approx(10.0).epsilon(1e-12));

    CHECK(std::isinf(signals::typing_rate(session({{1.0, 1.1}, {1.0, 1.2}}))));
    CHECK_THROWS_AS(signals::typing_rate(session({{0.0, 0.1}})), DataError);
}

TEST_CASE("clean_fixed_text drops exactly the ft > 3 s steps") {
    // 4 events at high rate; middle digraph has ft 3.5 s
    auto s = session({{0.0, 0.1}, {0.3, 0.5}, {4.0, 4.1}, {4.5, 4.6}});
    auto seq = signals::derive_signals(s);
    REQUIRE(seq.length() == 3);
    REQUIRE(seq.ft[1] == doctest::Approx(3.5));
    signals::CleaningConfig cfg;
    cfg.min_typing_rate = 0.1;  // rate rule not under test here
    auto cleaned = signals::clean_fixed_text(seq, s, cfg);
    REQUIRE(cleaned.has_value());
    CHECK(cleaned->length() == 2);
    CHECK(cleaned->ft[0] == doctest::Approx(0.2));
    CHECK(cleaned->ft[1] == doctest::Approx(0.4).epsilon(1e-9));
    // all four channels shrink together
    CHECK(cleaned->ht.size() == 2);
    CHECK(cleaned->pp.size() == 2);
    CHECK(cleaned->rr.size() == 2);
}

TEST_CASE("session below 20 cpm is rejected outright") {
    // 10 events spanning ~30 s -> ~20.7 cpm passes; spread over 60 s fails
    std::vector<std::pair<double, double>> slow;
    for (int i = 0; i < 10; ++i) {
        double p = 60.0 * i / 9.0;
        slow.push_back({p, p + 0.05});
    }
    auto s = session(slow);
    auto seq = signals::derive_signals(s);
    signals::CleaningConfig cfg;  // min rate 20
    CHECK_FALSE(signals::clean_fixed_text(seq, s, cfg).has_value());
}

TEST_CASE("clean session passes through unchanged") {
    Rng rng(77);
    auto s = random_session(rng, 40, false);  // dense typing, no 3 s gaps
    auto seq = signals::derive_signals(s);
    signals::CleaningConfig cfg;
    auto cleaned = signals::clean_fixed_text(seq, s, cfg);
    REQUIRE(cleaned.has_value());
    CHECK(cleaned->length() == seq.length());
    for (std::size_t i = 0; i < seq.length(); ++i) CHECK(cleaned->ht[i] == seq.ht[i]);
}

TEST_CASE("clean_fixed_text is idempotent") {
    Rng rng(501);
    signals::CleaningConfig cfg;
    cfg.min_typing_rate = 0.1;
    int applied = 0;
    for (int trial = 0; trial < 200; ++trial) {
        auto s = random_session(rng, 10 + static_cast<int>(rng.uniform_int(40)), false);
        // inject occasional long gaps to create ft outliers
        for (std::size_t i = 1; i < s.events.size(); ++i)
            if (rng.uniform01() < 0.1) {
                double shift = rng.uniform(3.5, 6.0);
                for (std::size_t j = i; j < s.events.size(); ++j) {
                    s.events[j].press_ts += shift;
                    s.events[j].release_ts += shift;
                }
            }
        auto seq = signals::derive_signals(s);
        auto once = signals::clean_fixed_text(seq, cfg);
        if (!once) continue;
        ++applied;
        auto twice = signals::clean_fixed_text(*once, cfg);
        REQUIRE(twice.has_value());
        REQUIRE(twice->length() == once->length());
        for (std::size_t i = 0; i < once->length(); ++i) {
            CHECK(twice->ht[i] == once->ht[i]);
            CHECK(twice->ft[i] == once->ft[i]);
        }
    }
    CHECK(applied > 100);  // the property must actually have been exercised
}

TEST_CASE("clean_free_text is the identity") {
    Rng rng(8);
    auto s = random_session(rng, 25, true);
    auto seq = signals::derive_signals(s);
    seq.ft[3] = 5.0;  // would be an outlier under fixed-text rules
    auto out = signals::clean_free_text(seq);
    REQUIRE(out.length() == seq.length());
    CHECK(out.ft[3] == 5.0);
    for (std::size_t i = 0; i < seq.length(); ++i) CHECK(out.ht[i] == seq.ht[i]);
}

TEST_CASE("segment_sessions splits strictly after >30 s press gaps") {
    // presses at 0, 1, 32, 34 -> gaps [1, 31, 2] -> two segments of 2
    auto s = session({{0.0, 0.1}, {1.0, 1.1}, {32.0, 32.1}, {34.0, 34.1}});
    auto segs = signals::segment_sessions(s, 30.0);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].events.size() == 2);
    CHECK(segs[1].events.size() == 2);
    CHECK(segs[0].session_id == "s#0");
    CHECK(segs[1].session_id == "s#1");
}

TEST_CASE("gap of exactly 30 s does not split") {
    auto s = session({{0.0, 0.1}, {30.0, 30.1}});
    CHECK(signals::segment_sessions(s, 30.0).size() == 1);
    auto s2 = session({{0.0, 0.1}, {30.0001, 30.2}});
    CHECK(signals::segment_sessions(s2, 30.0).size() == 2);
}

TEST_CASE("segmentation conserves events over random streams") {
    Rng rng(909);
    for (int trial = 0; trial < 300; ++trial) {
        SessionEvents s;
        s.subject_id = "x";
        s.session_id = "orig";
        double t = 0;
        int n = 2 + static_cast<int>(rng.uniform_int(60));
        for (int i = 0; i < n; ++i) {
            s.events.push_back({"k", t, t + rng.uniform(0.01, 0.2)});
            t += rng.uniform01() < 0.15 ? rng.uniform(31.0, 120.0) : rng.uniform(0.05, 2.0);
        }
        auto segs = signals::segment_sessions(s, 30.0);
        std::size_t total = 0;
        std::size_t idx = 0;
        for (const auto& seg : segs) {
            total += seg.events.size();
            for (const auto& e : seg.events) {
                REQUIRE(e.press_ts == s.events[idx].press_ts);
                REQUIRE(e.release_ts == s.events[idx].release_ts);
                ++idx;
            }
        }
        REQUIRE(total == s.events.size());
    }
}

TEST_CASE("all gaps under threshold yields a single identical segment") {
    auto s = session({{0.0, 0.1}, {0.5, 0.6}, {1.0, 1.1}});
    auto segs = signals::segment_sessions(s, 30.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].session_id == "s#0");
    CHECK(segs[0].events.size() == 3);
}
