#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "kds/data.hpp"
#include "kds/errors.hpp"
#include "kds/evaluation.hpp"
#include "kds/ingest.hpp"
#include "kds/signals.hpp"
#include "kds/synth.hpp"

using namespace kds;

namespace {

Cohort parse(const synth::SynthOutput& out, ingest::ValidationReport* report = nullptr) {
    std::istringstream ls(out.labels_csv);
    auto labels = ingest::parse_labels(ls);
    std::istringstream es(out.events_csv);
    return ingest::parse_event_log(es, TaskKind::free_text, labels, report);
}

// all HT samples of one subject, pooled across sessions
std::vector<double> subject_ht(const Subject& subj) {
    std::vector<double> ht;
    for (const auto& sd : subj.sessions) {
        auto seq = signals::derive_signals(std::get<SessionEvents>(sd));
        ht.insert(ht.end(), seq.ht.begin(), seq.ht.end());
    }
    return ht;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double sd_of(const std::vector<double>& v) {
    double m = mean_of(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size()));
}

synth::PhenotypeProfile degenerate(double ht_mean, double ft_mean) {
    synth::PhenotypeProfile p;
    p.ht_mean = ht_mean;
    p.ht_cv = 0.0;
    p.ft_mean = ft_mean;
    p.ft_cv = 0.0;
    p.jitter_rho = 0.0;
    p.fatigue_drift = 0.0;
    return p;
}

}  // namespace

TEST_CASE("same config yields byte-identical cohorts") {
    synth::SynthConfig cfg;
    cfg.n_pd = 3;
    cfg.n_hc = 3;
    cfg.length_mean = 60.0;
    cfg.seed = 41;
    auto a = synth::generate_cohort(cfg);
    auto b = synth::generate_cohort(cfg);
    CHECK(a.events_csv == b.events_csv);
    CHECK(a.labels_csv == b.labels_csv);

    cfg.seed = 42;
    CHECK(synth::generate_cohort(cfg).events_csv != a.events_csv);
}

TEST_CASE("counts, naming, and ingest acceptance for the default cohort shape") {
    synth::SynthConfig cfg;
    cfg.seed = 7;
    auto out = synth::generate_cohort(cfg);
    ingest::ValidationReport report;
    auto cohort = parse(out, &report);

    CHECK(cohort.label_count(1) == 20);
    CHECK(cohort.label_count(0) == 20);
    CHECK(cohort.subjects.size() == 40);
    CHECK(cohort.subjects.front().subject_id == "pd_000");
    CHECK(cohort.subjects.back().subject_id == "hc_019");

    // dispersion 0 pins the shape: 40 subjects x 4 sessions x 200 keystrokes
    CHECK(cohort.session_count() == 160);
    CHECK(report.rows_total == 40 * 4 * 200);
    CHECK(report.rows_accepted == report.rows_total);
    CHECK(report.rows_rejected == 0);
    CHECK(report.sessions_rejected == 0);
}

TEST_CASE("cohort tags keep stage cohorts subject-disjoint") {
    synth::SynthConfig cfg;
    cfg.n_pd = 2;
    cfg.n_hc = 2;
    cfg.length_mean = 20.0;
    cfg.cohort_tag = "ext";
    auto tagged = parse(synth::generate_cohort(cfg));
    CHECK(tagged.subjects.front().subject_id == "ext_pd_000");

    cfg.cohort_tag = "src";
    auto other = parse(synth::generate_cohort(cfg));
    std::set<std::string> seen;
    for (const auto& s : tagged.subjects) seen.insert(s.subject_id);
    for (const auto& s : other.subjects) CHECK(seen.count(s.subject_id) == 0);
}

TEST_CASE("degenerate profile produces constant channels recovered exactly") {
    synth::SynthConfig cfg;
    cfg.n_pd = 1;
    cfg.n_hc = 1;
    cfg.sessions_mean = 2.0;
    cfg.length_mean = 50.0;
    cfg.pd_profile = degenerate(0.2, 0.3);
    cfg.hc_profile = degenerate(0.1, 0.18);
    auto cohort = parse(synth::generate_cohort(cfg));

    for (const auto& subj : cohort.subjects) {
        double ht = subj.label == 1 ? 0.2 : 0.1;
        double ft = subj.label == 1 ? 0.3 : 0.18;
        for (const auto& sd : subj.sessions) {
            auto seq = signals::derive_signals(std::get<SessionEvents>(sd));
            REQUIRE(seq.length() == 49);
            for (std::size_t i = 0; i < seq.length(); ++i) {
                CHECK(std::abs(seq.ht[i] - ht) <= 1e-9);
                CHECK(std::abs(seq.ft[i] - ft) <= 1e-9);
                CHECK(std::abs(seq.pp[i] - (ht + ft)) <= 1e-9);
                CHECK(std::abs(seq.rr[i] - (ht + ft)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("fatigue drift lengthens holds linearly within a session") {
    synth::SynthConfig cfg;
    cfg.n_pd = 1;
    cfg.n_hc = 1;
    cfg.sessions_mean = 1.0;
    cfg.length_mean = 101.0;
    cfg.pd_profile = degenerate(0.1, 0.2);
    cfg.pd_profile.fatigue_drift = 1.0;  // one second per 100 keystrokes
    cfg.hc_profile = degenerate(0.1, 0.2);
    auto cohort = parse(synth::generate_cohort(cfg));

    const auto& pd = cohort.subjects.front();
    REQUIRE(pd.label == 1);
    auto seq = signals::derive_signals(std::get<SessionEvents>(pd.sessions.front()));
    // ht[k] is the hold of event k+1, so the drift term is (k+1)/100
    CHECK(std::abs(seq.ht[0] - 0.11) <= 1e-9);
    CHECK(std::abs(seq.ht[99] - 1.1) <= 1e-9);

    // and the undrifted control stays flat
    auto hc_seq = signals::derive_signals(std::get<SessionEvents>(cohort.subjects[1].sessions[0]));
    CHECK(std::abs(hc_seq.ht[99] - 0.1) <= 1e-9);
}

TEST_CASE("sample moments recover the profile within three standard errors") {
    synth::SynthConfig cfg;
    cfg.n_pd = 1;
    cfg.n_hc = 1;
    cfg.sessions_mean = 1.0;
    cfg.length_mean = 10001.0;
    cfg.seed = 1234;
    auto cohort = parse(synth::generate_cohort(cfg));
    const auto& hc = cohort.subjects.back();
    REQUIRE(hc.label == 0);
    auto ht = subject_ht(hc);
    REQUIRE(ht.size() == 10000);

    double true_sd = 0.10 * 0.15;
    double se_mean = true_sd / std::sqrt(10000.0);
    CHECK(std::abs(mean_of(ht) - 0.10) < 3.0 * se_mean);
    // SE of the sd itself, using the log-normal's excess kurtosis headroom
    CHECK(std::abs(sd_of(ht) - true_sd) < 3.0 * true_sd * std::sqrt(2.1 / 10000.0));
}

TEST_CASE("AR(1) jitter leaves a visible serial correlation") {
    synth::SynthConfig cfg;
    cfg.n_pd = 1;
    cfg.n_hc = 1;
    cfg.sessions_mean = 1.0;
    cfg.length_mean = 5001.0;
    cfg.pd_profile.jitter_rho = 0.9;
    cfg.hc_profile.jitter_rho = 0.0;
    cfg.pd_profile.fatigue_drift = 0.0;
    cfg.seed = 5;
    auto cohort = parse(synth::generate_cohort(cfg));

    auto lag1 = [&](const Subject& s) {
        auto ht = subject_ht(s);
        std::vector<double> z(ht.size());
        for (std::size_t i = 0; i < ht.size(); ++i) z[i] = std::log(ht[i]);
        double m = mean_of(z), num = 0.0, den = 0.0;
        for (std::size_t i = 0; i + 1 < z.size(); ++i) num += (z[i] - m) * (z[i + 1] - m);
        for (double x : z) den += (x - m) * (x - m);
        return num / den;
    };
    CHECK(lag1(cohort.subjects[0]) > 0.5);
    CHECK(std::abs(lag1(cohort.subjects[1])) < 0.1);
}

TEST_CASE("statistic-level oracle: cv contrast alone separates classes at AUC >= 0.95") {
    // equal means, cv 0.5 vs 0.15: the per-subject HT spread carries the signal
    synth::SynthConfig cfg;
    cfg.seed = 20;
    cfg.pd_profile = cfg.hc_profile;
    cfg.pd_profile.ht_cv = 0.5;
    auto cohort = parse(synth::generate_cohort(cfg));

    std::vector<evaluation::PatientScore> scores;
    for (const auto& subj : cohort.subjects)
        scores.push_back({subj.subject_id, sd_of(subject_ht(subj)), subj.label});
    CHECK(evaluation::auc_roc(scores) >= 0.95);
}

TEST_CASE("default profiles separate at the feature level with headroom") {
    synth::SynthConfig cfg;
    cfg.seed = 20;
    auto cohort = parse(synth::generate_cohort(cfg));

    std::vector<evaluation::PatientScore> mean_scores, sd_scores;
    for (const auto& subj : cohort.subjects) {
        auto ht = subject_ht(subj);
        mean_scores.push_back({subj.subject_id, mean_of(ht), subj.label});
        sd_scores.push_back({subj.subject_id, sd_of(ht), subj.label});
    }
    CHECK(evaluation::auc_roc(mean_scores) >= 0.95);
    CHECK(evaluation::auc_roc(sd_scores) >= 0.95);
}

TEST_CASE("shuffle_labels permutes assignments while preserving the roster") {
    synth::SynthConfig cfg;
    cfg.n_pd = 10;
    cfg.n_hc = 10;
    cfg.length_mean = 10.0;
    cfg.sessions_mean = 1.0;
    auto out = synth::generate_cohort(cfg);

    auto shuffled = synth::shuffle_labels(out.labels_csv, 99);
    CHECK(shuffled == synth::shuffle_labels(out.labels_csv, 99));

    std::istringstream orig_in(out.labels_csv), shuf_in(shuffled);
    auto orig = ingest::parse_labels(orig_in);
    auto shuf = ingest::parse_labels(shuf_in);
    REQUIRE(orig.size() == shuf.size());
    int ones = 0, moved = 0;
    for (const auto& [sid, label] : shuf) {
        REQUIRE(orig.count(sid) == 1);
        ones += label;
        moved += label != orig.at(sid);
    }
    CHECK(ones == 10);       // multiset preserved
    CHECK(moved > 0);        // seed 99 happens to move assignments
    CHECK(synth::shuffle_labels(out.labels_csv, 100) != shuffled);
}

TEST_CASE("shuffling a constant label column is the identity") {
    std::string labels = "subject_id,label\na,1\nb,1\nc,1\n";
    CHECK(synth::shuffle_labels(labels, 3) == labels);
}

TEST_CASE("config validation") {
    synth::SynthConfig cfg;
    cfg.n_pd = 0;
    CHECK_THROWS_AS(synth::generate_cohort(cfg), ConfigError);

    cfg = {};
    cfg.length_mean = 1.0;
    CHECK_THROWS_AS(synth::generate_cohort(cfg), ConfigError);

    cfg = {};
    cfg.sessions_mean = 0.5;
    CHECK_THROWS_AS(synth::generate_cohort(cfg), ConfigError);

    cfg = {};
    cfg.pd_profile.jitter_rho = 1.0;
    CHECK_THROWS_AS(synth::generate_cohort(cfg), ConfigError);

    cfg = {};
    cfg.hc_profile.ht_cv = -0.1;
    CHECK_THROWS_AS(synth::generate_cohort(cfg), ConfigError);

    cfg = {};
    cfg.pd_profile.ft_mean = 0.0;
    CHECK_THROWS_AS(synth::generate_cohort(cfg), ConfigError);
}

TEST_CASE("subject substreams are independent of cohort composition") {
    synth::SynthConfig small;
    small.n_pd = 2;
    small.n_hc = 2;
    small.length_mean = 30.0;
    small.sessions_mean = 2.0;
    auto grown = small;
    grown.n_hc = 3;

    auto pd_rows = [](const std::string& csv) {
        std::istringstream in(csv);
        std::string line, out;
        while (std::getline(in, line))
            if (line.rfind("pd_", 0) == 0) out += line + "\n";
        return out;
    };
    CHECK(pd_rows(synth::generate_cohort(small).events_csv) ==
          pd_rows(synth::generate_cohort(grown).events_csv));
}

TEST_CASE("default profiles carry the documented contrast") {
    auto hc = synth::default_hc_profile();
    auto pd = synth::default_pd_profile();
    CHECK(pd.ht_mean == doctest::Approx(hc.ht_mean * 1.3));
    CHECK(pd.ft_mean == doctest::Approx(hc.ft_mean * 1.3));
    CHECK(pd.ht_cv == doctest::Approx(hc.ht_cv * 2.5));
    CHECK(pd.ft_cv == doctest::Approx(hc.ft_cv * 2.5));
    CHECK(pd.jitter_rho > hc.jitter_rho);
    CHECK(pd.fatigue_drift > 0.0);
}
