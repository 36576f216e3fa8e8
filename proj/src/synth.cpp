#include "kds/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "kds/csv.hpp"
#include "kds/errors.hpp"
#include "kds/ingest.hpp"
#include "kds/rng.hpp"

namespace kds::synth {

PhenotypeProfile default_hc_profile() { return PhenotypeProfile{}; }

PhenotypeProfile default_pd_profile() {
    PhenotypeProfile p;
    p.ht_mean = 0.10 * 1.3;
    p.ht_cv = 0.15 * 2.5;
    p.ft_mean = 0.18 * 1.3;
    p.ft_cv = 0.25 * 2.5;
    p.jitter_rho = 0.45;
    p.fatigue_drift = 0.01;
    return p;
}

namespace {

void check_profile(const PhenotypeProfile& p, const char* who) {
    if (!(p.ht_mean > 0.0) || !(p.ft_mean > 0.0))
        throw ConfigError(std::string("synth: ") + who + " means must be positive");
    if (p.ht_cv < 0.0 || p.ft_cv < 0.0)
        throw ConfigError(std::string("synth: ") + who + " cv must be >= 0");
    if (p.jitter_rho < 0.0 || p.jitter_rho >= 1.0)
        throw ConfigError(std::string("synth: ") + who + " jitter_rho must lie in [0,1)");
}

// AR(1) standard-normal stream: stationary marginals stay N(0,1)
struct Ar1 {
    double rho;
    double scale;
    double z = 0.0;
    bool primed = false;

    Ar1(double rho_, Rng& rng) : rho(rho_), scale(std::sqrt(1.0 - rho_ * rho_)), rng_(&rng) {}
    double next() {
        if (!primed) {
            z = rng_->normal();
            primed = true;
        } else {
            z = rho * z + scale * rng_->normal();
        }
        return z;
    }

  private:
    Rng* rng_;
};

// mean-preserving log-normal: E[x] = mean for any cv
double lognormal(double mean, double cv, double z) {
    if (cv <= 0.0) return mean;
    double sigma = std::sqrt(std::log1p(cv * cv));
    return mean * std::exp(sigma * z - 0.5 * sigma * sigma);
}

std::string subject_name(const SynthConfig& cfg, bool pd, std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s_%03zu", pd ? "pd" : "hc", i);
    return cfg.cohort_tag.empty() ? std::string(buf) : cfg.cohort_tag + "_" + buf;
}

void generate_subject(const SynthConfig& cfg, bool pd, std::size_t class_index,
                      std::size_t subject_index, std::ostringstream& events) {
    const PhenotypeProfile& prof = pd ? cfg.pd_profile : cfg.hc_profile;
    Rng rng(derive_seed(cfg.seed, {tag("synth"), subject_index}));
    std::string sid = subject_name(cfg, pd, class_index);

    auto count_draw = [&](double mean, double dispersion, long long lo) {
        double raw = mean + dispersion * rng.normal();
        long long n = std::llround(raw);
        return static_cast<std::size_t>(std::max(lo, n));
    };

    std::size_t sessions = count_draw(cfg.sessions_mean, cfg.sessions_dispersion, 1);
    for (std::size_t s = 0; s < sessions; ++s) {
        std::size_t length = count_draw(cfg.length_mean, cfg.length_dispersion, 2);
        Ar1 ht_z(prof.jitter_rho, rng);
        Ar1 ft_z(prof.jitter_rho, rng);
        double press = 0.0;
        std::string session = "s" + std::to_string(s);
        for (std::size_t i = 0; i < length; ++i) {
            double hold = lognormal(prof.ht_mean, prof.ht_cv, ht_z.next()) +
                          prof.fatigue_drift * static_cast<double>(i) / 100.0;
            double release = press + hold;
            events << sid << ',' << session << ",k" << (i % 26) << ','
                   << csv::format_double(press) << ',' << csv::format_double(release) << '\n';
            if (i + 1 < length) {
                double gap = lognormal(prof.ft_mean, prof.ft_cv, ft_z.next());
                press = release + gap;
            }
        }
    }
}

}  // namespace

SynthOutput generate_cohort(const SynthConfig& cfg) {
    if (cfg.n_pd < 1 || cfg.n_hc < 1) throw ConfigError("synth: subject counts must be >= 1");
    if (cfg.length_mean < 2.0) throw ConfigError("synth: session length mean must be >= 2");
    if (cfg.sessions_mean < 1.0) throw ConfigError("synth: sessions mean must be >= 1");
    check_profile(cfg.pd_profile, "pd profile");
    check_profile(cfg.hc_profile, "hc profile");

    std::ostringstream events;
    events << "subject_id,session_id,key_id,press_ts,release_ts\n";
    std::ostringstream labels;
    labels << "subject_id,label\n";

    std::size_t subject_index = 0;
    for (std::size_t i = 0; i < cfg.n_pd; ++i, ++subject_index) {
        generate_subject(cfg, true, i, subject_index, events);
        labels << subject_name(cfg, true, i) << ",1\n";
    }
    for (std::size_t i = 0; i < cfg.n_hc; ++i, ++subject_index) {
        generate_subject(cfg, false, i, subject_index, events);
        labels << subject_name(cfg, false, i) << ",0\n";
    }
    return {events.str(), labels.str()};
}

std::string shuffle_labels(const std::string& labels_csv, std::uint64_t seed) {
    std::istringstream in(labels_csv);
    auto parsed = ingest::parse_labels(in);
    std::vector<std::string> subjects;
    std::vector<int> values;
    for (const auto& [sid, label] : parsed) {
        subjects.push_back(sid);
        values.push_back(label);
    }
    Rng rng(derive_seed(seed, {tag("shuffle_labels")}));
    rng.shuffle(values);
    std::ostringstream out;
    out << "subject_id,label\n";
    for (std::size_t i = 0; i < subjects.size(); ++i)
        out << subjects[i] << ',' << values[i] << '\n';
    return out.str();
}

}  // namespace kds::synth
