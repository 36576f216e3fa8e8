#pragma once

#include <cstdint>
#include <string>

namespace kds::synth {

// Motor signature knobs for one class. Hold and flight times are log-normal
// with AR(1) multiplicative jitter; drift lengthens holds within a session.
struct PhenotypeProfile {
    double ht_mean = 0.10;      // seconds
    double ht_cv = 0.15;        // coefficient of variation
    double ft_mean = 0.18;      // seconds
    double ft_cv = 0.25;
    double jitter_rho = 0.10;   // AR(1) coefficient, [0,1)
    double fatigue_drift = 0.0; // seconds added per 100 keystrokes
};

PhenotypeProfile default_hc_profile();
// slower by 30%, cv x2.5, stronger serial correlation, mild fatigue
PhenotypeProfile default_pd_profile();

struct SynthConfig {
    std::size_t n_pd = 20;
    std::size_t n_hc = 20;
    // prepended to subject ids ("ext_pd_000"); keeps cohorts generated for
    // different protocol stages subject-disjoint
    std::string cohort_tag;
    double sessions_mean = 4.0;
    double sessions_dispersion = 0.0;
    double length_mean = 200.0;  // keystrokes per session
    double length_dispersion = 0.0;
    PhenotypeProfile pd_profile = default_pd_profile();
    PhenotypeProfile hc_profile = default_hc_profile();
    std::uint64_t seed = 0;
};

struct SynthOutput {
    std::string events_csv;  // canonical event-log schema
    std::string labels_csv;  // canonical labels schema
};

// Deterministic per cfg; each subject draws from an independent substream so
// parallel generation (if ever used) matches sequential byte for byte.
SynthOutput generate_cohort(const SynthConfig& cfg);

// Permutes the label column across subjects (multiset preserved); the
// negative-control harness for the no-signal experiment.
std::string shuffle_labels(const std::string& labels_csv, std::uint64_t seed);

}  // namespace kds::synth
