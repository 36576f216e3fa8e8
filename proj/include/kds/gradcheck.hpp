#pragma once

#include <cstdint>

#include "kds/nn.hpp"

namespace kds::gradcheck {

struct GradCheckResult {
    double max_rel_error = 0.0;
    double seconds = 0.0;
    std::size_t checked = 0;  // parameter scalars compared
};

// Compares analytic gradients of a BCE loss on a random batch against central
// finite differences for every trainable parameter scalar.
// rel err = |a - n| / max(|a|, |n|, 1e-8); coordinates whose estimate at
// `epsilon` is noise-limited get one retry at 10x the step. Meant for
// desk-scale specs (hidden <= 8, window <= 12).
GradCheckResult grad_check(const nn::ModelSpec& spec, std::uint64_t seed,
                           std::size_t batch = 2, std::size_t window = 8,
                           double epsilon = 1e-5);

}  // namespace kds::gradcheck
