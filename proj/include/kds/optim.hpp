#pragma once

#include <cstdint>
#include <vector>

#include "kds/nn.hpp"

namespace kds::optim {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;  // aligned with ParameterSet order
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

// one bias-corrected update of a single tensor; t is the 1-based step count
void adam_step(std::vector<double>& value, const std::vector<double>& grad,
               std::vector<double>& m, std::vector<double>& v, std::uint64_t t,
               const AdamConfig& cfg);

class Adam {
  public:
    Adam(nn::ParameterSet& params, AdamConfig cfg);

    void step();  // consumes grads on trainable params; frozen params untouched
    void zero_grad();
    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamConfig& config() const { return cfg_; }
    AdamState& state() { return state_; }
    const AdamState& state() const { return state_; }

  private:
    nn::ParameterSet* params_;
    AdamConfig cfg_;
    AdamState state_;
};

}  // namespace kds::optim
