#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kds/nn.hpp"
#include "kds/optim.hpp"
#include "kds/windowing.hpp"

namespace kds::checkpoint {

// Self-describing training snapshot; doubles travel as base64 little-endian
// so a write/read round-trip is bitwise exact.
struct Checkpoint {
    nn::ModelSpec spec;
    std::vector<std::pair<std::string, std::vector<double>>> params;  // model order
    std::vector<bool> trainable;                                      // aligned with params
    windowing::ChannelStats stats;
    optim::AdamState adam;
    std::size_t epoch = 0;
    windowing::WindowingConfig wcfg;
    double train_lr = 0.0;
};

Checkpoint snapshot(const nn::Model& model, const optim::Adam& opt,
                    const windowing::ChannelStats& stats, const windowing::WindowingConfig& wcfg,
                    std::size_t epoch, double train_lr);

// rebuilds the model with stored values and trainable flags
nn::Model restore_model(const Checkpoint& ckpt);

// copies stored optimizer state into a freshly constructed Adam
void restore_adam(optim::Adam& opt, const Checkpoint& ckpt);

std::string to_json(const Checkpoint& ckpt);
Checkpoint from_json(const std::string& text);

void save_file(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_file(const std::string& path);

// fnv-1a over every parameter tensor, for no-training assertions
std::uint64_t param_hash(const nn::Model& model);

}  // namespace kds::checkpoint
