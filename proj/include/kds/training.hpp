#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kds/checkpoint.hpp"
#include "kds/evaluation.hpp"
#include "kds/nn.hpp"
#include "kds/windowing.hpp"

namespace kds::training {

enum class Loss { bce, focal };
enum class CheckpointStrategy { last_epoch, best_validation };

std::string to_string(Loss l);
Loss loss_from_string(const std::string& s);
std::string to_string(CheckpointStrategy s);
CheckpointStrategy checkpoint_strategy_from_string(const std::string& s);

struct TrainConfig {
    std::size_t epochs = 50;
    std::optional<std::size_t> patience = 5;  // nullopt = no early stopping
    Loss loss = Loss::focal;
    double lr = 1e-3;
    std::size_t batch_size = 16;
    CheckpointStrategy checkpoint = CheckpointStrategy::best_validation;
    std::uint64_t seed = 0;
    double focal_gamma = 2.0;
    // unset -> minority subject prevalence of the training subset, clamped to [0.1, 0.9]
    std::optional<double> focal_alpha;
    bool flat_aggregation = false;  // sensitivity switch; hierarchical is the contract
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_auc = 0.0;
    double val_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // earliest epoch attaining the max val AUC
    double best_val_auc = 0.0;
    std::size_t selected_epoch = 0;  // epoch stored in the selected checkpoint
    bool early_stopped = false;
};

// true = keep going; false exactly when the last `patience` epochs show no
// strict improvement over the best prior validation AUC
bool early_stop_check(const std::vector<double>& val_aucs,
                      std::optional<std::size_t> patience);

struct LabeledWindows {
    std::vector<windowing::Window> windows;  // standardized
    std::vector<double> labels;              // aligned, 0/1
};

struct TrainResult {
    TrainHistory history;
    checkpoint::Checkpoint selected;
};

TrainResult train(nn::Model& model, const LabeledWindows& train_set,
                  const std::vector<windowing::Window>& val_windows,
                  const evaluation::LabelMap& val_labels, const TrainConfig& cfg,
                  const windowing::ChannelStats& stats,
                  const windowing::WindowingConfig& wcfg);

// Restores the source checkpoint, applies the freeze policy and continues
// training on the target split. lr_override empty -> source lr / 10. wcfg is
// the target windowing; its window_size must match the checkpoint's.
TrainResult fine_tune(const checkpoint::Checkpoint& source, const LabeledWindows& train_set,
                      const std::vector<windowing::Window>& val_windows,
                      const evaluation::LabelMap& val_labels, nn::FreezePolicy policy,
                      TrainConfig cfg, std::optional<double> lr_override,
                      const windowing::ChannelStats& stats,
                      const windowing::WindowingConfig& wcfg);

// window-level probabilities from a model snapshot (no gradients)
std::vector<evaluation::WindowProb> predict_windows(
    const nn::Model& model, const std::vector<windowing::Window>& windows,
    std::size_t batch_size);

double resolve_focal_alpha(const LabeledWindows& train_set);

}  // namespace kds::training
