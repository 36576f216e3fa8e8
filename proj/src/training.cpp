#include "kds/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "kds/errors.hpp"
#include "kds/losses.hpp"
#include "kds/optim.hpp"
#include "kds/rng.hpp"
#include "kds/tensor.hpp"

namespace kds::training {

std::string to_string(Loss l) { return l == Loss::bce ? "bce" : "focal"; }

Loss loss_from_string(const std::string& s) {
    if (s == "bce") return Loss::bce;
    if (s == "focal") return Loss::focal;
    throw ConfigError("unknown loss: " + s);
}

std::string to_string(CheckpointStrategy s) {
    return s == CheckpointStrategy::last_epoch ? "last_epoch" : "best_validation";
}

CheckpointStrategy checkpoint_strategy_from_string(const std::string& s) {
    if (s == "last_epoch") return CheckpointStrategy::last_epoch;
    if (s == "best_validation") return CheckpointStrategy::best_validation;
    throw ConfigError("unknown checkpoint strategy: " + s);
}

bool early_stop_check(const std::vector<double>& val_aucs,
                      std::optional<std::size_t> patience) {
    if (!patience || val_aucs.empty()) return true;
    std::size_t best = 0;
    for (std::size_t i = 1; i < val_aucs.size(); ++i)
        if (val_aucs[i] > val_aucs[best]) best = i;  // strict: ties keep the earliest
    return (val_aucs.size() - 1 - best) < *patience;
}

double resolve_focal_alpha(const LabeledWindows& train_set) {
    std::set<std::string> pd, hc;
    for (std::size_t i = 0; i < train_set.windows.size(); ++i)
        (train_set.labels[i] == 1.0 ? pd : hc).insert(train_set.windows[i].subject_id);
    std::size_t total = pd.size() + hc.size();
    if (total == 0) throw DataError("train: empty training subset");
    double minority = static_cast<double>(std::min(pd.size(), hc.size())) /
                      static_cast<double>(total);
    return std::clamp(minority, 0.1, 0.9);
}

namespace {

// drops grad tracking on the params for cheap inference graphs
struct NoGradGuard {
    std::vector<std::pair<tensor::TensorNode*, bool>> saved;
    explicit NoGradGuard(const nn::ParameterSet& ps) {
        for (const auto& p : ps.items()) {
            saved.emplace_back(p.node.get(), p.node->requires_grad);
            p.node->requires_grad = false;
        }
    }
    ~NoGradGuard() {
        for (auto& [node, flag] : saved) node->requires_grad = flag;
    }
};

std::vector<double> gather_batch(const std::vector<windowing::Window>& windows,
                                 const std::vector<std::size_t>& idx, std::size_t from,
                                 std::size_t count, std::size_t w) {
    std::vector<double> buf(count * w * 4);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& win = windows[idx[from + i]];
        std::copy(win.values.begin(), win.values.end(), buf.begin() + i * w * 4);
    }
    return buf;
}

tensor::NodePtr make_loss(Loss kind, const tensor::NodePtr& logits,
                          std::vector<double> labels, double gamma, double alpha) {
    if (kind == Loss::bce) return losses::bce_with_logits(logits, std::move(labels));
    return losses::focal_loss(logits, std::move(labels), gamma, alpha);
}

}  // namespace

std::vector<evaluation::WindowProb> predict_windows(
    const nn::Model& model, const std::vector<windowing::Window>& windows,
    std::size_t batch_size) {
    std::vector<evaluation::WindowProb> out;
    if (windows.empty()) return out;
    std::size_t w = windows.front().window_size;
    std::vector<std::size_t> idx(windows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    NoGradGuard guard(model.params());
    for (std::size_t start = 0; start < windows.size(); start += batch_size) {
        std::size_t count = std::min(batch_size, windows.size() - start);
        auto buf = gather_batch(windows, idx, start, count, w);
        auto logits = model.forward(buf, count, w);
        for (std::size_t i = 0; i < count; ++i) {
            const auto& win = windows[start + i];
            double p = 1.0 / (1.0 + std::exp(-logits->value[i]));
            out.push_back({win.subject_id, win.session_id, p});
        }
    }
    return out;
}

TrainResult train(nn::Model& model, const LabeledWindows& train_set,
                  const std::vector<windowing::Window>& val_windows,
                  const evaluation::LabelMap& val_labels, const TrainConfig& cfg,
                  const windowing::ChannelStats& stats,
                  const windowing::WindowingConfig& wcfg) {
    if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(cfg.lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (train_set.windows.empty()) throw DataError("train: empty training split");
    if (val_windows.empty()) throw DataError("train: empty validation split");
    if (train_set.labels.size() != train_set.windows.size())
        throw DataError("train: window/label misalignment");

    std::size_t w = train_set.windows.front().window_size;
    for (const auto& win : train_set.windows)
        if (win.window_size != w) throw DataError("train: ragged window sizes");
    for (const auto& win : val_windows)
        if (win.window_size != w) throw DataError("train: val window size mismatch");
    if (wcfg.window_size != w)
        throw DataError("train: windows do not match the windowing config");

    // leakage audit: training windows must never carry validation subjects
    for (const auto& win : train_set.windows)
        if (val_labels.count(win.subject_id))
            throw std::logic_error("train: validation subject leaked into training batches: " +
                                   win.subject_id);
    for (const auto& win : val_windows)
        if (!val_labels.count(win.subject_id))
            throw std::logic_error("train: validation window for unknown subject: " +
                                   win.subject_id);

    double alpha = cfg.focal_alpha ? *cfg.focal_alpha : resolve_focal_alpha(train_set);

    optim::AdamConfig ocfg;
    ocfg.lr = cfg.lr;
    optim::Adam opt(model.params(), ocfg);

    TrainResult result;
    result.history.best_val_auc = -1.0;
    checkpoint::Checkpoint best_snap;
    std::vector<double> val_aucs;

    std::size_t n = train_set.windows.size();
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed, {tag("shuffle"), epoch}));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            std::size_t count = std::min(cfg.batch_size, n - start);
            auto buf = gather_batch(train_set.windows, order, start, count, w);
            std::vector<double> labels(count);
            for (std::size_t i = 0; i < count; ++i)
                labels[i] = train_set.labels[order[start + i]];
            opt.zero_grad();
            auto logits = model.forward(buf, count, w);
            auto loss = make_loss(cfg.loss, logits, std::move(labels), cfg.focal_gamma, alpha);
            tensor::backward(loss);
            opt.step();
            loss_sum += loss->value[0] * static_cast<double>(count);
        }

        // epoch-end validation, aggregated to patient level
        double val_loss_sum = 0.0;
        std::vector<evaluation::WindowProb> probs;
        {
            NoGradGuard guard(model.params());
            for (std::size_t start = 0; start < val_windows.size(); start += cfg.batch_size) {
                std::size_t count = std::min(cfg.batch_size, val_windows.size() - start);
                std::vector<std::size_t> idx(count);
                for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
                std::vector<double> buf(count * w * 4);
                std::vector<double> labels(count);
                for (std::size_t i = 0; i < count; ++i) {
                    const auto& win = val_windows[start + i];
                    std::copy(win.values.begin(), win.values.end(), buf.begin() + i * w * 4);
                    labels[i] = static_cast<double>(val_labels.at(win.subject_id));
                }
                auto logits = model.forward(buf, count, w);
                auto loss = make_loss(cfg.loss, logits, labels, cfg.focal_gamma, alpha);
                val_loss_sum += loss->value[0] * static_cast<double>(count);
                for (std::size_t i = 0; i < count; ++i) {
                    const auto& win = val_windows[start + i];
                    double p = 1.0 / (1.0 + std::exp(-logits->value[i]));
                    probs.push_back({win.subject_id, win.session_id, p});
                }
            }
        }
        auto agg = cfg.flat_aggregation ? evaluation::aggregate_patient_flat(probs, val_labels)
                                        : evaluation::aggregate_patient(probs, val_labels);
        double val_auc = evaluation::auc_roc(agg.scores);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.val_auc = val_auc;
        rec.val_loss = val_loss_sum / static_cast<double>(val_windows.size());
        result.history.epochs.push_back(rec);
        val_aucs.push_back(val_auc);

        if (val_auc > result.history.best_val_auc) {
            result.history.best_val_auc = val_auc;
            result.history.best_epoch = epoch;
            if (cfg.checkpoint == CheckpointStrategy::best_validation)
                best_snap = checkpoint::snapshot(model, opt, stats, wcfg, epoch, cfg.lr);
        }

        if (!early_stop_check(val_aucs, cfg.patience)) {
            result.history.early_stopped = true;
            break;
        }
    }

    if (cfg.checkpoint == CheckpointStrategy::best_validation) {
        result.selected = std::move(best_snap);
        result.history.selected_epoch = result.history.best_epoch;
    } else {
        std::size_t last = result.history.epochs.back().epoch;
        result.selected = checkpoint::snapshot(model, opt, stats, wcfg, last, cfg.lr);
        result.history.selected_epoch = last;
    }
    return result;
}

TrainResult fine_tune(const checkpoint::Checkpoint& source, const LabeledWindows& train_set,
                      const std::vector<windowing::Window>& val_windows,
                      const evaluation::LabelMap& val_labels, nn::FreezePolicy policy,
                      TrainConfig cfg, std::optional<double> lr_override,
                      const windowing::ChannelStats& stats,
                      const windowing::WindowingConfig& wcfg) {
    if (wcfg.window_size != source.wcfg.window_size)
        throw DataError("fine_tune: target window size does not match the source checkpoint");
    nn::Model model = checkpoint::restore_model(source);
    model.apply_freeze(policy);
    cfg.lr = lr_override ? *lr_override : source.train_lr / 10.0;
    return train(model, train_set, val_windows, val_labels, cfg, stats, wcfg);
}

}  // namespace kds::training
