#include "kds/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace kds::optim {

void adam_step(std::vector<double>& value, const std::vector<double>& grad,
               std::vector<double>& m, std::vector<double>& v, std::uint64_t t,
               const AdamConfig& cfg) {
    if (value.size() != grad.size() || m.size() != value.size() || v.size() != value.size())
        throw std::invalid_argument("adam_step: size mismatch");
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

Adam::Adam(nn::ParameterSet& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
    for (const auto& p : params.items()) {
        state_.m.emplace_back(p.node->numel(), 0.0);
        state_.v.emplace_back(p.node->numel(), 0.0);
    }
}

void Adam::step() {
    ++state_.step;
    auto& items = params_->items();
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& p = items[i];
        if (!p.trainable) continue;
        p.node->ensure_grad();
        adam_step(p.node->value, p.node->grad, state_.m[i], state_.v[i], state_.step, cfg_);
    }
}

void Adam::zero_grad() { params_->zero_grad(); }

}  // namespace kds::optim
