#include "kds/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace kds::losses {

using tensor::NodePtr;
using tensor::TensorNode;

double softplus(double x) {
    // max(x,0) + log1p(exp(-|x|)) never overflows
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_inputs(const NodePtr& logits, const std::vector<double>& labels) {
    std::size_t b = logits->shape.empty() ? logits->numel() : logits->shape[0];
    if (logits->numel() != b)
        throw std::invalid_argument("loss: logits must be [B] or [B,1]");
    if (labels.size() != b) throw std::invalid_argument("loss: labels/logits size mismatch");
    for (double y : labels)
        if (y != 0.0 && y != 1.0) throw std::invalid_argument("loss: labels must be 0 or 1");
}

}  // namespace

NodePtr bce_with_logits(const NodePtr& logits, std::vector<double> labels) {
    check_inputs(logits, labels);
    auto out = tensor::make_node({1}, {logits});
    std::size_t b = labels.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double s = 2.0 * labels[i] - 1.0;
        sum += softplus(-s * logits->value[i]);
    }
    out->value[0] = sum / static_cast<double>(b);
    if (out->requires_grad) {
        TensorNode* pz = logits.get();
        out->backward_fn = [pz, ys = std::move(labels)](TensorNode& o) {
            pz->ensure_grad();
            double g = o.grad[0] / static_cast<double>(ys.size());
            for (std::size_t i = 0; i < ys.size(); ++i)
                pz->grad[i] += g * (sigmoid(pz->value[i]) - ys[i]);
        };
    }
    return out;
}

NodePtr focal_loss(const NodePtr& logits, std::vector<double> labels, double gamma,
                   double alpha) {
    check_inputs(logits, labels);
    if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("focal_loss: alpha must lie in (0,1)");
    auto out = tensor::make_node({1}, {logits});
    std::size_t b = labels.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double s = 2.0 * labels[i] - 1.0;
        double u = s * logits->value[i];          // logit of the true class
        double q = sigmoid(-u);                    // 1 - p_t
        double at = labels[i] == 1.0 ? alpha : 1.0 - alpha;
        sum += at * std::pow(q, gamma) * softplus(-u);
    }
    out->value[0] = sum / static_cast<double>(b);
    if (out->requires_grad) {
        TensorNode* pz = logits.get();
        out->backward_fn = [pz, ys = std::move(labels), gamma, alpha](TensorNode& o) {
            pz->ensure_grad();
            double g = o.grad[0] / static_cast<double>(ys.size());
            for (std::size_t i = 0; i < ys.size(); ++i) {
                double s = 2.0 * ys[i] - 1.0;
                double u = s * pz->value[i];
                double pt = sigmoid(u);
                double q = 1.0 - pt;
                double at = ys[i] == 1.0 ? alpha : 1.0 - alpha;
                double ce = softplus(-u);
                // d/du [q^g * ce] = -q^g (g * pt * ce + q)
                pz->grad[i] += -g * s * at * std::pow(q, gamma) * (gamma * pt * ce + q);
            }
        };
    }
    return out;
}

}  // namespace kds::losses
