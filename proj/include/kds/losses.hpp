#pragma once

#include <vector>

#include "kds/tensor.hpp"

namespace kds::losses {

// logits: [B] or [B,1]; labels in {0,1}, one per batch item; both losses
// reduce by mean and ship analytic gradients (no graph expansion)
tensor::NodePtr bce_with_logits(const tensor::NodePtr& logits, std::vector<double> labels);

tensor::NodePtr focal_loss(const tensor::NodePtr& logits, std::vector<double> labels,
                           double gamma, double alpha);

// numerically stable log(1 + exp(x))
double softplus(double x);

}  // namespace kds::losses
