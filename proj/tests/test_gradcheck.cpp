#include <doctest.h>

#include <cmath>
#include <vector>

#include "kds/gradcheck.hpp"
#include "kds/losses.hpp"
#include "kds/nn.hpp"
#include "kds/rng.hpp"
#include "kds/tensor.hpp"

using namespace kds;
using nn::Arch;

namespace {

nn::ModelSpec desk_spec(Arch a) {
    nn::ModelSpec s;
    s.arch = a;
    s.input_channels = 4;
    s.hidden = 8;
    s.heads = 2;
    s.seed = 2024;
    return s;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences for all six architectures") {
    for (Arch a : {Arch::gru, Arch::lstm, Arch::gru_fcn, Arch::lstm_fcn, Arch::tcn,
                   Arch::transformer}) {
        CAPTURE(nn::to_string(a));
        auto res = gradcheck::grad_check(desk_spec(a), 5);
        CHECK(res.max_rel_error < 1e-4);
        CHECK(res.checked == nn::Model(desk_spec(a)).params().scalar_count());
        CHECK(res.seconds > 0.0);
    }
}

TEST_CASE("affine model is exact up to rounding") {
    auto res = gradcheck::grad_check(desk_spec(Arch::affine), 5);
    CHECK(res.max_rel_error < 1e-9);
    CHECK(res.checked == 5);
}

TEST_CASE("grad_check is deterministic per seed") {
    auto a = gradcheck::grad_check(desk_spec(Arch::gru), 11);
    auto b = gradcheck::grad_check(desk_spec(Arch::gru), 11);
    CHECK(a.max_rel_error == b.max_rel_error);
    CHECK(a.checked == b.checked);
}

TEST_CASE("head-only freeze: numeric check restricted to the head still passes") {
    auto spec = desk_spec(Arch::gru_fcn);
    nn::Model model(spec);
    model.apply_freeze(nn::FreezePolicy::head_only);

    std::size_t batch = 2, window = 8;
    Rng rng(derive_seed(7, {tag("freeze-check")}));
    std::vector<double> x(batch * window * spec.input_channels);
    for (auto& v : x) v = rng.normal();
    std::vector<double> labels{1.0, 0.0};

    auto loss_value = [&]() {
        auto logits = model.forward(x, batch, window);
        return losses::bce_with_logits(logits, labels)->value[0];
    };

    model.params().zero_grad();
    tensor::backward(losses::bce_with_logits(model.forward(x, batch, window), labels));

    const double eps = 1e-5;
    std::size_t checked = 0;
    for (auto& p : model.params().items()) {
        if (!p.trainable) {
            // frozen parameters accumulate no gradient at all
            CHECK(p.node->grad.empty());
            continue;
        }
        p.node->ensure_grad();
        for (std::size_t i = 0; i < p.node->value.size(); ++i) {
            double orig = p.node->value[i];
            p.node->value[i] = orig + eps;
            double up = loss_value();
            p.node->value[i] = orig - eps;
            double down = loss_value();
            p.node->value[i] = orig;
            double numeric = (up - down) / (2.0 * eps);
            double denom = std::max({std::abs(p.node->grad[i]), std::abs(numeric), 1e-8});
            REQUIRE(std::abs(p.node->grad[i] - numeric) / denom < 1e-6);
            ++checked;
        }
    }
    CHECK(checked == 8 * 2 + 1);  // head over concat(gru state, fcn gap) + bias
}
