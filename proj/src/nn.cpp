#include "kds/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "kds/errors.hpp"
#include "kds/rng.hpp"

namespace kds::nn {

using tensor::NodePtr;

std::string to_string(Arch a) {
    switch (a) {
        case Arch::gru: return "gru";
        case Arch::lstm: return "lstm";
        case Arch::gru_fcn: return "gru_fcn";
        case Arch::lstm_fcn: return "lstm_fcn";
        case Arch::tcn: return "tcn";
        case Arch::transformer: return "transformer";
        case Arch::affine: return "affine";
    }
    return "gru";
}

Arch arch_from_string(const std::string& s) {
    if (s == "gru") return Arch::gru;
    if (s == "lstm") return Arch::lstm;
    if (s == "gru_fcn") return Arch::gru_fcn;
    if (s == "lstm_fcn") return Arch::lstm_fcn;
    if (s == "tcn") return Arch::tcn;
    if (s == "transformer") return Arch::transformer;
    if (s == "affine") return Arch::affine;
    throw ConfigError("unknown architecture: " + s);
}

std::string to_string(FreezePolicy p) {
    return p == FreezePolicy::full ? "full" : "head_only";
}

FreezePolicy freeze_policy_from_string(const std::string& s) {
    if (s == "full") return FreezePolicy::full;
    if (s == "head_only") return FreezePolicy::head_only;
    throw ConfigError("unknown freeze policy: " + s);
}

std::size_t ModelSpec::resolved_depth() const {
    if (depth != 0) return depth;
    switch (arch) {
        case Arch::tcn: return 4;
        case Arch::transformer: return 2;
        default: return 1;
    }
}

NodePtr ParameterSet::add(const std::string& name, std::vector<std::size_t> shape,
                          std::vector<double> values) {
    if (find(name)) throw std::logic_error("duplicate parameter name: " + name);
    Param p;
    p.name = name;
    p.node = tensor::leaf(std::move(shape), std::move(values), true);
    p.trainable = true;
    params_.push_back(std::move(p));
    return params_.back().node;
}

Param* ParameterSet::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

const Param* ParameterSet::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.node->zero_grad();
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.node->numel();
    return n;
}

std::vector<double> sinusoidal_encoding(std::size_t w, std::size_t c) {
    std::vector<double> pe(w * c, 0.0);
    for (std::size_t t = 0; t < w; ++t) {
        for (std::size_t i = 0; 2 * i < c; ++i) {
            double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                                 static_cast<double>(c));
            double angle = static_cast<double>(t) * freq;
            pe[t * c + 2 * i] = std::sin(angle);
            if (2 * i + 1 < c) pe[t * c + 2 * i + 1] = std::cos(angle);
        }
    }
    return pe;
}

namespace {

struct Builder {
    ParameterSet& ps;
    Rng rng;

    std::vector<double> uniform_fill(std::size_t n, double bound) {
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(-bound, bound);
        return v;
    }
    void linear(const std::string& name, std::size_t out, std::size_t in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        ps.add(name + ".weight", {out, in}, uniform_fill(out * in, bound));
        ps.add(name + ".bias", {out}, uniform_fill(out, bound));
    }
    void conv(const std::string& name, std::size_t co, std::size_t ci, std::size_t k) {
        double bound = 1.0 / std::sqrt(static_cast<double>(ci * k));
        ps.add(name + ".weight", {co, ci * k}, uniform_fill(co * ci * k, bound));
        ps.add(name + ".bias", {co}, uniform_fill(co, bound));
    }
    void ln(const std::string& name, std::size_t c) {
        ps.add(name + ".gain", {c}, std::vector<double>(c, 1.0));
        ps.add(name + ".bias", {c}, std::vector<double>(c, 0.0));
    }
    void rnn(const std::string& prefix, std::size_t gates, std::size_t h, std::size_t c) {
        double bound = 1.0 / std::sqrt(static_cast<double>(h));
        ps.add(prefix + ".weight_ih", {gates * h, c}, uniform_fill(gates * h * c, bound));
        ps.add(prefix + ".weight_hh", {gates * h, h}, uniform_fill(gates * h * h, bound));
        ps.add(prefix + ".bias_ih", {gates * h}, uniform_fill(gates * h, bound));
        ps.add(prefix + ".bias_hh", {gates * h}, uniform_fill(gates * h, bound));
    }
    void fcn(std::size_t h, std::size_t c) {
        conv("fcn.conv1", h, c, 8);
        ln("fcn.ln1", h);
        conv("fcn.conv2", 2 * h, h, 5);
        ln("fcn.ln2", 2 * h);
        conv("fcn.conv3", h, 2 * h, 3);
        ln("fcn.ln3", h);
    }
};

}  // namespace

Model::Model(const ModelSpec& spec) : spec_(spec) {
    if (spec_.hidden < 1 || spec_.input_channels < 1)
        throw ConfigError("model: hidden and input_channels must be >= 1");
    if (spec_.arch == Arch::transformer) {
        if (spec_.heads < 1 || spec_.hidden % spec_.heads != 0)
            throw ConfigError("model: hidden must divide evenly across heads");
    }
    bool recurrent = spec_.arch == Arch::gru || spec_.arch == Arch::lstm ||
                     spec_.arch == Arch::gru_fcn || spec_.arch == Arch::lstm_fcn;
    if (recurrent && spec_.resolved_depth() != 1)
        throw ConfigError("model: recurrent architectures support depth 1 only");

    Builder b{params_, Rng(derive_seed(spec_.seed, {tag("init")}))};
    std::size_t h = spec_.hidden, c = spec_.input_channels;
    std::size_t head_in = h;
    switch (spec_.arch) {
        case Arch::gru: b.rnn("gru", 3, h, c); break;
        case Arch::lstm: b.rnn("lstm", 4, h, c); break;
        case Arch::gru_fcn:
            b.rnn("gru", 3, h, c);
            b.fcn(h, c);
            head_in = 2 * h;
            break;
        case Arch::lstm_fcn:
            b.rnn("lstm", 4, h, c);
            b.fcn(h, c);
            head_in = 2 * h;
            break;
        case Arch::tcn:
            for (std::size_t i = 0; i < spec_.resolved_depth(); ++i) {
                std::string p = "tcn.block" + std::to_string(i);
                std::size_t in = i == 0 ? c : h;
                b.conv(p + ".conv1", h, in, 3);
                b.ln(p + ".ln1", h);
                b.conv(p + ".conv2", h, h, 3);
                b.ln(p + ".ln2", h);
                if (in != h) b.linear(p + ".down", h, in);
            }
            break;
        case Arch::transformer: {
            b.linear("embed", h, c);
            std::size_t ff = spec_.resolved_ff();
            for (std::size_t l = 0; l < spec_.resolved_depth(); ++l) {
                std::string p = "encoder.layer" + std::to_string(l);
                b.linear(p + ".attn.wq", h, h);
                b.linear(p + ".attn.wk", h, h);
                b.linear(p + ".attn.wv", h, h);
                b.linear(p + ".attn.wo", h, h);
                b.ln(p + ".ln1", h);
                b.linear(p + ".ff.w1", ff, h);
                b.linear(p + ".ff.w2", h, ff);
                b.ln(p + ".ln2", h);
            }
            break;
        }
        case Arch::affine: head_in = c; break;
    }
    b.linear("head", 1, head_in);
}

namespace {

NodePtr get(const ParameterSet& ps, const std::string& name) {
    const Param* p = ps.find(name);
    if (!p) throw std::logic_error("missing parameter: " + name);
    return p->node;
}

NodePtr rnn_last_state(const ParameterSet& ps, const NodePtr& x, const std::string& prefix,
                       bool is_lstm, std::size_t bs, std::size_t w, std::size_t h) {
    NodePtr xp_all = tensor::linear(x, get(ps, prefix + ".weight_ih"),
                                    get(ps, prefix + ".bias_ih"));
    NodePtr w_hh = get(ps, prefix + ".weight_hh");
    NodePtr b_hh = get(ps, prefix + ".bias_hh");
    if (is_lstm) {
        NodePtr hc = tensor::zeros({bs, 2 * h});
        for (std::size_t t = 0; t < w; ++t)
            hc = tensor::lstm_cell(tensor::time_step(xp_all, t), hc, w_hh, b_hh);
        return tensor::slice_last(hc, 0, h);
    }
    NodePtr hstate = tensor::zeros({bs, h});
    for (std::size_t t = 0; t < w; ++t)
        hstate = tensor::gru_cell(tensor::time_step(xp_all, t), hstate, w_hh, b_hh);
    return hstate;
}

NodePtr conv_block(const ParameterSet& ps, const NodePtr& x, const std::string& conv,
                   const std::string& norm, std::size_t k, std::size_t dilation,
                   tensor::PadMode mode) {
    NodePtr y = tensor::conv1d(x, get(ps, conv + ".weight"), get(ps, conv + ".bias"), k,
                               dilation, mode);
    y = tensor::layer_norm(y, get(ps, norm + ".gain"), get(ps, norm + ".bias"));
    return tensor::relu(y);
}

// circular same-padding keeps GAP length-independent on periodic inputs
NodePtr fcn_branch(const ParameterSet& ps, const NodePtr& x, NodePtr* pre_pool) {
    NodePtr y = conv_block(ps, x, "fcn.conv1", "fcn.ln1", 8, 1, tensor::PadMode::circular);
    y = conv_block(ps, y, "fcn.conv2", "fcn.ln2", 5, 1, tensor::PadMode::circular);
    y = conv_block(ps, y, "fcn.conv3", "fcn.ln3", 3, 1, tensor::PadMode::circular);
    if (pre_pool) *pre_pool = y;
    return tensor::mean_time(y);
}

}  // namespace

NodePtr Model::forward(const std::vector<double>& batch, std::size_t bs, std::size_t w,
                       NodePtr* pre_pool) const {
    std::size_t c = spec_.input_channels;
    if (batch.size() != bs * w * c)
        throw std::invalid_argument("forward: batch buffer does not match B*W*C");
    if (bs < 1 || w < 1) throw std::invalid_argument("forward: empty batch");
    NodePtr x = tensor::leaf({bs, w, c}, batch, false);
    std::size_t h = spec_.hidden;
    NodePtr features;
    switch (spec_.arch) {
        case Arch::gru:
        case Arch::lstm: {
            bool is_lstm = spec_.arch == Arch::lstm;
            features = rnn_last_state(params_, x, is_lstm ? "lstm" : "gru", is_lstm, bs, w, h);
            if (pre_pool) *pre_pool = features;
            break;
        }
        case Arch::gru_fcn:
        case Arch::lstm_fcn: {
            bool is_lstm = spec_.arch == Arch::lstm_fcn;
            NodePtr last = rnn_last_state(params_, x, is_lstm ? "lstm" : "gru", is_lstm, bs, w, h);
            NodePtr gap = fcn_branch(params_, x, pre_pool);
            features = tensor::concat_last(last, gap);
            break;
        }
        case Arch::tcn: {
            NodePtr y = x;
            std::size_t blocks = spec_.resolved_depth();
            std::size_t dilation = 1;
            for (std::size_t i = 0; i < blocks; ++i) {
                std::string p = "tcn.block" + std::to_string(i);
                NodePtr y1 = conv_block(params_, y, p + ".conv1", p + ".ln1", 3, dilation,
                                        tensor::PadMode::causal);
                NodePtr y2 = conv_block(params_, y1, p + ".conv2", p + ".ln2", 3, dilation,
                                        tensor::PadMode::causal);
                NodePtr res = y;
                if (params_.find(p + ".down.weight"))
                    res = tensor::linear(y, get(params_, p + ".down.weight"),
                                         get(params_, p + ".down.bias"));
                y = tensor::relu(tensor::add(y2, res));
                dilation *= 2;
            }
            if (pre_pool) *pre_pool = y;
            features = tensor::mean_time(y);
            break;
        }
        case Arch::transformer: {
            NodePtr e = tensor::linear(x, get(params_, "embed.weight"),
                                       get(params_, "embed.bias"));
            if (spec_.positional_encoding) {
                NodePtr pe = tensor::leaf({w, h}, sinusoidal_encoding(w, h), false);
                e = tensor::add_time_bias(e, pe);
            }
            std::size_t heads = spec_.heads;
            std::size_t dh = h / heads;
            double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
            for (std::size_t l = 0; l < spec_.resolved_depth(); ++l) {
                std::string p = "encoder.layer" + std::to_string(l);
                NodePtr q = tensor::linear(e, get(params_, p + ".attn.wq.weight"),
                                           get(params_, p + ".attn.wq.bias"));
                NodePtr k = tensor::linear(e, get(params_, p + ".attn.wk.weight"),
                                           get(params_, p + ".attn.wk.bias"));
                NodePtr v = tensor::linear(e, get(params_, p + ".attn.wv.weight"),
                                           get(params_, p + ".attn.wv.bias"));
                NodePtr ctx;
                for (std::size_t hd = 0; hd < heads; ++hd) {
                    NodePtr qh = tensor::slice_last(q, hd * dh, dh);
                    NodePtr kh = tensor::slice_last(k, hd * dh, dh);
                    NodePtr vh = tensor::slice_last(v, hd * dh, dh);
                    NodePtr attn = tensor::softmax_last(
                        tensor::scale(tensor::bmm_nt(qh, kh), att_scale));
                    NodePtr ctx_h = tensor::bmm(attn, vh);
                    ctx = ctx ? tensor::concat_last(ctx, ctx_h) : ctx_h;
                }
                NodePtr attn_out = tensor::linear(ctx, get(params_, p + ".attn.wo.weight"),
                                                  get(params_, p + ".attn.wo.bias"));
                e = tensor::layer_norm(tensor::add(e, attn_out),
                                       get(params_, p + ".ln1.gain"),
                                       get(params_, p + ".ln1.bias"));
                NodePtr ff = tensor::relu(tensor::linear(e, get(params_, p + ".ff.w1.weight"),
                                                         get(params_, p + ".ff.w1.bias")));
                ff = tensor::linear(ff, get(params_, p + ".ff.w2.weight"),
                                    get(params_, p + ".ff.w2.bias"));
                e = tensor::layer_norm(tensor::add(e, ff), get(params_, p + ".ln2.gain"),
                                       get(params_, p + ".ln2.bias"));
            }
            if (pre_pool) *pre_pool = e;
            features = tensor::mean_time(e);
            break;
        }
        case Arch::affine: {
            if (pre_pool) *pre_pool = x;
            features = tensor::mean_time(x);
            break;
        }
    }
    return tensor::linear(features, get(params_, "head.weight"), get(params_, "head.bias"));
}

void Model::apply_freeze(FreezePolicy policy) {
    for (auto& p : params_.items()) {
        bool trainable =
            policy == FreezePolicy::full || p.name.rfind("head.", 0) == 0;
        p.trainable = trainable;
        p.node->requires_grad = trainable;
    }
}

std::uint64_t Model::backbone_hash() const {
    std::uint64_t hash = 1469598103934665603ull;
    for (const auto& p : params_.items()) {
        if (p.name.rfind("head.", 0) == 0) continue;
        for (double v : p.node->value) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                hash ^= (bits >> (8 * i)) & 0xffu;
                hash *= 1099511628211ull;
            }
        }
    }
    return hash;
}

}  // namespace kds::nn
