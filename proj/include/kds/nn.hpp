#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kds/tensor.hpp"

namespace kds::nn {

enum class Arch { gru, lstm, gru_fcn, lstm_fcn, tcn, transformer, affine };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

struct ModelSpec {
    Arch arch = Arch::gru_fcn;
    std::size_t input_channels = 4;
    std::size_t hidden = 32;
    std::size_t depth = 0;  // 0 -> arch default (tcn: 4 blocks, transformer: 2 layers)
    std::size_t heads = 2;
    std::size_t ff = 0;  // 0 -> 2*hidden
    bool positional_encoding = true;
    std::uint64_t seed = 0;

    std::size_t resolved_depth() const;
    std::size_t resolved_ff() const { return ff == 0 ? 2 * hidden : ff; }
};

struct Param {
    std::string name;
    tensor::NodePtr node;
    bool trainable = true;
};

class ParameterSet {
  public:
    tensor::NodePtr add(const std::string& name, std::vector<std::size_t> shape,
                        std::vector<double> values);
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;
    std::vector<Param>& items() { return params_; }
    const std::vector<Param>& items() const { return params_; }
    void zero_grad();
    std::size_t scalar_count() const;

  private:
    std::vector<Param> params_;
};

enum class FreezePolicy { full, head_only };

std::string to_string(FreezePolicy p);
FreezePolicy freeze_policy_from_string(const std::string& s);

class Model {
  public:
    explicit Model(const ModelSpec& spec);

    const ModelSpec& spec() const { return spec_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    // batch: B*W*C row-major standardized values; returns logits [B,1];
    // pre_pool (optional) receives the activations feeding the final pooling,
    // for causality/invariance probes
    tensor::NodePtr forward(const std::vector<double>& batch, std::size_t b, std::size_t w,
                            tensor::NodePtr* pre_pool = nullptr) const;

    // head_only leaves exactly the "head."-prefixed parameters trainable
    void apply_freeze(FreezePolicy policy);

    // fnv-1a over the little-endian bytes of every non-head parameter, for
    // freeze-contract assertions
    std::uint64_t backbone_hash() const;

  private:
    ModelSpec spec_;
    ParameterSet params_;
};

// sinusoidal positional encoding table, [W,C] row-major
std::vector<double> sinusoidal_encoding(std::size_t w, std::size_t c);

}  // namespace kds::nn
