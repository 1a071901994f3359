#pragma once

#include <string>
#include <vector>

#include "ssmg/layers.hpp"
#include "ssmg/params.hpp"
#include "ssmg/scan.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg {

struct SsmConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t head_dim = 32;
    std::size_t state_dim = 16;
    std::size_t conv_width = 4;
    double dropout = 0.3;

    std::size_t d_inner() const { return n_heads * head_dim; }
    void validate() const;
};

// Recurrent state of one sequence-mixing layer: the last conv_width-1 pre-conv rows
// and the scan state. Zero state is the start of a sequence.
template <typename T>
struct MambaMixState {
    std::vector<T> conv_history;  // [(conv_width-1) x d_inner]
    ScanState<T> scan;
    std::size_t consumed = 0;

    explicit MambaMixState(const SsmConfig& cfg);
};

// Mamba-2 style sequence mixer: in_proj -> (x, z, dt, B, C); causal conv + silu on x;
// dt = softplus(dt_raw + dt_bias); a = exp(-dt * exp(a_log)); scan over dt-scaled x;
// + D*x skip; gate by silu(z); out_proj.
template <typename T>
class MambaMix {
public:
    MambaMix(const SsmConfig& cfg, ParameterSet<T>& params, const std::string& prefix, Rng& rng);

    // Processes u[L x d_model]. With `state` the pass continues from and updates it;
    // without, it starts from zero state.
    Tensor<T> forward(const Tensor<T>& u, MambaMixState<T>* state = nullptr) const;

    const Tensor<T>& out_weight() const { return out_w_; }
    const Tensor<T>& out_bias() const { return out_b_; }

private:
    SsmConfig cfg_;
    Tensor<T> in_w_, conv_w_, conv_b_, dt_bias_, a_log_, d_skip_, out_w_, out_b_;
};

template <typename T>
struct SimbaBlockState {
    MambaMixState<T> mix;
    explicit SimbaBlockState(const SsmConfig& cfg) : mix(cfg) {}
};

// u + Dropout(MambaMix(RMSNorm(u))), then + Dropout(MLP(RMSNorm(.))).
template <typename T>
class SimbaBlock {
public:
    SimbaBlock(const SsmConfig& cfg, ParameterSet<T>& params, const std::string& prefix, Rng& rng);

    Tensor<T> forward(const Tensor<T>& u, const RunMode& mode, SimbaBlockState<T>* state = nullptr) const;

    const MambaMix<T>& mix() const { return mix_; }
    const ChannelMlp<T>& mlp() const { return mlp_; }

private:
    SsmConfig cfg_;
    Tensor<T> norm1_, norm2_;
    MambaMix<T> mix_;
    ChannelMlp<T> mlp_;
};

extern template struct MambaMixState<float>;
extern template struct MambaMixState<double>;
extern template class MambaMix<float>;
extern template class MambaMix<double>;
extern template class SimbaBlock<float>;
extern template class SimbaBlock<double>;

}  // namespace ssmg
