#pragma once

#include <string>
#include <vector>

#include "ssmg/layers.hpp"
#include "ssmg/params.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg {

struct AttnConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t ffn_expansion = 2;
    double dropout = 0.3;

    std::size_t head_dim() const { return d_model / n_heads; }
    void validate() const;
};

// Multi-head scaled dot-product attention over q[Lq x d], k[Lk x d], v[Lk x d].
// With `causal`, query i sits at absolute position offset + i and sees keys 0..offset+i.
// When `weights` is given it receives the softmax rows, laid out [H x Lq x Lk].
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                               bool causal, std::size_t offset = 0, std::vector<T>* weights = nullptr);

// Keys and values of the positions processed so far, row-major [length x width].
template <typename T>
struct KvCache {
    std::vector<T> keys, values;
    std::size_t width = 0;
    std::size_t length() const { return width ? keys.size() / width : 0; }
};

template <typename T>
class SelfAttention {
public:
    SelfAttention(const AttnConfig& cfg, ParameterSet<T>& params, const std::string& prefix, Rng& rng);

    // Causal attention over u[L x d]. With `cache`, u continues the cached positions.
    Tensor<T> forward(const Tensor<T>& u, KvCache<T>* cache = nullptr) const;

    const Tensor<T>& query_weight() const { return wq_; }
    const Tensor<T>& key_weight() const { return wk_; }
    const Tensor<T>& value_weight() const { return wv_; }
    const Tensor<T>& out_weight() const { return wo_; }
    const Tensor<T>& out_bias() const { return bo_; }

private:
    AttnConfig cfg_;
    Tensor<T> wq_, wk_, wv_, wo_, bo_;
};

template <typename T>
class CrossAttention {
public:
    CrossAttention(const AttnConfig& cfg, ParameterSet<T>& params, const std::string& prefix, Rng& rng);

    // Unmasked attention from u[L x d] to text[T x d]. `keys`/`values` may carry a
    // previous projection of the same text.
    Tensor<T> forward(const Tensor<T>& u, const Tensor<T>& text) const;
    Tensor<T> forward(const Tensor<T>& u, const Tensor<T>& keys, const Tensor<T>& values) const;
    std::pair<Tensor<T>, Tensor<T>> project_text(const Tensor<T>& text) const;

    const Tensor<T>& value_weight() const { return wv_; }
    const Tensor<T>& out_weight() const { return wo_; }
    const Tensor<T>& out_bias() const { return bo_; }

private:
    AttnConfig cfg_;
    Tensor<T> wq_, wk_, wv_, wo_, bo_;
};

template <typename T>
struct TransformerBlockState {
    KvCache<T> self;
    Tensor<T> text_keys, text_values;
};

// Pre-norm residual: self-attention -> cross-attention -> FFN.
template <typename T>
class TransformerBlock {
public:
    TransformerBlock(const AttnConfig& cfg, ParameterSet<T>& params, const std::string& prefix, Rng& rng);

    Tensor<T> forward(const Tensor<T>& u, const Tensor<T>& text, const RunMode& mode,
                      TransformerBlockState<T>* state = nullptr) const;

    const SelfAttention<T>& self_attention() const { return self_; }
    const CrossAttention<T>& cross_attention() const { return cross_; }
    const ChannelMlp<T>& mlp() const { return mlp_; }

private:
    AttnConfig cfg_;
    Tensor<T> norm1_, norm2_, norm3_;
    SelfAttention<T> self_;
    CrossAttention<T> cross_;
    ChannelMlp<T> mlp_;
};

extern template class SelfAttention<float>;
extern template class SelfAttention<double>;
extern template class CrossAttention<float>;
extern template class CrossAttention<double>;
extern template class TransformerBlock<float>;
extern template class TransformerBlock<double>;

}  // namespace ssmg
