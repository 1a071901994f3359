#pragma once

#include <string>

#include "ssmg/params.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg {

// Weight [in x out] with U(-1/sqrt(in), 1/sqrt(in)) entries.
template <typename T>
Tensor<T> linear_weight(std::size_t in, std::size_t out, Rng& rng);

// linear(d -> expansion*d) -> silu -> linear(expansion*d -> d)
template <typename T>
class ChannelMlp {
public:
    ChannelMlp(std::size_t d_model, std::size_t expansion, ParameterSet<T>& params, const std::string& prefix,
               Rng& rng);

    Tensor<T> forward(const Tensor<T>& x) const;

    const Tensor<T>& out_weight() const { return w2_; }
    const Tensor<T>& out_bias() const { return b2_; }

private:
    Tensor<T> w1_, b1_, w2_, b2_;
};

extern template class ChannelMlp<float>;
extern template class ChannelMlp<double>;

}  // namespace ssmg
