#include "ssmg/layers.hpp"

#include <cmath>

#include "ssmg/error.hpp"
#include "ssmg/ops.hpp"

namespace ssmg {

template <typename T>
Tensor<T> linear_weight(std::size_t in, std::size_t out, Rng& rng) {
    return init::uniform<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

template <typename T>
ChannelMlp<T>::ChannelMlp(std::size_t d_model, std::size_t expansion, ParameterSet<T>& params,
                          const std::string& prefix, Rng& rng) {
    if (d_model == 0 || expansion == 0) throw ArgumentError("ChannelMlp: extents must be positive");
    const std::size_t hidden = d_model * expansion;
    w1_ = params.add(prefix + ".w1", linear_weight<T>(d_model, hidden, rng));
    b1_ = params.add(prefix + ".b1", Tensor<T>::zeros({hidden}));
    w2_ = params.add(prefix + ".w2", linear_weight<T>(hidden, d_model, rng));
    b2_ = params.add(prefix + ".b2", Tensor<T>::zeros({d_model}));
}

template <typename T>
Tensor<T> ChannelMlp<T>::forward(const Tensor<T>& x) const {
    return linear(silu(linear(x, w1_, b1_)), w2_, b2_);
}

template Tensor<float> linear_weight<float>(std::size_t, std::size_t, Rng&);
template Tensor<double> linear_weight<double>(std::size_t, std::size_t, Rng&);
template class ChannelMlp<float>;
template class ChannelMlp<double>;

}  // namespace ssmg
