#pragma once

#include <cstdint>
#include <vector>

#include "ssmg/lm.hpp"
#include "ssmg/random.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0, bool requires_grad = false) {
    Rng rng(seed);
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(scale * standard_normal(rng));
    return Tensor<T>(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

// Tiny model for fast unit tests.
inline LmConfig small_lm_config(Arch arch) {
    LmConfig cfg;
    cfg.arch = arch;
    cfg.vocab = 16;
    cfg.n_blocks = 2;
    cfg.d_model = 16;
    cfg.text_dim = 24;
    cfg.max_len = 64;
    cfg.dropout = 0.0;
    cfg.attn_heads = 2;
    cfg.ssm_heads = 2;
    cfg.ssm_head_dim = 8;
    cfg.state_dim = 4;
    return cfg;
}

}  // namespace ssmg::testing
