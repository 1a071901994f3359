#include "ssmg/simba.hpp"

#include <algorithm>
#include <cmath>

#include "ssmg/error.hpp"
#include "ssmg/ops.hpp"

namespace ssmg {

void SsmConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || head_dim == 0 || state_dim == 0 || conv_width == 0) {
        throw ConfigError("ssm config: all extents must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("ssm config: dropout must lie in [0, 1)");
}

template <typename T>
MambaMixState<T>::MambaMixState(const SsmConfig& cfg)
    : conv_history((cfg.conv_width - 1) * cfg.d_inner(), T(0)), scan(cfg.n_heads, cfg.state_dim, cfg.head_dim) {}

template <typename T>
MambaMix<T>::MambaMix(const SsmConfig& cfg, ParameterSet<T>& params, const std::string& prefix, Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    const std::size_t di = cfg.d_inner(), H = cfg.n_heads, N = cfg.state_dim;
    in_w_ = params.add(prefix + ".in_proj", linear_weight<T>(cfg.d_model, 2 * di + H + 2 * H * N, rng));
    conv_w_ = params.add(prefix + ".conv_w",
                         init::uniform<T>({cfg.conv_width, di}, 1.0 / std::sqrt(double(cfg.conv_width)), rng));
    conv_b_ = params.add(prefix + ".conv_b", Tensor<T>::zeros({di}));

    // dt initialised log-uniformly in [1e-3, 1e-1]; the bias stores softplus^{-1}(dt).
    std::vector<T> dt_bias(H), a_log(H);
    for (std::size_t h = 0; h < H; ++h) {
        const double dt = std::exp(uniform(rng, std::log(1e-3), std::log(1e-1)));
        dt_bias[h] = static_cast<T>(dt + std::log(-std::expm1(-dt)));
        a_log[h] = static_cast<T>(H == 1 ? 0.0 : std::log(16.0) * double(h) / double(H - 1));
    }
    dt_bias_ = params.add(prefix + ".dt_bias", Tensor<T>({H}, std::move(dt_bias)));
    a_log_ = params.add(prefix + ".a_log", Tensor<T>({H}, std::move(a_log)));
    d_skip_ = params.add(prefix + ".d_skip", Tensor<T>::full({di}, T(1)));
    out_w_ = params.add(prefix + ".out_proj", linear_weight<T>(di, cfg.d_model, rng));
    out_b_ = params.add(prefix + ".out_bias", Tensor<T>::zeros({cfg.d_model}));
}

template <typename T>
Tensor<T> MambaMix<T>::forward(const Tensor<T>& u, MambaMixState<T>* state) const {
    if (u.rank() != 2 || u.dim(1) != cfg_.d_model) {
        throw DimensionError("MambaMix: expected [L x " + std::to_string(cfg_.d_model) + "], got " +
                             shape_to_string(u.shape()));
    }
    const std::size_t L = u.dim(0), di = cfg_.d_inner(), H = cfg_.n_heads, N = cfg_.state_dim;
    const std::size_t W = cfg_.conv_width;
    MambaMixState<T> local(cfg_);
    MambaMixState<T>& st = state ? *state : local;

    auto proj = matmul(u, in_w_);
    auto x = slice(proj, 1, 0, di);
    auto z = slice(proj, 1, di, 2 * di);
    auto dt_raw = slice(proj, 1, 2 * di, 2 * di + H);
    auto b = slice(proj, 1, 2 * di + H, 2 * di + H + H * N);
    auto c = slice(proj, 1, 2 * di + H + H * N, 2 * di + H + 2 * H * N);

    Tensor<T> conv_in = x;
    if (W > 1) {
        Tensor<T> history({W - 1, di}, st.conv_history);
        conv_in = concat<T>({history, x}, 0);
        auto rows = conv_in.data();
        std::copy(rows.end() - static_cast<std::ptrdiff_t>((W - 1) * di), rows.end(), st.conv_history.begin());
    }
    auto conv = causal_conv1d(conv_in, conv_w_, conv_b_);
    auto xc = silu(W > 1 ? slice(conv, 0, W - 1, W - 1 + L) : conv);

    auto dt = softplus(add_row(dt_raw, dt_bias_));
    auto decay = exp(mul_row(dt, scale(exp(a_log_), T(-1))));
    auto xs = mul(xc, repeat_columns(dt, cfg_.head_dim));
    auto y = selective_scan(decay, b, c, xs, H, &st.scan);
    y = add(y, mul_row(xc, d_skip_));
    y = mul(y, silu(z));
    st.consumed += L;
    return linear(y, out_w_, out_b_);
}

template <typename T>
SimbaBlock<T>::SimbaBlock(const SsmConfig& cfg, ParameterSet<T>& params, const std::string& prefix, Rng& rng)
    : cfg_(cfg),
      norm1_(params.add(prefix + ".norm1", Tensor<T>::full({cfg.d_model}, T(1)))),
      norm2_(params.add(prefix + ".norm2", Tensor<T>::full({cfg.d_model}, T(1)))),
      mix_(cfg, params, prefix + ".mix", rng),
      mlp_(cfg.d_model, 2, params, prefix + ".mlp", rng) {}

template <typename T>
Tensor<T> SimbaBlock<T>::forward(const Tensor<T>& u, const RunMode& mode, SimbaBlockState<T>* state) const {
    const T eps = T(1e-6);
    auto h = add(u, dropout(mix_.forward(rms_norm(u, norm1_, eps), state ? &state->mix : nullptr), cfg_.dropout,
                            mode.train, mode.rng));
    return add(h, dropout(mlp_.forward(rms_norm(h, norm2_, eps)), cfg_.dropout, mode.train, mode.rng));
}

template struct MambaMixState<float>;
template struct MambaMixState<double>;
template class MambaMix<float>;
template class MambaMix<double>;
template class SimbaBlock<float>;
template class SimbaBlock<double>;

}  // namespace ssmg
