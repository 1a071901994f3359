#include "ssmg/attention.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <memory>

#include "ssmg/error.hpp"
#include "ssmg/ops.hpp"
#include "row_kernels.hpp"

namespace ssmg {

void AttnConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || ffn_expansion == 0) throw ConfigError("attention config: extents must be positive");
    if (d_model % n_heads != 0) {
        throw ConfigError("attention config: d_model " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(n_heads) + " heads");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("attention config: dropout must lie in [0, 1)");
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// One head's column block inside a row-major [rows x d] buffer.
template <typename T>
using HeadMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstHeadMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
ConstHeadMap<T> head_view(std::span<const T> buf, std::size_t rows, std::size_t d, std::size_t h, std::size_t dh) {
    return ConstHeadMap<T>(buf.data() + h * dh, Eigen::Index(rows), Eigen::Index(dh), Eigen::OuterStride<>(d));
}

template <typename T>
HeadMap<T> head_view(std::span<T> buf, std::size_t rows, std::size_t d, std::size_t h, std::size_t dh) {
    return HeadMap<T>(buf.data() + h * dh, Eigen::Index(rows), Eigen::Index(dh), Eigen::OuterStride<>(d));
}

// Forward pass on raw row-major buffers. `probs` receives [H x Lq x Lk], `out` [Lq x d].
// Row-independent kernels: a query row's result does not depend on how many other
// rows are computed with it. Masked probabilities are exact zeros, so summing over
// all keys equals summing over the visible ones.
template <typename T>
void attention_rows(const T* q, const T* k, const T* v, std::size_t Lq, std::size_t Lk, std::size_t d,
                    std::size_t heads, bool causal, std::size_t offset, T* probs, T* out) {
    const std::size_t dh = d / heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    std::vector<T> kt(dh * Lk);
    Eigen::Array<T, Eigen::Dynamic, 1> scratch(Eigen::Index(Lk), 1);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t j = 0; j < Lk; ++j) {
            for (std::size_t c = 0; c < dh; ++c) kt[c * Lk + j] = k[j * d + h * dh + c];
        }
        T* P = probs + h * Lq * Lk;
        detail::rowwise_gemm(q + h * dh, d, kt.data(), Lk, P, Lk, Lq, dh, Lk);
        for (std::size_t i = 0; i < Lq; ++i) {
            const std::size_t visible = causal ? offset + i + 1 : Lk;
            T* row = P + i * Lk;
            // Work in the aligned scratch row so the vectorised reductions and exp depend
            // only on `visible`, not on where the row sits in memory.
            auto e = scratch.head(Eigen::Index(visible));
            e = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(row, Eigen::Index(visible)) * inv_sqrt;
            e = (e - e.maxCoeff()).exp();
            Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(row, Eigen::Index(visible)) = e / e.sum();
            std::fill(row + visible, row + Lk, T(0));
        }
        detail::rowwise_gemm(P, Lk, v + h * dh, d, out + h * dh, d, Lq, Lk, dh);
    }
}

}  // namespace

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                               bool causal, std::size_t offset, std::vector<T>* weights) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || k.shape() != v.shape() || q.dim(1) != k.dim(1) ||
        heads == 0 || q.dim(1) % heads != 0) {
        throw DimensionError("attention: q " + shape_to_string(q.shape()) + ", k " + shape_to_string(k.shape()) +
                             ", v " + shape_to_string(v.shape()) + " with " + std::to_string(heads) + " heads");
    }
    const std::size_t Lq = q.dim(0), Lk = k.dim(0), d = q.dim(1), dh = d / heads;
    if (causal && offset + Lq > Lk) {
        throw DimensionError("attention: causal queries up to position " + std::to_string(offset + Lq) +
                             " exceed " + std::to_string(Lk) + " keys");
    }
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    auto probs = std::make_shared<std::vector<T>>(heads * Lq * Lk);
    std::vector<T> out(Lq * d);
    attention_rows(q.data().data(), k.data().data(), v.data().data(), Lq, Lk, d, heads, causal, offset,
                   probs->data(), out.data());
    if (weights) *weights = *probs;
    if (!will_record<T>({&q, &k, &v})) return Tensor<T>({Lq, d}, std::move(out));

    return make_op_result<T>({Lq, d}, std::move(out), {q, k, v},
                             [q, k, v, probs, heads, Lq, Lk, d, dh, inv_sqrt](std::span<const T> g) {
                                 RowMat<T> dP(Lq, Lk), dS(Lq, Lk);
                                 for (std::size_t h = 0; h < heads; ++h) {
                                     Eigen::Map<const RowMat<T>> P(probs->data() + h * Lq * Lk, Eigen::Index(Lq),
                                                                   Eigen::Index(Lk));
                                     auto dO = head_view(g, Lq, d, h, dh);
                                     auto Q = head_view(q.data(), Lq, d, h, dh);
                                     auto K = head_view(k.data(), Lk, d, h, dh);
                                     auto V = head_view(v.data(), Lk, d, h, dh);
                                     if (v.requires_grad()) {
                                         head_view(v.grad_buffer(), Lk, d, h, dh).noalias() += P.transpose() * dO;
                                     }
                                     if (!q.requires_grad() && !k.requires_grad()) continue;
                                     dP.noalias() = dO * V.transpose();
                                     for (Eigen::Index i = 0; i < Eigen::Index(Lq); ++i) {
                                         const T dot = P.row(i).dot(dP.row(i));
                                         dS.row(i) = P.row(i).cwiseProduct(dP.row(i)) - P.row(i) * dot;
                                     }
                                     dS *= inv_sqrt;
                                     if (q.requires_grad()) head_view(q.grad_buffer(), Lq, d, h, dh).noalias() += dS * K;
                                     if (k.requires_grad()) {
                                         head_view(k.grad_buffer(), Lk, d, h, dh).noalias() += dS.transpose() * Q;
                                     }
                                 }
                             });
}

template <typename T>
SelfAttention<T>::SelfAttention(const AttnConfig& cfg, ParameterSet<T>& params, const std::string& prefix, Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg.d_model;
    wq_ = params.add(prefix + ".wq", linear_weight<T>(d, d, rng));
    wk_ = params.add(prefix + ".wk", linear_weight<T>(d, d, rng));
    wv_ = params.add(prefix + ".wv", linear_weight<T>(d, d, rng));
    wo_ = params.add(prefix + ".wo", linear_weight<T>(d, d, rng));
    bo_ = params.add(prefix + ".bo", Tensor<T>::zeros({d}));
}

template <typename T>
Tensor<T> SelfAttention<T>::forward(const Tensor<T>& u, KvCache<T>* cache) const {
    auto q = matmul(u, wq_);
    auto k = matmul(u, wk_);
    auto v = matmul(u, wv_);
    if (!cache) return linear(multi_head_attention(q, k, v, cfg_.n_heads, true), wo_, bo_);

    const std::size_t d = cfg_.d_model, offset = cache->length();
    cache->width = d;
    cache->keys.insert(cache->keys.end(), k.data().begin(), k.data().end());
    cache->values.insert(cache->values.end(), v.data().begin(), v.data().end());
    const std::size_t Lq = u.dim(0), Lk = cache->length();
    if (will_record<T>({&q, &k, &v})) {
        // Cached positions are constants; gradients reach only the new rows.
        if (offset > 0) {
            k = concat<T>({Tensor<T>({offset, d}, {cache->keys.begin(), cache->keys.begin() + offset * d}), k}, 0);
            v = concat<T>({Tensor<T>({offset, d}, {cache->values.begin(), cache->values.begin() + offset * d}), v}, 0);
        }
        return linear(multi_head_attention(q, k, v, cfg_.n_heads, true, offset), wo_, bo_);
    }
    std::vector<T> probs(cfg_.n_heads * Lq * Lk), out(Lq * d);
    attention_rows(q.data().data(), cache->keys.data(), cache->values.data(), Lq, Lk, d, cfg_.n_heads, true, offset,
                   probs.data(), out.data());
    return linear(Tensor<T>({Lq, d}, std::move(out)), wo_, bo_);
}

template <typename T>
CrossAttention<T>::CrossAttention(const AttnConfig& cfg, ParameterSet<T>& params, const std::string& prefix,
                                  Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg.d_model;
    wq_ = params.add(prefix + ".wq", linear_weight<T>(d, d, rng));
    wk_ = params.add(prefix + ".wk", linear_weight<T>(d, d, rng));
    wv_ = params.add(prefix + ".wv", linear_weight<T>(d, d, rng));
    wo_ = params.add(prefix + ".wo", linear_weight<T>(d, d, rng));
    bo_ = params.add(prefix + ".bo", Tensor<T>::zeros({d}));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> CrossAttention<T>::project_text(const Tensor<T>& text) const {
    if (!text.defined() || text.rank() != 2 || text.dim(1) != cfg_.d_model) {
        throw EmptyConditionError("cross attention needs a non-empty text condition of width " +
                                  std::to_string(cfg_.d_model));
    }
    return {matmul(text, wk_), matmul(text, wv_)};
}

template <typename T>
Tensor<T> CrossAttention<T>::forward(const Tensor<T>& u, const Tensor<T>& text) const {
    auto [k, v] = project_text(text);
    return forward(u, k, v);
}

template <typename T>
Tensor<T> CrossAttention<T>::forward(const Tensor<T>& u, const Tensor<T>& keys, const Tensor<T>& values) const {
    if (!keys.defined()) throw EmptyConditionError("cross attention needs a non-empty text condition");
    return linear(multi_head_attention(matmul(u, wq_), keys, values, cfg_.n_heads, false), wo_, bo_);
}

template <typename T>
TransformerBlock<T>::TransformerBlock(const AttnConfig& cfg, ParameterSet<T>& params, const std::string& prefix,
                                      Rng& rng)
    : cfg_(cfg),
      norm1_(params.add(prefix + ".norm1", Tensor<T>::full({cfg.d_model}, T(1)))),
      norm2_(params.add(prefix + ".norm2", Tensor<T>::full({cfg.d_model}, T(1)))),
      norm3_(params.add(prefix + ".norm3", Tensor<T>::full({cfg.d_model}, T(1)))),
      self_(cfg, params, prefix + ".self", rng),
      cross_(cfg, params, prefix + ".cross", rng),
      mlp_(cfg.d_model, cfg.ffn_expansion, params, prefix + ".mlp", rng) {}

template <typename T>
Tensor<T> TransformerBlock<T>::forward(const Tensor<T>& u, const Tensor<T>& text, const RunMode& mode,
                                       TransformerBlockState<T>* state) const {
    const T eps = T(1e-6);
    auto branch = [&](const Tensor<T>& x) { return dropout(x, cfg_.dropout, mode.train, mode.rng); };
    auto h = add(u, branch(self_.forward(rms_norm(u, norm1_, eps), state ? &state->self : nullptr)));
    Tensor<T> crossed;
    if (state) {
        if (!state->text_keys.defined()) std::tie(state->text_keys, state->text_values) = cross_.project_text(text);
        crossed = cross_.forward(rms_norm(h, norm2_, eps), state->text_keys, state->text_values);
    } else {
        crossed = cross_.forward(rms_norm(h, norm2_, eps), text);
    }
    h = add(h, branch(crossed));
    return add(h, branch(mlp_.forward(rms_norm(h, norm3_, eps))));
}

#define SSMG_INSTANTIATE_ATTN(T)                                                                                \
    template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                                               bool, std::size_t, std::vector<T>*);                             \
    template class SelfAttention<T>;                                                                            \
    template class CrossAttention<T>;                                                                           \
    template class TransformerBlock<T>;

SSMG_INSTANTIATE_ATTN(float)
SSMG_INSTANTIATE_ATTN(double)

}  // namespace ssmg
