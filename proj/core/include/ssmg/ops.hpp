#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssmg/random.hpp"
#include "ssmg/tensor.hpp"

// Differentiable tensor operations. Each op records itself on the current tape when
// an input requires a gradient; otherwise it is a plain computation.
//
// Broadcasting is limited to the trailing-axis "row vector" forms (add_row, mul_row).
namespace ssmg {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

// m[..., d] (+|*) v[d], broadcast over leading axes.
template <typename T> Tensor<T> add_row(const Tensor<T>& m, const Tensor<T>& v);
template <typename T> Tensor<T> mul_row(const Tensor<T>& m, const Tensor<T>& v);

// a[m x k] . b[k x n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x . w (+ bias when defined)
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias = {});
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> silu(const Tensor<T>& a);
template <typename T> Tensor<T> softplus(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

// Rows of table[V x d] selected by ids -> [len(ids) x d].
template <typename T> Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids);

// Half-open range [begin, end) along `axis`.
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// a[r x c] -> [r x (c * times)], each column repeated `times` times in place.
template <typename T> Tensor<T> repeat_columns(const Tensor<T>& a, std::size_t times);

// x / sqrt(mean(x^2) + eps) * gain along the last axis.
template <typename T> Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps);

struct CrossEntropyInfo {
    std::size_t counted = 0;  // positions that were not ignored
};

// Mean negative log-softmax over rows whose target is not ignore_index; 0 when all are ignored.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets, int ignore_index,
                                CrossEntropyInfo* info = nullptr);

// Depthwise causal convolution: y[t,c] = bias[c] + sum_k w[k,c] * x[t - (W-1) + k, c],
// with zeros before the first row. x[L x C], w[W x C], bias[C].
template <typename T>
Tensor<T> causal_conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

// Inverted dropout. Identity when !train or rate == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, Rng* rng);

}  // namespace ssmg
