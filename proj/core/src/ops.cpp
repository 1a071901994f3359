#include "ssmg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssmg/error.hpp"
#include "row_kernels.hpp"

namespace ssmg {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
    }
}

template <typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
    if (a.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_to_string(a.shape()));
    }
}

template <typename T>
std::size_t last_dim(const Tensor<T>& a) {
    return a.shape().back();
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    auto x = a.data(), y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return make_op_result<T>(a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
        for (const auto* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto gt = t->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    auto x = a.data(), y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    return make_op_result<T>(a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    auto x = a.data(), y = b.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return make_op_result<T>(a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
        auto x = a.data(), y = b.data();
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    auto x = a.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
    return make_op_result<T>(a.shape(), std::move(out), {a}, [a, factor](std::span<const T> g) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& m, const Tensor<T>& v) {
    const std::size_t d = last_dim(m);
    if (v.rank() != 1 || v.dim(0) != d) {
        throw DimensionError("add_row: " + shape_to_string(m.shape()) + " vs " + shape_to_string(v.shape()));
    }
    auto x = m.data(), y = v.data();
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < x.size(); r += d)
        for (std::size_t j = 0; j < d; ++j) out[r + j] = x[r + j] + y[j];
    return make_op_result<T>(m.shape(), std::move(out), {m, v}, [m, v, d](std::span<const T> g) {
        if (m.requires_grad()) {
            auto gm = m.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (v.requires_grad()) {
            auto gv = v.grad_buffer();
            for (std::size_t r = 0; r < g.size(); r += d)
                for (std::size_t j = 0; j < d; ++j) gv[j] += g[r + j];
        }
    });
}

template <typename T>
Tensor<T> mul_row(const Tensor<T>& m, const Tensor<T>& v) {
    const std::size_t d = last_dim(m);
    if (v.rank() != 1 || v.dim(0) != d) {
        throw DimensionError("mul_row: " + shape_to_string(m.shape()) + " vs " + shape_to_string(v.shape()));
    }
    auto x = m.data(), y = v.data();
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < x.size(); r += d)
        for (std::size_t j = 0; j < d; ++j) out[r + j] = x[r + j] * y[j];
    return make_op_result<T>(m.shape(), std::move(out), {m, v}, [m, v, d](std::span<const T> g) {
        auto x = m.data(), y = v.data();
        if (m.requires_grad()) {
            auto gm = m.grad_buffer();
            for (std::size_t r = 0; r < g.size(); r += d)
                for (std::size_t j = 0; j < d; ++j) gm[r + j] += g[r + j] * y[j];
        }
        if (v.requires_grad()) {
            auto gv = v.grad_buffer();
            for (std::size_t r = 0; r < g.size(); r += d)
                for (std::size_t j = 0; j < d; ++j) gv[j] += g[r + j] * x[r + j];
        }
    });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()));
    }
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    std::vector<T> out(static_cast<std::size_t>(m * n));
    detail::rowwise_gemm(a.data().data(), a.dim(1), b.data().data(), b.dim(1), out.data(), b.dim(1), a.dim(0), a.dim(1),
                         b.dim(1));
    return make_op_result<T>(Shape{a.dim(0), b.dim(1)}, std::move(out), {a, b},
                             [a, b, m, k, n](std::span<const T> g) {
                                 ConstMatMap<T> G(g.data(), m, n);
                                 if (a.requires_grad()) {
                                     MatMap<T>(a.grad_buffer().data(), m, k).noalias() +=
                                         G * ConstMatMap<T>(b.data().data(), k, n).transpose();
                                 }
                                 if (b.requires_grad()) {
                                     MatMap<T>(b.grad_buffer().data(), k, n).noalias() +=
                                         ConstMatMap<T>(a.data().data(), m, k).transpose() * G;
                                 }
                             });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    auto y = matmul(x, w);
    return bias.defined() ? add_row(y, bias) : y;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_rank(a, 2, "transpose");
    const std::size_t r = a.dim(0), c = a.dim(1);
    auto x = a.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
    return make_op_result<T>(Shape{c, r}, std::move(out), {a}, [a, r, c](std::span<const T> g) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
}

namespace {

template <typename T>
T sigmoid_scalar(T x) {
    return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
T softplus_scalar(T x) {
    return x > T(20) ? x : std::log1p(std::exp(x));
}

// out = f(in); grad_in += g * df(in, out)
template <typename T, typename F, typename DF>
Tensor<T> pointwise(const Tensor<T>& a, F f, DF df) {
    auto x = a.data();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    if (!will_record<T>({&a})) return Tensor<T>(a.shape(), std::move(out));
    auto cached = std::make_shared<std::vector<T>>(out);
    return make_op_result<T>(a.shape(), std::move(out), {a}, [a, cached, df](std::span<const T> g) {
        auto x = a.data();
        auto ga = a.grad_buffer();
        const auto& y = *cached;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
}

constexpr std::size_t kBlock = 16;
template <typename T>
using Block = Eigen::Array<T, kBlock, 1>;

// Applies a vectorised Eigen expression in fixed 16-wide blocks, zero-padding the
// tail, so every element takes the same packet path wherever it sits in a buffer.
template <typename T, typename F>
void blockwise(const T* x, const T* y, T* out, std::size_t n, F f) {
    Block<T> bx, by, bo;
    for (std::size_t i = 0; i < n; i += kBlock) {
        const std::size_t m = std::min(kBlock, n - i);
        bx.setZero();
        by.setZero();
        std::copy(x + i, x + i + m, bx.data());
        if (y) std::copy(y + i, y + i + m, by.data());
        bo = f(bx, by);
        std::copy(bo.data(), bo.data() + m, out + i);
    }
}

// Vectorised variant: f(x) and df(x, y) act on Block<T>.
template <typename T, typename F, typename DF>
Tensor<T> pointwise_blocks(const Tensor<T>& a, F f, DF df) {
    auto x = a.data();
    std::vector<T> out(x.size());
    blockwise<T>(x.data(), nullptr, out.data(), x.size(), [&](const Block<T>& bx, const Block<T>&) { return f(bx); });
    if (!will_record<T>({&a})) return Tensor<T>(a.shape(), std::move(out));
    auto cached = std::make_shared<std::vector<T>>(out);
    return make_op_result<T>(a.shape(), std::move(out), {a}, [a, cached, df](std::span<const T> g) {
        auto x = a.data();
        auto ga = a.grad_buffer();
        std::vector<T> d(g.size());
        blockwise<T>(x.data(), cached->data(), d.data(), d.size(), df);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * d[i];
    });
}

}  // namespace

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return pointwise_blocks(
        a, [](const Block<T>& x) -> Block<T> { return x.exp(); },
        [](const Block<T>&, const Block<T>& y) -> Block<T> { return y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return pointwise_blocks(
        a, [](const Block<T>& x) -> Block<T> { return x.logistic(); },
        [](const Block<T>&, const Block<T>& y) -> Block<T> { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
    return pointwise(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
    return pointwise_blocks(
        a, [](const Block<T>& x) -> Block<T> { return x * x.logistic(); },
        [](const Block<T>& x, const Block<T>&) -> Block<T> {
            const Block<T> s = x.logistic();
            return s * (T(1) + x * (T(1) - s));
        });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
    return pointwise(a, [](T x) { return softplus_scalar(x); }, [](T x, T) { return sigmoid_scalar(x); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    auto x = a.data();
    T total = std::accumulate(x.begin(), x.end(), T(0));
    return make_op_result<T>(Shape{1}, std::vector<T>{total}, {a}, [a](std::span<const T> g) {
        auto ga = a.grad_buffer();
        for (auto& v : ga) v += g[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    auto x = a.data();
    const T inv = T(1) / static_cast<T>(x.size());
    T total = std::accumulate(x.begin(), x.end(), T(0)) * inv;
    return make_op_result<T>(Shape{1}, std::vector<T>{total}, {a}, [a, inv](std::span<const T> g) {
        auto ga = a.grad_buffer();
        for (auto& v : ga) v += g[0] * inv;
    });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
    require_rank(table, 2, "embedding");
    if (ids.empty()) throw DimensionError("embedding: empty id list");
    const std::size_t rows = table.dim(0), d = table.dim(1);
    auto w = table.data();
    std::vector<T> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
            throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside [0, " + std::to_string(rows) +
                             ")");
        }
        std::copy_n(w.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                    out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    std::vector<int> kept(ids.begin(), ids.end());
    return make_op_result<T>(Shape{ids.size(), d}, std::move(out), {table},
                             [table, kept = std::move(kept), d](std::span<const T> g) {
                                 auto gw = table.grad_buffer();
                                 for (std::size_t i = 0; i < kept.size(); ++i) {
                                     const std::size_t base = static_cast<std::size_t>(kept[i]) * d;
                                     for (std::size_t j = 0; j < d; ++j) gw[base + j] += g[i * d + j];
                                 }
                             });
}

namespace {

struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
    const auto& shape = a.shape();
    if (axis >= shape.size() || begin >= end || end > shape[axis]) {
        throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                             std::to_string(axis) + " invalid for " + shape_to_string(shape));
    }
    const auto s = split_at(shape, axis);
    const std::size_t width = end - begin;
    Shape out_shape = shape;
    out_shape[axis] = width;
    auto x = a.data();
    std::vector<T> out(s.outer * width * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((o * s.extent + begin) * s.inner), width * s.inner,
                    out.begin() + static_cast<std::ptrdiff_t>(o * width * s.inner));
    }
    return make_op_result<T>(std::move(out_shape), std::move(out), {a}, [a, s, begin, width](std::span<const T> g) {
        auto ga = a.grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
            const std::size_t src = o * width * s.inner;
            const std::size_t dst = (o * s.extent + begin) * s.inner;
            for (std::size_t i = 0; i < width * s.inner; ++i) ga[dst + i] += g[src + i];
        }
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    Shape out_shape = parts.front().shape();
    if (axis >= out_shape.size()) throw DimensionError("concat: axis out of range");
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape probe = p.shape();
        if (probe.size() != out_shape.size()) throw DimensionError("concat: rank mismatch");
        probe[axis] = out_shape[axis];
        if (probe != out_shape) {
            throw DimensionError("concat: incompatible shapes " + shape_to_string(parts.front().shape()) + " and " +
                                 shape_to_string(p.shape()));
        }
        total += p.shape()[axis];
    }
    out_shape[axis] = total;
    const auto s = split_at(out_shape, axis);
    std::vector<T> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t width = p.shape()[axis];
        auto x = p.data();
        for (std::size_t o = 0; o < s.outer; ++o) {
            std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * width * s.inner), width * s.inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * s.inner));
        }
        offset += width;
    }
    return make_op_result<T>(std::move(out_shape), std::move(out), parts, [parts, s, axis, total](std::span<const T> g) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            const std::size_t width = p.shape()[axis];
            if (p.requires_grad()) {
                auto gp = p.grad_buffer();
                for (std::size_t o = 0; o < s.outer; ++o) {
                    const std::size_t src = (o * total + offset) * s.inner;
                    const std::size_t dst = o * width * s.inner;
                    for (std::size_t i = 0; i < width * s.inner; ++i) gp[dst + i] += g[src + i];
                }
            }
            offset += width;
        }
    });
}

template <typename T>
Tensor<T> repeat_columns(const Tensor<T>& a, std::size_t times) {
    require_rank(a, 2, "repeat_columns");
    if (times == 0) throw DimensionError("repeat_columns: times must be positive");
    const std::size_t r = a.dim(0), c = a.dim(1);
    auto x = a.data();
    std::vector<T> out(r * c * times);
    for (std::size_t i = 0; i < r * c; ++i) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * times), times, x[i]);
    return make_op_result<T>(Shape{r, c * times}, std::move(out), {a}, [a, times](std::span<const T> g) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            T acc = 0;
            for (std::size_t k = 0; k < times; ++k) acc += g[i * times + k];
            ga[i] += acc;
        }
    });
}

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps) {
    if (!(eps >= T(0))) throw ArgumentError("rms_norm: eps must be non-negative");
    const std::size_t d = last_dim(x);
    if (gain.rank() != 1 || gain.dim(0) != d) {
        throw DimensionError("rms_norm: gain " + shape_to_string(gain.shape()) + " vs input " +
                             shape_to_string(x.shape()));
    }
    const std::size_t rows = x.size() / d;
    auto in = x.data(), gv = gain.data();
    std::vector<T> out(in.size());
    auto inv_rms = std::make_shared<std::vector<T>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = in.data() + r * d;
        T ms = 0;
        for (std::size_t j = 0; j < d; ++j) ms += row[j] * row[j];
        ms /= static_cast<T>(d);
        const T denom = std::sqrt(ms + eps);
        const T inv = denom > T(0) ? T(1) / denom : T(0);
        (*inv_rms)[r] = inv;
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = row[j] * inv * gv[j];
    }
    return make_op_result<T>(x.shape(), std::move(out), {x, gain}, [x, gain, inv_rms, d, rows](std::span<const T> g) {
        auto in = x.data(), gv = gain.data();
        if (x.requires_grad()) {
            auto gx = x.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const T inv = (*inv_rms)[r];
                const T* row = in.data() + r * d;
                const T* grow = g.data() + r * d;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) dot += grow[j] * gv[j] * row[j];
                const T coef = inv * inv * inv * dot / static_cast<T>(d);
                for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += inv * gv[j] * grow[j] - row[j] * coef;
            }
        }
        if (gain.requires_grad()) {
            auto gg = gain.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const T inv = (*inv_rms)[r];
                for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * in[r * d + j] * inv;
            }
        }
    });
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets, int ignore_index,
                                CrossEntropyInfo* info) {
    require_rank(logits, 2, "softmax_cross_entropy");
    const std::size_t rows = logits.dim(0), classes = logits.dim(1);
    if (targets.size() != rows) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             shape_to_string(logits.shape()) + " logits");
    }
    auto z = logits.data();
    auto probs = std::make_shared<std::vector<T>>(z.size());
    std::size_t counted = 0;
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const int t = targets[r];
        if (t == ignore_index) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= classes) {
            throw IndexError("softmax_cross_entropy: target " + std::to_string(t) + " outside [0, " +
                             std::to_string(classes) + ")");
        }
        const T* row = z.data() + r * classes;
        T* p = probs->data() + r * classes;
        const T mx = *std::max_element(row, row + classes);
        T denom = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            p[c] = std::exp(row[c] - mx);
            denom += p[c];
        }
        for (std::size_t c = 0; c < classes; ++c) p[c] /= denom;
        total += std::log(denom) + mx - row[t];
        ++counted;
    }
    if (info) info->counted = counted;
    const T inv = counted ? T(1) / static_cast<T>(counted) : T(0);
    std::vector<int> kept(targets.begin(), targets.end());
    return make_op_result<T>(Shape{1}, std::vector<T>{total * inv}, {logits},
                             [logits, probs, kept = std::move(kept), ignore_index, classes, inv](std::span<const T> g) {
                                 auto gl = logits.grad_buffer();
                                 const T scale = g[0] * inv;
                                 for (std::size_t r = 0; r < kept.size(); ++r) {
                                     if (kept[r] == ignore_index) continue;
                                     const T* p = probs->data() + r * classes;
                                     T* out = gl.data() + r * classes;
                                     for (std::size_t c = 0; c < classes; ++c) out[c] += scale * p[c];
                                     out[kept[r]] -= scale;
                                 }
                             });
}

template <typename T>
Tensor<T> causal_conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    require_rank(x, 2, "causal_conv1d");
    require_rank(w, 2, "causal_conv1d");
    const std::size_t len = x.dim(0), ch = x.dim(1), width = w.dim(0);
    if (w.dim(1) != ch || bias.rank() != 1 || bias.dim(0) != ch) {
        throw DimensionError("causal_conv1d: input " + shape_to_string(x.shape()) + ", kernel " +
                             shape_to_string(w.shape()) + ", bias " + shape_to_string(bias.shape()));
    }
    auto in = x.data(), k = w.data(), b = bias.data();
    std::vector<T> out(len * ch);
    for (std::size_t t = 0; t < len; ++t) {
        T* o = out.data() + t * ch;
        std::copy_n(b.data(), ch, o);
        for (std::size_t j = 0; j < width; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(width - 1);
            if (src < 0) continue;
            const T* xi = in.data() + static_cast<std::size_t>(src) * ch;
            const T* kj = k.data() + j * ch;
            for (std::size_t c = 0; c < ch; ++c) o[c] += kj[c] * xi[c];
        }
    }
    return make_op_result<T>(x.shape(), std::move(out), {x, w, bias},
                             [x, w, bias, len, ch, width](std::span<const T> g) {
                                 auto in = x.data(), k = w.data();
                                 T* gx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
                                 T* gw = w.requires_grad() ? w.grad_buffer().data() : nullptr;
                                 for (std::size_t t = 0; t < len; ++t) {
                                     const T* gt = g.data() + t * ch;
                                     for (std::size_t j = 0; j < width; ++j) {
                                         const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                                                                    static_cast<std::ptrdiff_t>(width - 1);
                                         if (src < 0) continue;
                                         const std::size_t s = static_cast<std::size_t>(src) * ch;
                                         if (gx) {
                                             for (std::size_t c = 0; c < ch; ++c) gx[s + c] += k[j * ch + c] * gt[c];
                                         }
                                         if (gw) {
                                             for (std::size_t c = 0; c < ch; ++c) gw[j * ch + c] += in[s + c] * gt[c];
                                         }
                                     }
                                 }
                                 if (bias.requires_grad()) {
                                     auto gb = bias.grad_buffer();
                                     for (std::size_t t = 0; t < len; ++t)
                                         for (std::size_t c = 0; c < ch; ++c) gb[c] += g[t * ch + c];
                                 }
                             });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout: rate must lie in [0, 1)");
    if (!train || rate == 0.0) return x;
    if (!rng) throw ArgumentError("dropout: train mode needs a random generator");
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    auto in = x.data();
    auto mask = std::make_shared<std::vector<T>>(in.size());
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        (*mask)[i] = uniform01(*rng) >= rate ? keep_scale : T(0);
        out[i] = in[i] * (*mask)[i];
    }
    return make_op_result<T>(x.shape(), std::move(out), {x}, [x, mask](std::span<const T> g) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
    });
}

#define SSMG_INSTANTIATE_OPS(T)                                                                              \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                        \
    template Tensor<T> add_row<T>(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> mul_row<T>(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> transpose<T>(const Tensor<T>&);                                                       \
    template Tensor<T> exp<T>(const Tensor<T>&);                                                             \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                         \
    template Tensor<T> tanh<T>(const Tensor<T>&);                                                            \
    template Tensor<T> silu<T>(const Tensor<T>&);                                                            \
    template Tensor<T> softplus<T>(const Tensor<T>&);                                                        \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                             \
    template Tensor<T> mean<T>(const Tensor<T>&);                                                            \
    template Tensor<T> embedding<T>(const Tensor<T>&, std::span<const int>);                                 \
    template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                    \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                                \
    template Tensor<T> repeat_columns<T>(const Tensor<T>&, std::size_t);                                     \
    template Tensor<T> rms_norm<T>(const Tensor<T>&, const Tensor<T>&, T);                                   \
    template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>, int, CrossEntropyInfo*); \
    template Tensor<T> causal_conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> dropout<T>(const Tensor<T>&, double, bool, Rng*);

SSMG_INSTANTIATE_OPS(float)
SSMG_INSTANTIATE_OPS(double)

}  // namespace ssmg
