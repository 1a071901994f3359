#include "ssmg/scan.hpp"

#include <algorithm>
#include <memory>

#include "ssmg/error.hpp"

namespace ssmg {

namespace {

// Dot product with sixteen interleaved partial sums, a fixed order the compiler can vectorise.
template <typename T>
T lane_dot(const T* a, const T* b, std::size_t n) {
    constexpr std::size_t W = 16;
    T part[W] = {};
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        for (std::size_t j = 0; j < W; ++j) part[j] += a[i + j] * b[i + j];
    }
    for (std::size_t j = 0; i < n; ++i, ++j) part[j] += a[i] * b[i];
    T total = T(0);
    for (T v : part) total += v;
    return total;
}

}  // namespace

template <typename T>
void ScanInputs<T>::validate() const {
    const auto& d = dims;
    if (d.heads == 0 || d.head_dim == 0 || d.state_dim == 0) throw DimensionError("scan: extents must be positive");
    if (decay.size() != d.length * d.heads || inject.size() != d.length * d.heads * d.state_dim ||
        readout.size() != inject.size() || value.size() != d.length * d.heads * d.head_dim) {
        throw DimensionError("scan: input sizes inconsistent with L=" + std::to_string(d.length) + " H=" +
                             std::to_string(d.heads) + " N=" + std::to_string(d.state_dim) + " P=" +
                             std::to_string(d.head_dim));
    }
}

namespace {

template <typename T>
void check_state(const ScanState<T>& s, const ScanDims& d) {
    if (s.heads != d.heads || s.state_dim != d.state_dim || s.head_dim != d.head_dim ||
        s.h.size() != d.heads * d.state_dim * d.head_dim) {
        throw DimensionError("scan: carried state does not match scan dimensions");
    }
}

// h = a h + b x^T ; y = h^T c   for one head
template <typename T>
inline void head_step(T* h, T a, const T* b, const T* c, const T* x, T* y, std::size_t N, std::size_t P) {
    std::fill_n(y, P, T(0));
    for (std::size_t n = 0; n < N; ++n) {
        T* row = h + n * P;
        const T bn = b[n], cn = c[n];
        for (std::size_t p = 0; p < P; ++p) {
            row[p] = a * row[p] + bn * x[p];
            y[p] += cn * row[p];
        }
    }
}

}  // namespace

template <typename T>
void scan_step(ScanState<T>& state, std::span<const T> decay, std::span<const T> inject, std::span<const T> readout,
               std::span<const T> value, std::span<T> out) {
    const std::size_t H = state.heads, N = state.state_dim, P = state.head_dim;
    if (decay.size() != H || inject.size() != H * N || readout.size() != H * N || value.size() != H * P ||
        out.size() != H * P) {
        throw DimensionError("scan_step: inputs inconsistent with state");
    }
    for (std::size_t hd = 0; hd < H; ++hd) {
        head_step(state.h.data() + hd * N * P, decay[hd], inject.data() + hd * N, readout.data() + hd * N,
                  value.data() + hd * P, out.data() + hd * P, N, P);
    }
}

template <typename T>
std::vector<T> selective_scan_sequential(const ScanInputs<T>& in, ScanState<T>* state) {
    in.validate();
    const auto& d = in.dims;
    ScanState<T> local(d.heads, d.state_dim, d.head_dim);
    ScanState<T>& s = state ? *state : local;
    check_state(s, d);
    const std::size_t H = d.heads, N = d.state_dim, P = d.head_dim;
    std::vector<T> y(d.length * H * P);
    for (std::size_t t = 0; t < d.length; ++t) {
        scan_step<T>(s, in.decay.subspan(t * H, H), in.inject.subspan(t * H * N, H * N),
                     in.readout.subspan(t * H * N, H * N), in.value.subspan(t * H * P, H * P),
                     std::span<T>(y).subspan(t * H * P, H * P));
    }
    return y;
}

template <typename T>
std::vector<T> selective_scan_chunked(const ScanInputs<T>& in, std::size_t chunk, ScanState<T>* state) {
    if (chunk == 0) throw ArgumentError("selective_scan_chunked: chunk must be at least 1");
    in.validate();
    const auto& d = in.dims;
    ScanState<T> local(d.heads, d.state_dim, d.head_dim);
    ScanState<T>& s = state ? *state : local;
    check_state(s, d);
    const std::size_t L = d.length, H = d.heads, N = d.state_dim, P = d.head_dim;
    std::vector<T> y(L * H * P, T(0));

    std::vector<T> weight(chunk);  // weight[s - start] = prod_{r=s+1..t} a_r for the current t
    std::vector<T> next_state(N * P);
    for (std::size_t hd = 0; hd < H; ++hd) {
        T* h0 = s.h.data() + hd * N * P;
        for (std::size_t start = 0; start < L; start += chunk) {
            const std::size_t stop = std::min(L, start + chunk);
            T carry = T(1);  // prod_{r=start..t} a_r
            for (std::size_t t = start; t < stop; ++t) {
                const T a_t = in.decay[t * H + hd];
                carry *= a_t;
                const T* c = in.readout.data() + (t * H + hd) * N;
                T* yt = y.data() + (t * H + hd) * P;
                // Contribution of the carried state.
                for (std::size_t n = 0; n < N; ++n) {
                    const T w = carry * c[n];
                    const T* row = h0 + n * P;
                    for (std::size_t p = 0; p < P; ++p) yt[p] += w * row[p];
                }
                // Direct intra-chunk summation.
                T decay_prod = T(1);
                for (std::size_t src = t + 1; src-- > start;) {
                    if (src < t) decay_prod *= in.decay[(src + 1) * H + hd];
                    weight[src - start] = decay_prod;
                    const T* b = in.inject.data() + (src * H + hd) * N;
                    T cb = T(0);
                    for (std::size_t n = 0; n < N; ++n) cb += c[n] * b[n];
                    const T coef = decay_prod * cb;
                    const T* x = in.value.data() + (src * H + hd) * P;
                    for (std::size_t p = 0; p < P; ++p) yt[p] += coef * x[p];
                }
            }
            // State at the chunk boundary: carry * h0 + sum_s w(stop-1, s) b_s x_s^T.
            for (std::size_t i = 0; i < N * P; ++i) next_state[i] = carry * h0[i];
            for (std::size_t src = start; src < stop; ++src) {
                const T w = weight[src - start];
                const T* b = in.inject.data() + (src * H + hd) * N;
                const T* x = in.value.data() + (src * H + hd) * P;
                for (std::size_t n = 0; n < N; ++n) {
                    const T wb = w * b[n];
                    for (std::size_t p = 0; p < P; ++p) next_state[n * P + p] += wb * x[p];
                }
            }
            std::copy(next_state.begin(), next_state.end(), h0);
        }
    }
    return y;
}

template <typename T>
Tensor<T> selective_scan(const Tensor<T>& decay, const Tensor<T>& inject, const Tensor<T>& readout,
                         const Tensor<T>& value, std::size_t heads, ScanState<T>* state) {
    if (decay.rank() != 2 || inject.rank() != 2 || readout.rank() != 2 || value.rank() != 2 || heads == 0 ||
        decay.dim(1) != heads || inject.dim(1) % heads != 0 || value.dim(1) % heads != 0) {
        throw DimensionError("selective_scan: decay " + shape_to_string(decay.shape()) + ", inject " +
                             shape_to_string(inject.shape()) + ", value " + shape_to_string(value.shape()) +
                             " with " + std::to_string(heads) + " heads");
    }
    ScanDims d{decay.dim(0), heads, value.dim(1) / heads, inject.dim(1) / heads};
    ScanInputs<T> in{d, decay.data(), inject.data(), readout.data(), value.data()};
    in.validate();
    const std::size_t L = d.length, H = d.heads, N = d.state_dim, P = d.head_dim;

    ScanState<T> local(H, N, P);
    ScanState<T>& s = state ? *state : local;
    check_state(s, d);

    const bool record = will_record<T>({&decay, &inject, &readout, &value});
    // states[t] holds h_t for t = 0..L (index 0 is the initial state).
    std::shared_ptr<std::vector<T>> states;
    if (record) {
        states = std::make_shared<std::vector<T>>((L + 1) * H * N * P);
        std::copy(s.h.begin(), s.h.end(), states->begin());
    }
    std::vector<T> y(L * H * P);
    for (std::size_t t = 0; t < L; ++t) {
        scan_step<T>(s, in.decay.subspan(t * H, H), in.inject.subspan(t * H * N, H * N),
                     in.readout.subspan(t * H * N, H * N), in.value.subspan(t * H * P, H * P),
                     std::span<T>(y).subspan(t * H * P, H * P));
        if (record) std::copy(s.h.begin(), s.h.end(), states->begin() + static_cast<std::ptrdiff_t>((t + 1) * H * N * P));
    }
    if (!record) return Tensor<T>({L, H * P}, std::move(y));

    return make_op_result<T>(
        {L, H * P}, std::move(y), {decay, inject, readout, value},
        [decay, inject, readout, value, states, L, H, N, P](std::span<const T> dy) {
            auto a = decay.data(), b = inject.data(), c = readout.data(), x = value.data();
            T* ga = decay.requires_grad() ? decay.grad_buffer().data() : nullptr;
            T* gb = inject.requires_grad() ? inject.grad_buffer().data() : nullptr;
            T* gc = readout.requires_grad() ? readout.grad_buffer().data() : nullptr;
            T* gx = value.requires_grad() ? value.grad_buffer().data() : nullptr;
            const std::size_t S = H * N * P;
            std::vector<T> g(N * P);  // dL/dh_t accumulated backwards
            for (std::size_t hd = 0; hd < H; ++hd) {
                std::fill(g.begin(), g.end(), T(0));
                for (std::size_t t = L; t-- > 0;) {
                    if (t + 1 < L) {
                        const T a_next = a[(t + 1) * H + hd];
                        for (auto& v : g) v *= a_next;
                    }
                    const T* dyt = dy.data() + (t * H + hd) * P;
                    const T* ct = c.data() + (t * H + hd) * N;
                    const T* bt = b.data() + (t * H + hd) * N;
                    const T* xt = x.data() + (t * H + hd) * P;
                    const T* h_cur = states->data() + (t + 1) * S + hd * N * P;
                    const T* h_prev = states->data() + t * S + hd * N * P;
                    for (std::size_t n = 0; n < N; ++n) {
                        T* gn = g.data() + n * P;
                        for (std::size_t p = 0; p < P; ++p) gn[p] += ct[n] * dyt[p];
                        if (gc) gc[(t * H + hd) * N + n] += lane_dot(h_cur + n * P, dyt, P);
                    }
                    if (ga) ga[t * H + hd] += lane_dot(h_prev, g.data(), N * P);
                    for (std::size_t n = 0; n < N; ++n) {
                        const T* gn = g.data() + n * P;
                        if (gb) gb[(t * H + hd) * N + n] += lane_dot(gn, xt, P);
                        if (gx) {
                            T* gxt = gx + (t * H + hd) * P;
                            for (std::size_t p = 0; p < P; ++p) gxt[p] += gn[p] * bt[n];
                        }
                    }
                }
            }
        });
}

#define SSMG_INSTANTIATE_SCAN(T)                                                                               \
    template struct ScanInputs<T>;                                                                             \
    template std::vector<T> selective_scan_sequential<T>(const ScanInputs<T>&, ScanState<T>*);                 \
    template std::vector<T> selective_scan_chunked<T>(const ScanInputs<T>&, std::size_t, ScanState<T>*);       \
    template void scan_step<T>(ScanState<T>&, std::span<const T>, std::span<const T>, std::span<const T>,      \
                               std::span<const T>, std::span<T>);                                              \
    template Tensor<T> selective_scan<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                         std::size_t, ScanState<T>*);

SSMG_INSTANTIATE_SCAN(float)
SSMG_INSTANTIATE_SCAN(double)

}  // namespace ssmg
