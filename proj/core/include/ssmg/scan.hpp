#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssmg/tensor.hpp"

namespace ssmg {

struct ScanDims {
    std::size_t length = 0;
    std::size_t heads = 0;
    std::size_t head_dim = 0;   // P
    std::size_t state_dim = 0;  // N
};

// Views over one sequence of scan inputs, all row-major with time as the outer axis:
//   decay   [L x H]       a_t per head, in [0, 1]
//   inject  [L x H x N]   b_t per head
//   readout [L x H x N]   c_t per head
//   value   [L x H x P]   x_t per head
template <typename T>
struct ScanInputs {
    ScanDims dims;
    std::span<const T> decay;
    std::span<const T> inject;
    std::span<const T> readout;
    std::span<const T> value;

    void validate() const;
};

// Per-head recurrent state h in R^{N x P}, laid out [H x N x P]. Zero-initialized.
template <typename T>
struct ScanState {
    std::size_t heads = 0, state_dim = 0, head_dim = 0;
    std::vector<T> h;

    ScanState() = default;
    ScanState(std::size_t heads_, std::size_t state_dim_, std::size_t head_dim_)
        : heads(heads_), state_dim(state_dim_), head_dim(head_dim_), h(heads_ * state_dim_ * head_dim_, T(0)) {}
};

// Reference recurrence, per head:  h_t = a_t h_{t-1} + b_t x_t^T,  y_t = h_t^T c_t.
// Returns y as [L x H x P]. When `state` is given it supplies h_0 and receives h_L.
template <typename T>
std::vector<T> selective_scan_sequential(const ScanInputs<T>& in, ScanState<T>* state = nullptr);

// Same result computed chunk by chunk: direct summation inside each chunk of `chunk`
// steps, with the state carried across chunk boundaries.
template <typename T>
std::vector<T> selective_scan_chunked(const ScanInputs<T>& in, std::size_t chunk, ScanState<T>* state = nullptr);

// One recurrence step for a single time index (used by rollouts that inspect the state).
template <typename T>
void scan_step(ScanState<T>& state, std::span<const T> decay, std::span<const T> inject, std::span<const T> readout,
               std::span<const T> value, std::span<T> out);

// Differentiable scan over tensors decay[L x H], inject[L x H*N], readout[L x H*N],
// value[L x H*P]; returns [L x H*P]. `state` (optional) provides h_0 as a constant and
// receives the final state.
template <typename T>
Tensor<T> selective_scan(const Tensor<T>& decay, const Tensor<T>& inject, const Tensor<T>& readout,
                         const Tensor<T>& value, std::size_t heads, ScanState<T>* state = nullptr);

}  // namespace ssmg
