#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ssmg/tensor.hpp"

namespace ssmg {

inline constexpr std::size_t kTextSlots = 4096;
inline constexpr std::size_t kDefaultTextDim = 768;
inline constexpr double kTextEmaDecay = 0.9;

// Lowercased alphanumeric runs of the caption.
std::vector<std::string> caption_words(std::string_view caption);

// Frozen stand-in for a pretrained text encoder. Each word selects one of kTextSlots
// rows (FNV-1a hash) of a table drawn from N(0, 0.02^2) by `seed`; a causal moving
// average e_0 = w_0, e_i = 0.9 e_{i-1} + 0.1 w_i adds word order. Returns
// [words x text_dim], never requiring a gradient. Empty captions raise EmptyConditionError.
template <typename T>
Tensor<T> encode_text(std::string_view caption, std::uint64_t seed, std::size_t text_dim = kDefaultTextDim);

// Table row for one slot.
std::vector<double> text_table_row(std::size_t slot, std::uint64_t seed, std::size_t text_dim);

}  // namespace ssmg
