#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssmg/tensor.hpp"

namespace ssmg {

// K stacked codebooks of V codewords each. Codeword 0 of every layer is the
// all-zeros vector and is never moved by fitting.
struct RvqCodebooks {
    std::size_t layers = 0;
    std::size_t codewords = 0;
    std::size_t dim = 0;
    // layers * codewords * dim values, layer-major then codeword-major.
    std::vector<float> values;

    const float* codeword(std::size_t layer, std::size_t index) const {
        return values.data() + (layer * codewords + index) * dim;
    }
    float* codeword(std::size_t layer, std::size_t index) { return values.data() + (layer * codewords + index) * dim; }
};

// K x L integer token matrix, layer-major.
struct TokenMatrix {
    std::size_t layers = 0;
    std::size_t length = 0;
    std::vector<int> indices;

    int at(std::size_t layer, std::size_t t) const { return indices[layer * length + t]; }
    int& at(std::size_t layer, std::size_t t) { return indices[layer * length + t]; }
    std::vector<int> layer(std::size_t k) const;
};

struct KappaError {
    std::size_t kappa = 0;
    double mse = 0.0;
};

// Layer-by-layer k-means on residuals. frames is [M x dim]; requires M >= V.
RvqCodebooks fit_rvq(const Tensor<double>& frames, std::size_t layers, std::size_t codewords, std::size_t iters,
                     std::uint64_t seed);

// Greedy residual quantization of every frame ([L x dim]).
TokenMatrix rvq_encode(const Tensor<double>& frames, const RvqCodebooks& books);

// Per frame, the sum of the selected codewords of layers 1..kappa.
Tensor<double> rvq_decode_prefix(const TokenMatrix& tokens, const RvqCodebooks& books, std::size_t kappa);

// MSE of decode_prefix against the frames for kappa = 1..K.
std::vector<KappaError> reconstruction_curve(const Tensor<double>& frames, const RvqCodebooks& books);

// Binary codebook file: "RVQ1", K, V, dim (u32 LE), then K*V*dim f32 LE.
void save_codebooks(const RvqCodebooks& books, const std::filesystem::path& path);
RvqCodebooks load_codebooks(const std::filesystem::path& path);
std::string encode_codebooks(const RvqCodebooks& books);
RvqCodebooks decode_codebooks(const std::string& bytes);

}  // namespace ssmg
