#include "ssmg/rvq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssmg/binary_io.hpp"
#include "ssmg/error.hpp"
#include "ssmg/random.hpp"

namespace ssmg {

namespace {

double squared_distance(const double* a, const float* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        const double d = a[j] - static_cast<double>(b[j]);
        acc += d * d;
    }
    return acc;
}

double squared_norm(const double* a, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) acc += a[j] * a[j];
    return acc;
}

// Nearest codeword in one layer; ties resolve to the lowest index.
std::size_t nearest(const double* point, const RvqCodebooks& books, std::size_t layer, double* best_out = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < books.codewords; ++v) {
        const double d = squared_distance(point, books.codeword(layer, v), books.dim);
        if (d < best_d) {
            best_d = d;
            best = v;
        }
    }
    if (best_out) *best_out = best_d;
    return best;
}

void check_frames(const Tensor<double>& frames, std::size_t dim, const char* op) {
    if (frames.rank() != 2 || frames.dim(1) != dim) {
        throw DimensionError(std::string(op) + ": frames " + shape_to_string(frames.shape()) +
                             " do not match codebook dimension " + std::to_string(dim));
    }
}

// Lloyd iterations for one layer with codeword 0 pinned at the origin.
void fit_layer(const std::vector<double>& residual, std::size_t count, RvqCodebooks& books, std::size_t layer,
               std::size_t iters, Rng& rng) {
    const std::size_t dim = books.dim, V = books.codewords;
    std::fill_n(books.codeword(layer, 0), dim, 0.0f);

    // Seeded farthest-point initialisation.
    std::vector<double> min_dist(count);
    for (std::size_t i = 0; i < count; ++i) min_dist[i] = squared_norm(&residual[i * dim], dim);
    auto place = [&](std::size_t v, std::size_t point) {
        float* c = books.codeword(layer, v);
        for (std::size_t j = 0; j < dim; ++j) c[j] = static_cast<float>(residual[point * dim + j]);
        for (std::size_t i = 0; i < count; ++i) {
            min_dist[i] = std::min(min_dist[i], squared_distance(&residual[i * dim], c, dim));
        }
    };
    if (V > 1) place(1, uniform_index(rng, count));
    for (std::size_t v = 2; v < V; ++v) {
        const auto far = static_cast<std::size_t>(std::max_element(min_dist.begin(), min_dist.end()) - min_dist.begin());
        place(v, far);
    }

    std::vector<std::size_t> assign(count, 0);
    std::vector<double> dist(count, 0.0);
    std::vector<double> sums(V * dim);
    std::vector<std::size_t> members(V);
    for (std::size_t it = 0; it < iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < count; ++i) {
            const auto a = nearest(&residual[i * dim], books, layer, &dist[i]);
            changed = changed || a != assign[i];
            assign[i] = a;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(members.begin(), members.end(), 0);
        for (std::size_t i = 0; i < count; ++i) {
            ++members[assign[i]];
            for (std::size_t j = 0; j < dim; ++j) sums[assign[i] * dim + j] += residual[i * dim + j];
        }
        for (std::size_t v = 1; v < V; ++v) {
            float* c = books.codeword(layer, v);
            if (members[v] == 0) {
                // Empty cluster: move it onto the point worst served by the current codebook.
                const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
                for (std::size_t j = 0; j < dim; ++j) c[j] = static_cast<float>(residual[far * dim + j]);
                dist[far] = 0.0;
                changed = true;
                continue;
            }
            for (std::size_t j = 0; j < dim; ++j) {
                c[j] = static_cast<float>(sums[v * dim + j] / static_cast<double>(members[v]));
            }
        }
        if (!changed && it > 0) break;
    }
    std::fill_n(books.codeword(layer, 0), dim, 0.0f);
}

}  // namespace

std::vector<int> TokenMatrix::layer(std::size_t k) const {
    return std::vector<int>(indices.begin() + static_cast<std::ptrdiff_t>(k * length),
                            indices.begin() + static_cast<std::ptrdiff_t>((k + 1) * length));
}

RvqCodebooks fit_rvq(const Tensor<double>& frames, std::size_t layers, std::size_t codewords, std::size_t iters,
                     std::uint64_t seed) {
    if (frames.rank() != 2) throw DimensionError("fit_rvq: frames must be [M x dim], got " + shape_to_string(frames.shape()));
    if (layers == 0 || codewords == 0) throw ArgumentError("fit_rvq: K and V must be positive");
    if (iters == 0) throw ArgumentError("fit_rvq: iters must be at least 1");
    const std::size_t count = frames.dim(0), dim = frames.dim(1);
    if (count < codewords) {
        throw InsufficientDataError("fit_rvq: " + std::to_string(count) + " frames cannot fit " +
                                    std::to_string(codewords) + " codewords");
    }

    RvqCodebooks books;
    books.layers = layers;
    books.codewords = codewords;
    books.dim = dim;
    books.values.assign(layers * codewords * dim, 0.0f);

    std::vector<double> residual(frames.data().begin(), frames.data().end());
    Rng rng(derive_seed(seed, "rvq"));
    for (std::size_t k = 0; k < layers; ++k) {
        fit_layer(residual, count, books, k, iters, rng);
        for (std::size_t i = 0; i < count; ++i) {
            double* r = &residual[i * dim];
            const float* c = books.codeword(k, nearest(r, books, k));
            for (std::size_t j = 0; j < dim; ++j) r[j] -= static_cast<double>(c[j]);
        }
    }
    return books;
}

TokenMatrix rvq_encode(const Tensor<double>& frames, const RvqCodebooks& books) {
    check_frames(frames, books.dim, "rvq_encode");
    const std::size_t len = frames.dim(0), dim = books.dim;
    TokenMatrix tokens{books.layers, len, std::vector<int>(books.layers * len)};
    std::vector<double> r(dim);
    auto in = frames.data();
    for (std::size_t t = 0; t < len; ++t) {
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(t * dim), dim, r.begin());
        double norm = squared_norm(r.data(), dim);
        for (std::size_t k = 0; k < books.layers; ++k) {
            const auto idx = nearest(r.data(), books, k);
            tokens.at(k, t) = static_cast<int>(idx);
            const float* c = books.codeword(k, idx);
            for (std::size_t j = 0; j < dim; ++j) r[j] -= static_cast<double>(c[j]);
#ifdef SSMG_CHECK_INVARIANTS
            const double next = squared_norm(r.data(), dim);
            if (next > norm * (1.0 + 1e-9) + 1e-18) {
                throw ContractError("rvq_encode: residual norm grew at layer " + std::to_string(k));
            }
            norm = next;
#endif
        }
        (void)norm;
    }
    return tokens;
}

Tensor<double> rvq_decode_prefix(const TokenMatrix& tokens, const RvqCodebooks& books, std::size_t kappa) {
    if (kappa < 1 || kappa > books.layers || kappa > tokens.layers) {
        throw ArgumentError("rvq_decode_prefix: kappa " + std::to_string(kappa) + " outside [1, " +
                            std::to_string(books.layers) + "]");
    }
    const std::size_t dim = books.dim;
    std::vector<double> out(tokens.length * dim, 0.0);
    for (std::size_t t = 0; t < tokens.length; ++t) {
        for (std::size_t k = 0; k < kappa; ++k) {
            const int idx = tokens.at(k, t);
            if (idx < 0 || static_cast<std::size_t>(idx) >= books.codewords) {
                throw IndexError("rvq_decode_prefix: token " + std::to_string(idx) + " outside the codebook");
            }
            const float* c = books.codeword(k, static_cast<std::size_t>(idx));
            for (std::size_t j = 0; j < dim; ++j) out[t * dim + j] += static_cast<double>(c[j]);
        }
    }
    return Tensor<double>({tokens.length, dim}, std::move(out));
}

std::vector<KappaError> reconstruction_curve(const Tensor<double>& frames, const RvqCodebooks& books) {
    const auto tokens = rvq_encode(frames, books);
    auto ref = frames.data();
    std::vector<KappaError> curve;
    for (std::size_t kappa = 1; kappa <= books.layers; ++kappa) {
        auto rec = rvq_decode_prefix(tokens, books, kappa);
        auto r = rec.data();
        double acc = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) acc += (r[i] - ref[i]) * (r[i] - ref[i]);
        curve.push_back({kappa, acc / static_cast<double>(r.size())});
    }
    return curve;
}

std::string encode_codebooks(const RvqCodebooks& books) {
    ByteWriter w;
    w.bytes("RVQ1");
    w.u32(static_cast<std::uint32_t>(books.layers));
    w.u32(static_cast<std::uint32_t>(books.codewords));
    w.u32(static_cast<std::uint32_t>(books.dim));
    w.f32_array(books.values);
    return w.take();
}

RvqCodebooks decode_codebooks(const std::string& bytes) {
    ByteReader r(bytes);
    r.expect_magic("RVQ1", "codebook file");
    RvqCodebooks books;
    books.layers = r.u32();
    books.codewords = r.u32();
    books.dim = r.u32();
    const std::size_t n = books.layers * books.codewords * books.dim;
    if (n == 0) throw IntegrityError("codebook file: empty codebooks");
    if (r.remaining() != n * 4) {
        throw IntegrityError("codebook file: expected " + std::to_string(n * 4) + " payload bytes, found " +
                             std::to_string(r.remaining()));
    }
    books.values.resize(n);
    r.f32_array(books.values);
    for (float v : books.values) {
        if (!std::isfinite(v)) throw IntegrityError("codebook file: non-finite codeword entry");
    }
    return books;
}

void save_codebooks(const RvqCodebooks& books, const std::filesystem::path& path) {
    write_file(path, encode_codebooks(books));
}

RvqCodebooks load_codebooks(const std::filesystem::path& path) { return decode_codebooks(read_file(path)); }

}  // namespace ssmg
