#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "ssmg/binary_io.hpp"
#include "ssmg/error.hpp"
#include "ssmg/rvq.hpp"
#include "test_util.hpp"

namespace ssmg {
namespace {

using testing::random_tensor;

// Greedy residual search written out independently of rvq_encode.
std::vector<int> brute_force_greedy(const std::vector<double>& frame, const RvqCodebooks& books) {
    std::vector<double> r = frame;
    std::vector<int> out;
    for (std::size_t k = 0; k < books.layers; ++k) {
        int best = -1;
        double best_d = std::numeric_limits<double>::max();
        for (std::size_t v = 0; v < books.codewords; ++v) {
            double d = 0;
            for (std::size_t j = 0; j < books.dim; ++j) {
                double diff = r[j] - books.values[(k * books.codewords + v) * books.dim + j];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(v);
            }
        }
        out.push_back(best);
        for (std::size_t j = 0; j < books.dim; ++j) r[j] -= books.values[(k * books.codewords + best) * books.dim + j];
    }
    return out;
}

Tensor<double> clustered_frames(std::vector<std::vector<double>>& means_out) {
    const std::vector<std::vector<double>> centres = {{10, 0}, {0, 10}, {-10, 0}, {0, -10}};
    Rng rng(3);
    std::vector<double> data;
    means_out.assign(4, std::vector<double>(2, 0.0));
    const int per = 25;
    for (int c = 0; c < 4; ++c) {
        for (int i = 0; i < per; ++i) {
            for (int j = 0; j < 2; ++j) {
                double v = centres[c][j] + 0.1 * standard_normal(rng);
                data.push_back(v);
                means_out[c][j] += v / per;
            }
        }
    }
    return Tensor<double>({100, 2}, std::move(data));
}

TEST(RvqFit, RecoversClusterMeans) {
    std::vector<std::vector<double>> means;
    auto frames = clustered_frames(means);
    auto books = fit_rvq(frames, 1, 5, 20, 11);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(books.codeword(0, 0)[j], 0.0f);
    for (const auto& m : means) {
        double best = std::numeric_limits<double>::max();
        for (std::size_t v = 1; v < 5; ++v) {
            const float* c = books.codeword(0, v);
            best = std::min(best, std::max(std::abs(c[0] - m[0]), std::abs(c[1] - m[1])));
        }
        EXPECT_LT(best, 1e-6);
    }
}

TEST(RvqFit, ZeroFramesGiveZeroCodebooks) {
    auto books = fit_rvq(Tensor<double>::zeros({64, 4}), 2, 8, 5, 1);
    for (float v : books.values) EXPECT_EQ(v, 0.0f);
}

TEST(RvqFit, DeterministicAndChecksData) {
    auto frames = random_tensor({200, 4}, 5);
    auto a = fit_rvq(frames, 3, 8, 10, 42);
    auto b = fit_rvq(frames, 3, 8, 10, 42);
    EXPECT_EQ(a.values, b.values);
    EXPECT_THROW(fit_rvq(random_tensor({5, 4}, 1), 1, 8, 10, 1), InsufficientDataError);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a.codeword(k, 0)[j], 0.0f);
}

TEST(RvqEncode, ExactCodewordAndZeroFrame) {
    auto books = fit_rvq(random_tensor({300, 4}, 8), 3, 16, 10, 2);
    std::vector<double> cw(books.codeword(0, 7), books.codeword(0, 7) + 4);
    auto tokens = rvq_encode(Tensor<double>({1, 4}, cw), books);
    EXPECT_EQ(tokens.layer(0), std::vector<int>{7});
    EXPECT_EQ(tokens.at(1, 0), 0);
    EXPECT_EQ(tokens.at(2, 0), 0);

    auto zero = rvq_encode(Tensor<double>::zeros({3, 4}), books);
    for (int idx : zero.indices) EXPECT_EQ(idx, 0);
    EXPECT_THROW(rvq_encode(Tensor<double>::zeros({3, 5}), books), DimensionError);
}

TEST(RvqEncode, MatchesBruteForceGreedy) {
    auto books = fit_rvq(random_tensor({100, 3}, 21), 2, 4, 10, 3);
    auto frames = random_tensor({50, 3}, 22);
    auto tokens = rvq_encode(frames, books);
    for (std::size_t t = 0; t < 50; ++t) {
        std::vector<double> f(frames.data().begin() + t * 3, frames.data().begin() + t * 3 + 3);
        auto expect = brute_force_greedy(f, books);
        EXPECT_EQ(tokens.at(0, t), expect[0]);
        EXPECT_EQ(tokens.at(1, t), expect[1]);
    }
}

TEST(RvqEncode, PermutationInvariant) {
    auto books = fit_rvq(random_tensor({200, 4}, 31), 3, 8, 10, 3);
    auto frames = random_tensor({20, 4}, 32);
    std::vector<double> reversed;
    for (std::size_t t = 20; t-- > 0;) {
        reversed.insert(reversed.end(), frames.data().begin() + t * 4, frames.data().begin() + t * 4 + 4);
    }
    auto a = rvq_encode(frames, books);
    auto b = rvq_encode(Tensor<double>({20, 4}, reversed), books);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t t = 0; t < 20; ++t) EXPECT_EQ(a.at(k, t), b.at(k, 19 - t));
}

TEST(RvqDecode, PrefixProperties) {
    auto frames = random_tensor({100, 4}, 41);
    auto books = fit_rvq(frames, 4, 16, 15, 4);
    auto tokens = rvq_encode(frames, books);

    TokenMatrix zeros{4, 5, std::vector<int>(20, 0)};
    auto decoded_zeros = rvq_decode_prefix(zeros, books, 4);
    for (double v : decoded_zeros.data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(rvq_decode_prefix(tokens, books, 0), ArgumentError);
    EXPECT_THROW(rvq_decode_prefix(tokens, books, 5), ArgumentError);

    auto one = rvq_decode_prefix(tokens, books, 1);
    auto two = rvq_decode_prefix(tokens, books, 2);
    auto all = rvq_decode_prefix(tokens, books, 4);
    for (std::size_t t = 0; t < 100; ++t) {
        double e1 = 0, e2 = 0, ek = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            const double f = frames.at(t, j);
            e1 += std::pow(one.at(t, j) - f, 2);
            e2 += std::pow(two.at(t, j) - f, 2);
            ek += std::pow(all.at(t, j) - f, 2);
        }
        EXPECT_LE(e2, e1 + 1e-12);
        EXPECT_LE(ek, e1 + 1e-12);
    }
}

TEST(RvqDecode, ExactReconstructionWhenResidualVanishes) {
    auto books = fit_rvq(random_tensor({200, 3}, 51), 2, 8, 10, 5);
    std::vector<double> f(3);
    for (std::size_t j = 0; j < 3; ++j) f[j] = double(books.codeword(0, 3)[j]) + double(books.codeword(1, 5)[j]);
    auto frame = Tensor<double>({1, 3}, f);
    auto tokens = rvq_encode(frame, books);
    auto rec = rvq_decode_prefix(tokens, books, 2);
    // Exact when greedy lands on (3, 5); any other greedy path leaves a smaller first-layer residual.
    if (tokens.at(0, 0) == 3 && tokens.at(1, 0) == 5) {
        for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(rec.at(0, j), f[j], 1e-12);
    }
}

TEST(ReconstructionCurve, NonIncreasingAndExactCases) {
    auto frames = random_tensor({100, 4}, 61);
    auto books = fit_rvq(random_tensor({400, 4}, 62), 4, 16, 15, 6);
    auto curve = reconstruction_curve(frames, books);
    ASSERT_EQ(curve.size(), 4u);
    for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i].mse, curve[i - 1].mse);

    for (const auto& row : reconstruction_curve(Tensor<double>::zeros({10, 4}), books)) EXPECT_EQ(row.mse, 0.0);

    std::vector<double> inside;
    for (std::size_t v : {2u, 5u, 9u})
        for (std::size_t j = 0; j < 4; ++j) inside.push_back(books.codeword(0, v)[j]);
    for (const auto& row : reconstruction_curve(Tensor<double>({3, 4}, inside), books)) EXPECT_EQ(row.mse, 0.0);
}

TEST(CodebookFile, RoundTripAndCorruption) {
    auto books = fit_rvq(random_tensor({100, 4}, 71), 2, 8, 5, 7);
    auto path = std::filesystem::temp_directory_path() / "ssmg_rvq_test.rvq";
    save_codebooks(books, path);
    auto loaded = load_codebooks(path);
    EXPECT_EQ(loaded.layers, 2u);
    EXPECT_EQ(loaded.codewords, 8u);
    EXPECT_EQ(loaded.dim, 4u);
    EXPECT_EQ(loaded.values, books.values);

    auto bytes = encode_codebooks(books);
    EXPECT_EQ(bytes.substr(0, 4), "RVQ1");
    EXPECT_EQ(bytes.size(), 16 + 2 * 8 * 4 * 4u);
    EXPECT_THROW(decode_codebooks(bytes.substr(0, bytes.size() - 3)), IntegrityError);
    EXPECT_THROW(decode_codebooks("XXXX" + bytes.substr(4)), IntegrityError);
    std::filesystem::remove(path);
}

}  // namespace
}  // namespace ssmg
