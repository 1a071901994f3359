#include <gtest/gtest.h>

#include <cmath>

#include "ssmg/error.hpp"
#include "ssmg/grad_check.hpp"
#include "ssmg/ops.hpp"
#include "test_util.hpp"

namespace ssmg {
namespace {

using testing::random_tensor;
using TD = Tensor<double>;

// Weighted sum with fixed random weights so every coordinate has an O(1) gradient.
TD project(const TD& y, std::uint64_t seed) {
    return sum(mul(y, random_tensor(y.shape(), seed ^ 0xabcdef)));
}

TEST(Matmul, IdentityZeroAndHandCase) {
    TD eye({2, 2}, {1, 0, 0, 1});
    TD m({2, 2}, {1, 2, 3, 4});
    auto id = matmul(eye, m);
    EXPECT_EQ(std::vector<double>(id.data().begin(), id.data().end()), (std::vector<double>{1, 2, 3, 4}));

    auto zero = matmul(TD::zeros({2, 2}), m);
    for (double v : zero.data()) EXPECT_EQ(v, 0.0);

    auto prod = matmul(m, TD({2, 2}, {5, 6, 7, 8}));
    EXPECT_EQ(std::vector<double>(prod.data().begin(), prod.data().end()), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    try {
        matmul(TD::zeros({2, 3}), TD::zeros({2, 3}));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
        EXPECT_EQ(e.code(), "E_SHAPE");
    }
}

TEST(SoftmaxCrossEntropy, ReferenceValues) {
    std::vector<int> one{5};
    auto uniform = softmax_cross_entropy(TD::zeros({1, 64}), one, -1);
    EXPECT_NEAR(uniform.item(), std::log(64.0), 1e-12);
    EXPECT_NEAR(uniform.item(), 4.15888, 1e-5);

    std::vector<double> peaked(8, 0.0);
    peaked[3] = 1000.0;
    std::vector<int> three{3};
    EXPECT_LT(softmax_cross_entropy(TD({1, 8}, peaked), three, -1).item(), 1e-6);

    std::vector<int> two{2};
    EXPECT_NEAR(softmax_cross_entropy(TD({1, 3}, {1, 2, 3}), two, -1).item(), 0.40761, 1e-5);
}

TEST(SoftmaxCrossEntropy, IgnoreIndexAndErrors) {
    std::vector<int> all_ignored{-100, -100};
    CrossEntropyInfo info;
    EXPECT_EQ(softmax_cross_entropy(random_tensor({2, 4}, 1), all_ignored, -100, &info).item(), 0.0);
    EXPECT_EQ(info.counted, 0u);

    std::vector<int> bad{4};
    EXPECT_THROW(softmax_cross_entropy(TD::zeros({1, 4}), bad, -100), IndexError);
}

TEST(RmsNorm, ReferenceValues) {
    auto c = rms_norm(TD::full({1, 5}, 2.5), TD::full({5}, 1.0), 1e-12);
    for (double v : c.data()) EXPECT_NEAR(v, 1.0, 1e-9);

    auto z = rms_norm(TD::zeros({1, 4}), TD::full({4}, 1.0), 1e-6);
    for (double v : z.data()) EXPECT_EQ(v, 0.0);

    auto r = rms_norm(TD({1, 2}, {3, 4}), TD({2}, {1, 1}), 0.0);
    EXPECT_NEAR(r.at(0), 3.0 / std::sqrt(12.5), 1e-12);
    EXPECT_NEAR(r.at(1), 4.0 / std::sqrt(12.5), 1e-12);
    EXPECT_NEAR(r.at(0), 0.8485, 1e-4);
    EXPECT_NEAR(r.at(1), 1.1314, 1e-4);
}

TEST(Silu, ReferenceValues) {
    auto y = silu(TD({3}, {0.0, 30.0, 1.0}));
    EXPECT_EQ(y.at(0), 0.0);
    EXPECT_NEAR(y.at(1), 30.0, 1e-9);
    EXPECT_NEAR(y.at(2), 0.731059, 1e-6);
}

TEST(Backward, LinearAndQuadraticCases) {
    auto x = random_tensor({3, 2}, 4, 1.0, true);
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        backward(sum(x));
    }
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);

    TD v({3}, {1, 2, 3}, true);
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        backward(sum(mul(v, v)));
    }
    EXPECT_EQ(std::vector<double>(v.grad().begin(), v.grad().end()), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, DetachedTensorGetsNoGradient) {
    auto x = random_tensor({4}, 2, 1.0, true);
    auto d = x.detach();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(sum(add(mul(d, d), x)));
    EXPECT_FALSE(d.has_grad());
    EXPECT_TRUE(x.has_grad());
}

TEST(Backward, RepeatedCallsAccumulate) {
    TD v({3}, {1, 2, 3}, true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto loss = sum(mul(v, v));
    tape.backward(loss);
    tape.backward(loss);
    EXPECT_EQ(std::vector<double>(v.grad().begin(), v.grad().end()), (std::vector<double>{4, 8, 12}));
}

TEST(Backward, NonScalarIsContractError) {
    auto x = random_tensor({2, 2}, 3, 1.0, true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto y = mul(x, x);
    EXPECT_THROW(tape.backward(y), ContractError);
    EXPECT_THROW(tape.backward(TD::scalar(1.0)), ContractError);
}

TEST(Backward, TensorConsumedTwiceAccumulatesBothPaths) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto x = random_tensor({3, 4}, seed);
        auto w = random_tensor({4, 4}, seed + 100);
        auto f = [&](const TD& in) { return project(add(matmul(in, w), tanh(in)), seed); };
        EXPECT_LT(grad_check(f, x), 1e-5);
    }
}

TEST(GradCheck, SumIsExact) {
    auto x = random_tensor({5, 3}, 9);
    EXPECT_LT(grad_check([](const TD& in) { return sum(in); }, x), 1e-10);
}

TEST(GradCheck, CrossEntropyOnRandomLogits) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        std::vector<int> targets(4);
        for (auto& t : targets) t = static_cast<int>(uniform_index(rng, 8));
        targets[1] = -1;
        auto x = random_tensor({4, 8}, seed);
        EXPECT_LT(grad_check([&](const TD& in) { return softmax_cross_entropy(in, targets, -1); }, x), 1e-5);
    }
}

TEST(GradCheck, RmsNormMatmulSum) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto x = random_tensor({3, 6}, seed);
        auto gain = random_tensor({6}, seed + 1);
        auto w = random_tensor({6, 5}, seed + 2);
        auto r = grad_check([&] { return sum(matmul(rms_norm(x, gain, 1e-6), w)); }, {x, gain, w});
        EXPECT_LT(r.max_relative_error, 1e-5) << "seed " << seed;
    }
}

// Every differentiable op, checked over ten seeds.
TEST(GradCheck, AllOps) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto a = random_tensor({3, 4}, seed);
        auto b = random_tensor({3, 4}, seed + 11);
        auto row = random_tensor({4}, seed + 12);
        auto w = random_tensor({4, 2}, seed + 13);
        auto table = random_tensor({6, 4}, seed + 14);
        auto kernel = random_tensor({3, 4}, seed + 15);
        auto bias = random_tensor({4}, seed + 16);
        std::vector<int> ids{5, 0, 5, 2};

        struct Case {
            const char* name;
            std::function<TD()> f;
            std::vector<TD> inputs;
        };
        std::vector<Case> cases = {
            {"add", [&] { return project(add(a, b), seed); }, {a, b}},
            {"sub", [&] { return project(sub(a, b), seed); }, {a, b}},
            {"mul", [&] { return project(mul(a, b), seed); }, {a, b}},
            {"scale", [&] { return project(scale(a, 0.7), seed); }, {a}},
            {"add_row", [&] { return project(add_row(a, row), seed); }, {a, row}},
            {"mul_row", [&] { return project(mul_row(a, row), seed); }, {a, row}},
            {"matmul", [&] { return project(matmul(a, w), seed); }, {a, w}},
            {"linear", [&] { return project(linear(a, w, random_tensor({2}, seed)), seed); }, {a, w}},
            {"transpose", [&] { return project(transpose(a), seed); }, {a}},
            {"exp", [&] { return project(exp(a), seed); }, {a}},
            {"sigmoid", [&] { return project(sigmoid(a), seed); }, {a}},
            {"tanh", [&] { return project(tanh(a), seed); }, {a}},
            {"silu", [&] { return project(silu(a), seed); }, {a}},
            {"softplus", [&] { return project(softplus(a), seed); }, {a}},
            {"mean", [&] { return mean(mul(a, a)); }, {a}},
            {"embedding", [&] { return project(embedding(table, ids), seed); }, {table}},
            {"slice0", [&] { return project(slice(a, 0, 1, 3), seed); }, {a}},
            {"slice1", [&] { return project(slice(a, 1, 1, 3), seed); }, {a}},
            {"concat0", [&] { return project(concat<double>({a, b}, 0), seed); }, {a, b}},
            {"concat1", [&] { return project(concat<double>({a, b, a}, 1), seed); }, {a, b}},
            {"repeat_columns", [&] { return project(repeat_columns(a, 3), seed); }, {a}},
            {"rms_norm", [&] { return project(rms_norm(a, row, 1e-6), seed); }, {a, row}},
            {"causal_conv1d", [&] { return project(causal_conv1d(a, kernel, bias), seed); }, {a, kernel, bias}},
        };
        for (const auto& c : cases) {
            auto r = grad_check(c.f, c.inputs);
            EXPECT_LT(r.max_relative_error, 1e-5) << c.name << " seed " << seed;
        }
    }
}

TEST(Dropout, EvalIsIdentityTrainIsUnbiased) {
    auto x = random_tensor({4, 4}, 5);
    auto same = dropout(x, 0.3, false, nullptr);
    EXPECT_TRUE(same.same_storage(x));

    Rng rng(7);
    const std::size_t n = 100000;
    auto ones = TD::full({n}, 1.0);
    auto dropped = dropout(ones, 0.3, true, &rng);
    double total = 0.0;
    for (double v : dropped.data()) total += v;
    EXPECT_NEAR(total / n, 1.0, 0.01);

    EXPECT_THROW(dropout(x, 1.0, true, &rng), ArgumentError);
}

TEST(Precision, FloatForwardMatchesDouble) {
    auto a = random_tensor({8, 16}, 1);
    auto w = random_tensor({16, 8}, 2, 0.25);
    auto g = random_tensor({16}, 3);
    auto f64 = silu(matmul(rms_norm(a, g, 1e-6), w));
    auto f32 = silu(matmul(rms_norm(tensor_cast<float>(a), tensor_cast<float>(g), 1e-6f), tensor_cast<float>(w)));
    for (std::size_t i = 0; i < f64.size(); ++i) {
        EXPECT_LE(std::abs(f64.at(i) - f32.at(i)), 1e-4 * std::max(1.0, std::abs(f64.at(i))));
    }
}

TEST(Tensor, ShapeInvariant) {
    EXPECT_THROW(TD({2, 3}, std::vector<double>(5)), DimensionError);
    EXPECT_THROW(TD::zeros({2, 0}), DimensionError);
}

}  // namespace
}  // namespace ssmg
