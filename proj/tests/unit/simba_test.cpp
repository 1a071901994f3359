#include <gtest/gtest.h>

#include <algorithm>

#include "ssmg/error.hpp"
#include "ssmg/grad_check.hpp"
#include "ssmg/ops.hpp"
#include "ssmg/simba.hpp"
#include "test_util.hpp"

namespace ssmg {
namespace {

SsmConfig tiny_config() {
    SsmConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.head_dim = 4;
    cfg.state_dim = 3;
    cfg.conv_width = 4;
    cfg.dropout = 0.0;
    return cfg;
}

template <typename T>
void zero_out(const Tensor<T>& t) {
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), T(0));
}

TEST(SsmConfig, Validation) {
    SsmConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.d_inner(), 128u);
    cfg.d_model = 1024;
    cfg.state_dim = 512;
    EXPECT_NO_THROW(cfg.validate());
    cfg.dropout = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = SsmConfig{};
    cfg.n_heads = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MambaMix, ZeroInputGivesZeroOutput) {
    ParameterSet<double> params;
    Rng rng(1);
    MambaMix<double> mix(tiny_config(), params, "mix", rng);
    auto y = mix.forward(Tensor<double>::zeros({5, 8}));
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(MambaMix, DecayStaysInsideUnitInterval) {
    ParameterSet<double> params;
    Rng rng(2);
    MambaMix<double> mix(tiny_config(), params, "mix", rng);
    auto a_log = params.get("mix.a_log").data();
    EXPECT_DOUBLE_EQ(a_log.front(), 0.0);
    EXPECT_NEAR(a_log.back(), std::log(16.0), 1e-12);
    for (double v : params.get("mix.dt_bias").data()) {
        const double dt = std::log1p(std::exp(v));
        EXPECT_GE(dt, 1e-3 - 1e-12);
        EXPECT_LE(dt, 1e-1 + 1e-12);
    }
}

TEST(MambaMix, StatefulStepsMatchFullSequence) {
    SsmConfig cfg;  // desk defaults
    cfg.dropout = 0.0;
    ParameterSet<float> params;
    Rng rng(3);
    MambaMix<float> mix(cfg, params, "mix", rng);
    const std::size_t L = 24;
    auto u = testing::random_tensor<float>({L, cfg.d_model}, 4);
    auto full = mix.forward(u);

    MambaMixState<float> state(cfg);
    std::vector<float> stepped;
    // Mixed chunk sizes, including single steps.
    const std::size_t cuts[] = {0, 1, 2, 7, 8, 15, 24};
    for (std::size_t i = 0; i + 1 < std::size(cuts); ++i) {
        auto y = mix.forward(slice(u, 0, cuts[i], cuts[i + 1]), &state);
        stepped.insert(stepped.end(), y.data().begin(), y.data().end());
    }
    EXPECT_EQ(state.consumed, L);
    EXPECT_LT(testing::max_abs_diff<float>(full.data(), stepped), 1e-6);
}

TEST(MambaMix, Causality) {
    ParameterSet<double> params;
    Rng rng(5);
    MambaMix<double> mix(tiny_config(), params, "mix", rng);
    const std::size_t L = 12;
    auto u = testing::random_tensor<double>({L, 8}, 6);
    auto base = mix.forward(u);
    Rng pick(7);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t pos = uniform_index(pick, L);
        auto v = u.clone();
        v.mutable_data()[pos * 8 + uniform_index(pick, 8)] += 1.0;
        auto y = mix.forward(v);
        for (std::size_t t = 0; t < pos; ++t) {
            for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(y.at(t, j), base.at(t, j)) << "t=" << t << " pos=" << pos;
        }
        double changed = 0;
        for (std::size_t j = 0; j < 8; ++j) changed += std::abs(y.at(pos, j) - base.at(pos, j));
        EXPECT_GT(changed, 0.0);
    }
}

TEST(SimbaBlock, ZeroBranchOutputsGiveIdentity) {
    ParameterSet<double> params;
    Rng rng(8);
    SimbaBlock<double> block(tiny_config(), params, "b0", rng);
    zero_out(block.mix().out_weight());
    zero_out(block.mlp().out_weight());
    auto u = testing::random_tensor<double>({6, 8}, 9);
    auto y = block.forward(u, RunMode{});
    EXPECT_EQ(testing::max_abs_diff<double>(u.data(), y.data()), 0.0);
}

TEST(SimbaBlock, CausalityThroughBlock) {
    auto cfg = tiny_config();
    ParameterSet<double> params;
    Rng rng(10);
    SimbaBlock<double> block(cfg, params, "b0", rng);
    const std::size_t L = 10;
    auto u = testing::random_tensor<double>({L, 8}, 11);
    auto base = block.forward(u, RunMode{});
    Rng pick(12);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t pos = uniform_index(pick, L);
        auto v = u.clone();
        v.mutable_data()[pos * 8 + uniform_index(pick, 8)] -= 0.5;
        auto y = block.forward(v, RunMode{});
        for (std::size_t t = 0; t < pos * 8; ++t) ASSERT_EQ(y.at(t), base.at(t));
    }
}

TEST(SimbaBlock, GradientMatchesFiniteDifferences) {
    auto cfg = tiny_config();
    ParameterSet<double> params;
    Rng rng(13);
    SimbaBlock<double> block(cfg, params, "b0", rng);
    // Move dt and A away from their init so the decay gradient is not vanishingly small.
    Rng perturb(21);
    for (const char* name : {"b0.mix.dt_bias", "b0.mix.a_log", "b0.mix.conv_b", "b0.mix.out_bias", "b0.mlp.b1"}) {
        for (auto& v : params.get(name).mutable_data()) v = uniform(perturb, -1.0, 1.0);
    }
    auto u = testing::random_tensor<double>({4, 8}, 14, 1.0, true);
    auto w = testing::random_tensor<double>({4, 8}, 15);
    std::vector<Tensor<double>> inputs{u};
    for (const auto& [name, t] : params.entries()) inputs.push_back(t);
    auto res = grad_check([&] { return sum(mul(block.forward(u, RunMode{}), w)); }, inputs);
    EXPECT_LT(res.max_relative_error, 1e-5) << "worst input " << res.worst_input << " idx " << res.worst_index << " a=" << res.analytic << " n=" << res.numeric;
}

TEST(SimbaBlock, DropoutOnlyInTraining) {
    auto cfg = tiny_config();
    cfg.dropout = 0.5;
    ParameterSet<double> params;
    Rng rng(16);
    SimbaBlock<double> block(cfg, params, "b0", rng);
    auto u = testing::random_tensor<double>({5, 8}, 17);
    auto a = block.forward(u, RunMode{});
    auto b = block.forward(u, RunMode{});
    EXPECT_EQ(testing::max_abs_diff<double>(a.data(), b.data()), 0.0);
    Rng drop(18);
    auto c = block.forward(u, RunMode{true, &drop});
    EXPECT_GT(testing::max_abs_diff<double>(a.data(), c.data()), 0.0);
}

TEST(SimbaBlock, StatefulBlockMatchesFullSequence) {
    SsmConfig cfg;
    cfg.dropout = 0.3;
    ParameterSet<float> params;
    Rng rng(19);
    SimbaBlock<float> block(cfg, params, "b0", rng);
    auto u = testing::random_tensor<float>({16, cfg.d_model}, 20);
    auto full = block.forward(u, RunMode{});
    SimbaBlockState<float> state(cfg);
    std::vector<float> stepped;
    for (std::size_t t = 0; t < 16; ++t) {
        auto y = block.forward(slice(u, 0, t, t + 1), RunMode{}, &state);
        stepped.insert(stepped.end(), y.data().begin(), y.data().end());
    }
    EXPECT_LT(testing::max_abs_diff<float>(full.data(), stepped), 1e-6);
}

}  // namespace
}  // namespace ssmg
