#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ssmg/binary_io.hpp"
#include "ssmg/checkpoint.hpp"
#include "ssmg/error.hpp"
#include "ssmg/lm.hpp"
#include "ssmg/ops.hpp"
#include "ssmg/text_encoder.hpp"
#include "test_util.hpp"

namespace ssmg {
namespace {

using testing::max_abs_diff;

LmConfig small_config(Arch arch) { return testing::small_lm_config(arch); }

template <typename T>
void randomize_head(const LanguageModel<T>& model, std::uint64_t seed) {
    Rng rng(seed);
    for (const char* name : {"head.w", "head.b"}) {
        for (auto& v : model.params().get(name).mutable_data()) v = static_cast<T>(0.5 * standard_normal(rng));
    }
}

std::vector<int> random_tokens(std::size_t n, int vocab, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> out(n);
    for (auto& t : out) t = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(vocab)));
    return out;
}

class BothArchs : public ::testing::TestWithParam<Arch> {};

TEST(TextEncoder, DeterministicAndFrozen) {
    auto a = encode_text<double>("A slow, minor piece in a low register", 7);
    auto b = encode_text<double>("A slow, minor piece in a low register", 7);
    EXPECT_EQ(a.shape(), (Shape{8, kDefaultTextDim}));
    EXPECT_EQ(max_abs_diff<double>(a.data(), b.data()), 0.0);
    EXPECT_FALSE(a.requires_grad());
}

TEST(TextEncoder, SingleWordIsTableRow) {
    auto e = encode_text<double>("  Uptempo! ", 3, 32);
    ASSERT_EQ(e.shape(), (Shape{1, 32}));
    auto row = text_table_row(fnv1a64("uptempo") % kTextSlots, 3, 32);
    EXPECT_EQ(max_abs_diff<double>(e.data(), row), 0.0);
    double sq = 0;
    for (double v : text_table_row(11, 3, 4096)) sq += v * v;
    EXPECT_NEAR(std::sqrt(sq / 4096), 0.02, 0.002);
}

TEST(TextEncoder, ChangeAffectsOnlyLaterPositions) {
    auto a = encode_text<double>("dense major melody high", 1, 16);
    auto b = encode_text<double>("dense minor melody high", 1, 16);
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(a.at(0, j), b.at(0, j));
    for (std::size_t i = 1; i < 4; ++i) {
        double diff = 0;
        for (std::size_t j = 0; j < 16; ++j) diff += std::abs(a.at(i, j) - b.at(i, j));
        EXPECT_GT(diff, 0.0) << "position " << i;
    }
}

TEST(TextEncoder, EmptyCaptionRejected) {
    EXPECT_THROW(encode_text<double>("   ", 1), EmptyConditionError);
    EXPECT_THROW(encode_text<double>("", 1), EmptyConditionError);
    EXPECT_THROW(encode_text<double>("?!", 1), EmptyConditionError);
}

TEST(LmConfig, ArchNamesAndValidation) {
    EXPECT_EQ(parse_arch("prefix_simba"), Arch::PrefixSimba);
    EXPECT_EQ(parse_arch("cross_transformer"), Arch::CrossTransformer);
    try {
        parse_arch("lstm");
        FAIL();
    } catch (const ArgumentError& e) {
        EXPECT_NE(std::string(e.what()).find("prefix_simba, cross_transformer"), std::string::npos);
    }
    LmConfig cfg;
    EXPECT_EQ(cfg.bos(), 64);
    EXPECT_EQ(cfg.pad(), 65);
    EXPECT_EQ(cfg.classes(), 66u);
    EXPECT_NO_THROW(LmConfig::paper_scale().validate());
    cfg.attn_heads = 5;
    cfg.arch = Arch::CrossTransformer;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(LmConfig, KeyValueRoundTrip) {
    auto cfg = small_config(Arch::CrossTransformer);
    cfg.dropout = 0.125;
    KeyValues kv;
    cfg.write(kv);
    auto parsed = KeyValues::parse(kv.to_text());
    auto back = LmConfig::read(parsed);
    parsed.finish();
    EXPECT_EQ(back.arch, cfg.arch);
    EXPECT_EQ(back.d_model, cfg.d_model);
    EXPECT_EQ(back.dropout, cfg.dropout);
    auto bad = KeyValues::parse("d_model = 8\ncolour = red\n");
    LmConfig::read(bad);
    EXPECT_THROW(bad.finish(), ConfigError);
}

TEST_P(BothArchs, UntrainedLossIsLogOfClassCount) {
    LmConfig cfg;  // desk defaults, vocab 64
    cfg.arch = GetParam();
    LanguageModel<double> model(cfg, 1);
    auto text = model.encode_caption("fast dense minor low");
    auto tokens = random_tokens(20, 64, 2);
    EXPECT_NEAR(model.loss(tokens, text, RunMode{}).item(), std::log(66.0), 1e-12);
}

TEST_P(BothArchs, LogitShapesAndBootstrapRow) {
    auto cfg = small_config(GetParam());
    LanguageModel<double> model(cfg, 3);
    auto text = model.encode_caption("slow sparse major");
    auto tokens = random_tokens(7, 16, 4);
    EXPECT_EQ(model.forward_logits(tokens, text, RunMode{}).shape(), (Shape{8, 18}));
    EXPECT_EQ(model.forward_logits({}, text, RunMode{}).shape(), (Shape{1, 18}));
    EXPECT_EQ(model.sequence_logits(tokens, text, RunMode{}).shape(), (Shape{7, 18}));
}

TEST_P(BothArchs, TextReachesLogits) {
    auto cfg = small_config(GetParam());
    LanguageModel<double> model(cfg, 5);
    randomize_head(model, 6);
    auto tokens = random_tokens(6, 16, 7);
    auto a = model.forward_logits(tokens, model.encode_caption("slow sparse major"), RunMode{});
    auto b = model.forward_logits(tokens, model.encode_caption("fast dense minor"), RunMode{});
    for (std::size_t r = 0; r < 7; ++r) {
        double diff = 0;
        for (std::size_t c = 0; c < 18; ++c) diff += std::abs(a.at(r, c) - b.at(r, c));
        EXPECT_GT(diff, 0.0) << "row " << r;
    }
}

TEST_P(BothArchs, TokenChangesNeverReachEarlierLogits) {
    auto cfg = small_config(GetParam());
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        LanguageModel<double> model(cfg, seed);
        randomize_head(model, seed + 10);
        auto text = model.encode_caption("medium tempo pentatonic melody");
        auto tokens = random_tokens(12, 16, seed + 20);
        auto base = model.forward_logits(tokens, text, RunMode{});
        Rng pick(seed + 30);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t t = uniform_index(pick, tokens.size());
            auto changed = tokens;
            changed[t] = (changed[t] + 1 + static_cast<int>(uniform_index(pick, 15))) % 16;
            auto y = model.forward_logits(changed, text, RunMode{});
            // Row r sees BOS and tokens[0..r), so rows 0..t are unaffected.
            for (std::size_t i = 0; i < (t + 1) * 18; ++i) ASSERT_EQ(y.at(i), base.at(i)) << "t=" << t;
            double diff = 0;
            for (std::size_t c = 0; c < 18; ++c) diff += std::abs(y.at(t + 1, c) - base.at(t + 1, c));
            EXPECT_GT(diff, 0.0);
        }
    }
}

TEST_P(BothArchs, ContextLengthEnforced) {
    auto cfg = small_config(GetParam());
    cfg.max_len = 10;
    LanguageModel<double> model(cfg, 1);
    auto text = model.encode_caption("one two three");
    const std::size_t room = GetParam() == Arch::PrefixSimba ? 10 - 3 - 1 : 10 - 1;
    EXPECT_NO_THROW(model.forward_logits(random_tokens(room, 16, 1), text, RunMode{}));
    EXPECT_THROW(model.forward_logits(random_tokens(room + 1, 16, 1), text, RunMode{}), ContextLengthError);
}

TEST_P(BothArchs, PaddingTargetsGetNoGradient) {
    auto cfg = small_config(GetParam());
    LanguageModel<double> model(cfg, 8);
    randomize_head(model, 9);
    auto text = model.encode_caption("dense fast");
    std::vector<int> tokens = random_tokens(6, 16, 10);
    tokens.insert(tokens.end(), {cfg.pad(), cfg.pad(), cfg.pad()});
    Tape<double> tape;
    TapeScope<double> scope(tape);
    LossInfo info;
    auto loss = model.loss(tokens, text, RunMode{}, &info);
    EXPECT_EQ(info.counted, 6u);
    backward(loss);
    auto grad = model.params().get("token_embedding").grad();
    for (std::size_t j = 0; j < cfg.d_model; ++j) EXPECT_EQ(grad[std::size_t(cfg.pad()) * cfg.d_model + j], 0.0);
    EXPECT_FALSE(text.has_grad());
}

TEST_P(BothArchs, AllPaddingIsFlaggedZeroLoss) {
    auto cfg = small_config(GetParam());
    LanguageModel<double> model(cfg, 8);
    std::vector<int> tokens(4, cfg.pad());
    LossInfo info;
    EXPECT_EQ(model.loss(tokens, model.encode_caption("x"), RunMode{}, &info).item(), 0.0);
    EXPECT_TRUE(info.all_padding);
}

TEST_P(BothArchs, IncrementalDecodingMatchesFullForward) {
    LmConfig cfg;  // desk defaults at 32-bit
    cfg.arch = GetParam();
    LanguageModel<float> model(cfg, 11);
    randomize_head(model, 12);
    auto text = model.encode_caption("a quick minor tune with dense notes in a high register");
    auto tokens = random_tokens(30, 64, 13);
    auto full = model.forward_logits(tokens, text, RunMode{});
    IncrementalDecoder<float> decoder(model, text);
    std::vector<float> stepped(decoder.logits().begin(), decoder.logits().end());
    for (int t : tokens) {
        decoder.push(t);
        stepped.insert(stepped.end(), decoder.logits().begin(), decoder.logits().end());
    }
    EXPECT_LT(max_abs_diff<float>(full.data(), stepped), 1e-6);
}

TEST_P(BothArchs, GreedyGenerationMatchesArgmaxRollout) {
    auto cfg = small_config(GetParam());
    LanguageModel<double> model(cfg, 14);
    randomize_head(model, 15);
    auto text = model.encode_caption("slow major low sparse");
    auto greedy = model.generate(text, 12, 0.0, 64, 1);
    std::vector<int> rollout;
    for (std::size_t i = 0; i < 12; ++i) {
        auto logits = model.forward_logits(rollout, text, RunMode{});
        int best = 0;
        for (int c = 1; c < 16; ++c) {
            if (logits.at(i, std::size_t(c)) > logits.at(i, std::size_t(best))) best = c;
        }
        rollout.push_back(best);
    }
    EXPECT_EQ(greedy, rollout);
    EXPECT_EQ(model.generate(text, 12, 1.7, 1, 99), greedy);
    auto a = model.generate(text, 20, 1.0, 8, 5), b = model.generate(text, 20, 1.0, 8, 5);
    EXPECT_EQ(a, b);
    for (int t : a) {
        EXPECT_GE(t, 0);
        EXPECT_LT(t, 16);
    }
    EXPECT_THROW(model.generate(text, 5, 1.0, 0, 1), ArgumentError);
    EXPECT_THROW(model.generate(text, 0, 1.0, 4, 1), ArgumentError);
}

TEST_P(BothArchs, CheckpointRoundTripIsBitExact) {
    auto cfg = small_config(GetParam());
    LanguageModel<float> model(cfg, 16);
    randomize_head(model, 17);
    const auto dir = std::filesystem::temp_directory_path() / "ssmg_lm_test";
    const auto path = dir / (std::string(arch_name(cfg.arch)) + ".ckpt");
    save_model(model, path, std::string("trainer-bytes"));
    std::optional<std::string> trainer;
    auto loaded = load_model(path, &trainer);
    ASSERT_TRUE(trainer.has_value());
    EXPECT_EQ(*trainer, "trainer-bytes");
    EXPECT_EQ(loaded.config().arch, cfg.arch);
    auto text = model.encode_caption("checkpoint test caption");
    auto tokens = random_tokens(9, 16, 18);
    auto a = model.forward_logits(tokens, text, RunMode{});
    auto b = loaded.forward_logits(tokens, text, RunMode{});
    EXPECT_EQ(max_abs_diff<float>(a.data(), b.data()), 0.0);

    auto bytes = read_file(path);
    write_file(dir / "truncated.ckpt", std::string_view(bytes).substr(0, bytes.size() / 2));
    EXPECT_THROW(load_model(dir / "truncated.ckpt"), IntegrityError);
    auto flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x40;
    write_file(dir / "flipped.ckpt", flipped);
    EXPECT_THROW(load_model(dir / "flipped.ckpt"), IntegrityError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    write_file(dir / "magic.ckpt", bad_magic);
    EXPECT_THROW(load_model(dir / "magic.ckpt"), IntegrityError);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ImportRejectsMismatchWithoutPartialWrite) {
    auto cfg = small_config(Arch::PrefixSimba);
    LanguageModel<float> a(cfg, 1), b(cfg, 2);
    auto stored = export_parameters(a.params());
    stored.back().shape = {3};
    stored.back().values.assign(3, 1.0f);
    const auto before = export_parameters(b.params());
    EXPECT_THROW(import_parameters(b.params(), stored), IntegrityError);
    const auto after = export_parameters(b.params());
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].values, after[i].values);
}

TEST(LanguageModel, ParameterCountsWithinTenPercent) {
    LmConfig simba, attn;
    attn.arch = Arch::CrossTransformer;
    LanguageModel<float> a(simba, 1), b(attn, 1);
    const double x = double(a.params().scalar_count()), y = double(b.params().scalar_count());
    EXPECT_LT(std::abs(x - y) / std::max(x, y), 0.10) << x << " vs " << y;
}

TEST(LanguageModel, PrefixModelAcceptsMissingText) {
    auto cfg = small_config(Arch::PrefixSimba);
    LanguageModel<double> model(cfg, 1);
    EXPECT_EQ(model.forward_logits(random_tokens(3, 16, 1), Tensor<double>{}, RunMode{}).shape(), (Shape{4, 18}));
    cfg.arch = Arch::CrossTransformer;
    LanguageModel<double> attn(cfg, 1);
    EXPECT_THROW(attn.forward_logits(random_tokens(3, 16, 1), Tensor<double>{}, RunMode{}), EmptyConditionError);
}

TEST(SampleToken, MatchesMultinomialWithinThreeSigma) {
    const std::vector<double> logits{std::log(0.5), std::log(0.3), std::log(0.2)};
    const double p[3] = {0.5, 0.3, 0.2};
    Rng rng(2024);
    const int draws = 10000;
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < draws; ++i) ++counts[sample_token<double>(logits, 1.0, 3, rng)];
    for (int c = 0; c < 3; ++c) {
        const double sigma = std::sqrt(draws * p[c] * (1 - p[c]));
        EXPECT_LT(std::abs(counts[c] - draws * p[c]), 3 * sigma) << "class " << c;
    }
}

TEST(SampleToken, TopKAndDegenerateCases) {
    const std::vector<double> logits{0.1, 2.0, 2.0, -1.0};
    Rng rng(1);
    EXPECT_EQ(sample_token<double>(logits, 0.0, 4, rng), 1);
    EXPECT_EQ(sample_token<double>(logits, 5.0, 1, rng), 1);
    for (int i = 0; i < 200; ++i) {
        const int t = sample_token<double>(logits, 3.0, 2, rng);
        EXPECT_TRUE(t == 1 || t == 2);
    }
    EXPECT_THROW(sample_token<double>(logits, 1.0, 0, rng), ArgumentError);
    EXPECT_THROW(sample_token<double>(logits, -1.0, 2, rng), ArgumentError);
}

INSTANTIATE_TEST_SUITE_P(Archs, BothArchs, ::testing::Values(Arch::PrefixSimba, Arch::CrossTransformer),
                         [](const auto& info) { return std::string(arch_name(info.param)); });

}  // namespace
}  // namespace ssmg
