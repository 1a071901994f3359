#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "manifest.hpp"
#include "ssmg/binary_io.hpp"
#include "ssmg/error.hpp"

namespace fs = std::filesystem;
using namespace ssmg;
using namespace ssmg::cli;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "ssmg");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

constexpr const char* kTinyConfig = R"(arch = prefix_simba
vocab = 16
n_blocks = 2
d_model = 16
text_dim = 24
ssm_heads = 2
ssm_head_dim = 8
state_dim = 4
attn_heads = 2
total_steps = 20
eval_every = 10
warmup_steps = 2
micro_batch = 2
accum_steps = 1
lr_max = 3e-3
)";

class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "ssmg_cli_test";
        fs::remove_all(root_);
        fs::create_directories(root_);
        write_file(root_ / "tiny.cfg", kTinyConfig);
        const auto r = run({"synth", "--n", "40", "--len", "48", "--seed", "5", "--codewords", "16", "--probe-pieces", "120",
                            "--out", (root_ / "corpus").string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }

    static std::string path(const std::string& rel) { return (root_ / rel).string(); }

    static Outcome train(const std::string& out, std::vector<std::string> extra = {}) {
        std::vector<std::string> args = {"train", "--config", path("tiny.cfg"), "--corpus", path("corpus"), "--out", path(out)};
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args);
    }

    static inline fs::path root_;
};

}  // namespace

TEST_F(CliTest, HelpAndVersionExitZero) {
    EXPECT_EQ(run({"--help"}).code, 0);
    EXPECT_EQ(run({"train", "--help"}).code, 0);
    const auto v = run({"--version"});
    EXPECT_EQ(v.code, 0);
    EXPECT_NE(v.out.find(kToolVersion), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
    for (const auto& args : std::vector<std::vector<std::string>>{
             {}, {"frobnicate"}, {"generate"}, {"synth", "--n", "abc", "--out", path("x")}}) {
        const auto r = run(args);
        EXPECT_EQ(r.code, 2);
        EXPECT_EQ(r.err.rfind("error[E_USAGE]: ", 0), 0u) << r.err;
    }
}

TEST_F(CliTest, ExistingOutputNeedsForce) {
    const auto r = run({"synth", "--n", "40", "--len", "48", "--out", path("corpus")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error[E_EXISTS]"), std::string::npos);
}

TEST_F(CliTest, TooFewPiecesIsInsufficientData) {
    const auto r = run({"synth", "--n", "5", "--len", "48", "--out", path("small")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("error[E_INSUFFICIENT_DATA]"), std::string::npos);
}

TEST_F(CliTest, MissingCorpusIsDataError) {
    const auto r = run({"train", "--config", path("tiny.cfg"), "--corpus", path("missing"), "--out", path("nowhere_run")});
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_NE(r.err.find("error[E_MISSING]"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownConfigKeyIsConfigError) {
    write_file(root_ / "bad.cfg", std::string(kTinyConfig) + "learning_rate = 1\n");
    const auto r = run({"train", "--config", path("bad.cfg"), "--corpus", path("corpus"), "--out", path("bad_run")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("error[E_CONFIG]"), std::string::npos);
    EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
}

TEST_F(CliTest, VocabMustMatchCodec) {
    std::string text = kTinyConfig;
    text.replace(text.find("vocab = 16"), 10, "vocab = 32");
    write_file(root_ / "vocab.cfg", text);
    const auto r = run({"train", "--config", path("vocab.cfg"), "--corpus", path("corpus"), "--out", path("vocab_run")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("codewords"), std::string::npos);
}

TEST_F(CliTest, StopAfterMustAlignWithEvaluation) {
    EXPECT_EQ(train("misaligned", {"--stop-after", "7"}).code, 2);
}

TEST_F(CliTest, InvalidThreadCountIsUsageError) {
    ::setenv("SSMG_THREADS", "zero", 1);
    const auto r = run({"plot", "--runs", path("a"), "--out", path("b")});
    ::unsetenv("SSMG_THREADS");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("SSMG_THREADS"), std::string::npos);
}

TEST_F(CliTest, PipelineResumeAndDeterminism) {
    ASSERT_EQ(train("full").code, 0);
    ASSERT_EQ(train("split", {"--stop-after", "10"}).code, 0);
    EXPECT_FALSE(fs::exists(root_ / "split/checkpoints/step_000020.ckpt"));
    ASSERT_EQ(train("split", {"--resume"}).code, 0);
    EXPECT_EQ(read_file(root_ / "full/loss.csv"), read_file(root_ / "split/loss.csv"));
    EXPECT_EQ(read_file(root_ / "full/checkpoints/step_000020.ckpt"), read_file(root_ / "split/checkpoints/step_000020.ckpt"));

    ASSERT_EQ(run({"eval-sweep", "--run", path("full"), "--seed", "3"}).code, 0);
    ::setenv("SSMG_THREADS", "3", 1);
    const auto threaded = run({"eval-sweep", "--run", path("split"), "--seed", "3"});
    ::unsetenv("SSMG_THREADS");
    ASSERT_EQ(threaded.code, 0) << threaded.err;
    const auto metrics = read_file(root_ / "full/metrics.csv");
    EXPECT_EQ(metrics, read_file(root_ / "split/metrics.csv"));
    EXPECT_EQ(metrics.rfind("step,arch,fd,kld,alignment,n_examples\n10,prefix_simba,", 0), 0u) << metrics;
    EXPECT_NO_THROW(RunManifest::load(root_ / "full"));

    const auto plot = run({"plot", "--runs", path("full"), path("split"), "--out", path("plots")});
    ASSERT_EQ(plot.code, 0) << plot.err;
    for (const char* f : {"fd.svg", "kld.svg", "alignment.svg", "valid_loss.svg", "report.md"}) {
        EXPECT_TRUE(fs::exists(root_ / "plots" / f)) << f;
    }
    EXPECT_NE(read_file(root_ / "plots/fd.svg").find("<svg"), std::string::npos);

    const auto g = run({"generate", "--checkpoint", path("full/checkpoints/step_000020.ckpt"), "--caption",
                        "a fast tune in a major key, high register, dense", "--steps", "24", "--codebooks",
                        path("corpus/codebooks.rvq")});
    ASSERT_EQ(g.code, 0) << g.err;
    std::istringstream first(g.out.substr(0, g.out.find('\n')));
    int token = 0, count = 0;
    while (first >> token) {
        EXPECT_GE(token, 0);
        EXPECT_LT(token, 16);
        ++count;
    }
    EXPECT_EQ(count, 24);
    EXPECT_NE(g.out.find("decoded attributes:"), std::string::npos);

    // Resuming under a different config is refused.
    write_file(root_ / "other.cfg", std::string(kTinyConfig) + "seed = 9\n");
    const auto other = run({"train", "--config", path("other.cfg"), "--corpus", path("corpus"), "--out", path("full"), "--resume"});
    EXPECT_EQ(other.code, 3);

    // A tampered artifact fails manifest verification.
    write_file(root_ / "full/loss.csv", "step,split,loss,lr\n");
    const auto tampered = run({"eval-sweep", "--run", path("full")});
    EXPECT_EQ(tampered.code, 4);
    EXPECT_NE(tampered.err.find("error[E_INTEGRITY]"), std::string::npos);
}
