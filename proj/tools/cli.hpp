#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ssmg::cli {

namespace fs = std::filesystem;

struct SynthOptions {
    std::size_t n = 1000;
    std::size_t length = 500;
    std::uint64_t seed = 7;
    fs::path out;
    bool force = false;
    std::size_t layers = 4;
    std::size_t codewords = 64;
    std::size_t kmeans_iters = 20;
    std::size_t max_codec_frames = 50000;
    std::size_t probe_pieces = 2000;
};

struct CodecSweepOptions {
    fs::path corpus;
    fs::path out;
};

struct TrainOptions {
    fs::path config;
    fs::path corpus;
    fs::path out;
    std::optional<std::string> arch;
    bool force = false;
    bool resume = false;
    std::optional<std::size_t> stop_after;
};

struct EvalSweepOptions {
    fs::path run;
    std::size_t every = 0;  // 0 evaluates every checkpoint
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::optional<std::size_t> limit;  // first N test examples only
};

struct GenerateOptions {
    fs::path checkpoint;
    std::string caption;
    std::uint64_t seed = 0;
    double temperature = 1.0;
    int top_k = 64;
    std::size_t steps = 500;
    std::optional<fs::path> codebooks;
};

struct PlotOptions {
    std::vector<fs::path> runs;
    fs::path out;
};

void cmd_synth(const SynthOptions& opt, std::ostream& log);
void cmd_codec_sweep(const CodecSweepOptions& opt, std::ostream& log);
void cmd_train(const TrainOptions& opt, std::ostream& log);
void cmd_eval_sweep(const EvalSweepOptions& opt, std::ostream& log);
std::vector<int> cmd_generate(const GenerateOptions& opt, std::ostream& out);
void cmd_plot(const PlotOptions& opt, std::ostream& log);

// Full command line (argv[0] is the program name). Errors are reported on `err` as a
// single `error[E_CODE]: message` line; the return value is the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Worker cap from SSMG_THREADS (default 1).
std::size_t thread_limit();

}  // namespace ssmg::cli
