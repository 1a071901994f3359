#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <map>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>

#include "manifest.hpp"
#include "ssmg/binary_io.hpp"
#include "ssmg/error.hpp"
#include "ssmg/key_values.hpp"
#include "ssmg/lm.hpp"
#include "ssmg/metrics.hpp"
#include "ssmg/rvq.hpp"
#include "ssmg/synthdata.hpp"
#include "ssmg/trainer.hpp"
#include "svg.hpp"

namespace ssmg::cli {

namespace {

constexpr const char* kDatasetFile = "corpus.tsv";
constexpr const char* kFramesFile = "frames.bin";
constexpr const char* kCodebookFile = "codebooks.rvq";
constexpr const char* kTokenProbeFile = "probe_tokens.bin";
constexpr const char* kFrameProbeFile = "probe_frames.bin";
constexpr const char* kConfigFile = "config.cfg";
constexpr const char* kLossFile = "loss.csv";
constexpr const char* kMetricsFile = "metrics.csv";
constexpr const char* kCheckpointDir = "checkpoints";

struct UsageError : Error {
    UsageError(std::string code, const std::string& m) : Error(ErrorKind::Usage, std::move(code), m) {}
};

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

void check_output(const fs::path& dir, bool force) {
    if (!force && fs::exists(dir) && !fs::is_empty(dir)) {
        throw UsageError("E_EXISTS", dir.string() + " already exists (pass --force to overwrite)");
    }
}

void prepare_output(const fs::path& dir, bool force) {
    check_output(dir, force);
    if (fs::exists(dir)) fs::remove_all(dir);
    fs::create_directories(dir);
}

std::string checkpoint_name(std::size_t step) { return fmt::format("step_{:06d}.ckpt", step); }

// (step, relative path) of every checkpoint in a run, ascending.
std::vector<std::pair<std::size_t, std::string>> list_checkpoints(const fs::path& run) {
    std::vector<std::pair<std::size_t, std::string>> out;
    const auto dir = run / kCheckpointDir;
    if (!fs::exists(dir)) return out;
    static const std::regex pattern(R"(step_(\d{6,})\.ckpt)");
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const auto name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern)) {
            out.emplace_back(std::stoull(m[1].str()), (fs::path(kCheckpointDir) / name).generic_string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct CorpusBundle {
    RunManifest manifest;
    Corpus corpus;
    RvqCodebooks books;
};

CorpusBundle load_corpus_dir(const fs::path& dir, bool with_frames) {
    CorpusBundle b;
    b.manifest = RunManifest::load(dir);
    if (b.manifest.kind != "corpus") throw DataError(dir.string() + " is not a corpus directory");
    const auto books_path = dir / b.manifest.codebooks;
    if (b.manifest.codebooks.empty() || !fs::exists(books_path)) {
        throw DataError("E_MISSING", "no fitted codebooks in " + dir.string());
    }
    b.books = load_codebooks(books_path);
    b.corpus = load_corpus(dir / kDatasetFile, with_frames ? dir / kFramesFile : fs::path{});
    return b;
}

struct RunConfig {
    LmConfig lm;
    TrainConfig train;
    std::string text;
};

RunConfig parse_run_config(const std::string& text, const std::optional<std::string>& arch) {
    auto kv = KeyValues::parse(text);
    if (arch) kv.set("arch", *arch);
    RunConfig c;
    c.lm = LmConfig::read(kv);
    c.train = TrainConfig::read(kv);
    kv.finish();
    c.lm.validate();
    c.train.validate();
    KeyValues resolved;
    c.lm.write(resolved);
    c.train.write(resolved);
    c.text = resolved.to_text();
    return c;
}

void write_lines(const fs::path& path, std::string_view header, const std::vector<std::string>& rows) {
    std::string text(header);
    text += '\n';
    for (const auto& r : rows) text += r + '\n';
    write_file(path, text);
}

std::vector<std::string> read_rows(const fs::path& path, std::string_view header) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != header) throw DataError(path.string() + " lacks the header " + std::string(header));
    std::vector<std::string> rows;
    while (std::getline(in, line)) {
        if (!line.empty()) rows.push_back(line);
    }
    return rows;
}

std::size_t row_step(const std::string& row) { return std::stoull(row.substr(0, row.find(','))); }

}  // namespace

std::size_t thread_limit() {
    const char* env = std::getenv("SSMG_THREADS");
    if (!env || !*env) return 1;
    try {
        std::size_t pos = 0;
        const auto n = std::stoull(env, &pos);
        if (pos == std::string(env).size() && n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw UsageError("E_ARGUMENT", std::string("SSMG_THREADS must be a positive integer, got '") + env + "'");
}

void cmd_synth(const SynthOptions& opt, std::ostream& log) {
    if (opt.out.empty()) throw UsageError("E_ARGUMENT", "synth needs --out");
    check_output(opt.out, opt.force);
    auto corpus = sample_corpus(opt.n, opt.length, opt.seed);
    const auto frames = codec_training_frames(corpus, opt.max_codec_frames, derive_seed(opt.seed, fnv1a64("codec-frames")));
    const auto books = fit_rvq(frames, opt.layers, opt.codewords, opt.kmeans_iters, derive_seed(opt.seed, fnv1a64("codec")));
    tokenize(corpus, books);
    fmt::print(log, "corpus: {} train / {} valid / {} test pieces of {} frames\n", corpus.split(Split::Train).size(),
               corpus.split(Split::Valid).size(), corpus.split(Split::Test).size(), opt.length);
    const auto token_probe = train_token_probe(books, opt.probe_pieces, opt.length, opt.seed);
    const auto frame_probe = train_frame_probe(opt.probe_pieces, opt.length, opt.seed);

    prepare_output(opt.out, opt.force);
    save_corpus(corpus, opt.out / kDatasetFile, opt.out / kFramesFile);
    save_codebooks(books, opt.out / kCodebookFile);
    token_probe.save(opt.out / kTokenProbeFile);
    frame_probe.save(opt.out / kFrameProbeFile);

    RunManifest m;
    m.kind = "corpus";
    m.seed = opt.seed;
    m.config_hash = hex64(fnv1a64(fmt::format("n={} length={} seed={} layers={} codewords={} iters={} frames={} probe={}",
                                              opt.n, opt.length, opt.seed, opt.layers, opt.codewords, opt.kmeans_iters,
                                              opt.max_codec_frames, opt.probe_pieces)));
    m.corpus = ".";
    m.codebooks = kCodebookFile;
    for (const char* f : {kDatasetFile, kFramesFile, kCodebookFile, kTokenProbeFile, kFrameProbeFile}) {
        m.add_artifact(opt.out, f);
    }
    m.save(opt.out);
    fmt::print(log, "codebooks: K={} V={}; wrote {}\n", books.layers, books.codewords, opt.out.string());
}

void cmd_codec_sweep(const CodecSweepOptions& opt, std::ostream& log) {
    const auto b = load_corpus_dir(opt.corpus, true);
    const auto probe = Probe::load(opt.corpus / kFrameProbeFile);
    const auto test = b.corpus.split(Split::Test);
    const std::size_t K = b.books.layers;
    std::vector<double> mse(K, 0.0);
    std::vector<std::vector<ProbeOutput>> outputs(K);
    std::vector<std::string> captions;
    for (const auto* e : test) {
        const auto tokens = rvq_encode(e->frames, b.books);
        auto ref = e->frames.data();
        for (std::size_t k = 0; k < K; ++k) {
            const auto rec = rvq_decode_prefix(tokens, b.books, k + 1);
            auto r = rec.data();
            double acc = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) acc += (r[i] - ref[i]) * (r[i] - ref[i]);
            mse[k] += acc / double(r.size());
            outputs[k].push_back(probe.run_frames(rec));
        }
        captions.push_back(e->caption);
    }
    fs::create_directories(opt.out);
    std::vector<std::string> rows;
    Series mse_series{"mse", {}, {}}, align_series{"alignment", {}, {}};
    for (std::size_t k = 0; k < K; ++k) {
        mse[k] /= double(test.size());
        const double align = alignment_score(outputs[k], captions).score;
        rows.push_back(fmt::format("{},{},{}", k + 1, format_double(mse[k]), format_double(align)));
        mse_series.x.push_back(double(k + 1));
        mse_series.y.push_back(mse[k]);
        align_series.x.push_back(double(k + 1));
        align_series.y.push_back(align);
        fmt::print(log, "kappa {}: mse {:.6g} alignment {:.4f}\n", k + 1, mse[k], align);
    }
    write_lines(opt.out / "codec_sweep.csv", "kappa,mse,alignment", rows);
    write_file(opt.out / "codec_mse.svg", line_chart("Reconstruction error by codebook prefix", "kappa", "MSE", {mse_series}));
    write_file(opt.out / "codec_alignment.svg",
               line_chart("Probe alignment of prefix reconstructions", "kappa", "alignment", {align_series}));
}

void cmd_train(const TrainOptions& opt, std::ostream& log) {
    if (opt.arch) parse_arch(*opt.arch);
    const auto cfg = parse_run_config(read_file(opt.config), opt.arch);
    const auto b = load_corpus_dir(opt.corpus, false);
    if (cfg.lm.vocab != b.books.codewords) {
        throw ConfigError(fmt::format("vocab {} does not match the {} codewords of the corpus codec", cfg.lm.vocab,
                                      b.books.codewords));
    }
    if (opt.stop_after && (*opt.stop_after == 0 || *opt.stop_after % cfg.train.eval_every != 0)) {
        throw UsageError("E_ARGUMENT", "--stop-after must be a positive multiple of eval_every");
    }
    if (!opt.resume) check_output(opt.out, opt.force);
    const std::string config_hash = hex64(fnv1a64(cfg.text + b.manifest.config_hash));

    std::vector<std::string> rows;
    std::optional<std::string> state;
    RunManifest m;
    std::optional<LanguageModel<float>> resumed;
    if (opt.resume) {
        m = RunManifest::load(opt.out);
        if (m.config_hash != config_hash) throw ConfigError("run " + opt.out.string() + " was trained with another config");
        const auto ckpts = list_checkpoints(opt.out);
        if (ckpts.empty()) throw DataError("E_MISSING", "no checkpoint to resume in " + opt.out.string());
        resumed.emplace(load_model(opt.out / ckpts.back().second, &state));
        if (!state) throw IntegrityError("checkpoint " + ckpts.back().second + " has no trainer state");
        for (auto& r : read_rows(opt.out / kLossFile, kLossCsvHeader)) {
            if (row_step(r) <= ckpts.back().first) rows.push_back(std::move(r));
        }
    } else {
        prepare_output(opt.out, opt.force);
        fs::create_directories(opt.out / kCheckpointDir);
        write_file(opt.out / kConfigFile, cfg.text);
        m.kind = "run";
        m.seed = cfg.train.seed;
        m.config_hash = config_hash;
        m.corpus = fs::absolute(opt.corpus).lexically_normal().string();
        m.codebooks = (fs::absolute(opt.corpus) / b.manifest.codebooks).lexically_normal().string();
        m.checkpoint_dir = kCheckpointDir;
        m.add_artifact(opt.out, kConfigFile);
    }

    auto model = resumed ? std::move(*resumed) : LanguageModel<float>(cfg.lm, derive_seed(cfg.train.seed, fnv1a64("model")));
    Trainer<float> trainer(model, training_sequences(b.corpus, Split::Train), cfg.train);
    if (state) trainer.load_state(*state);
    const auto valid = training_sequences(b.corpus, Split::Valid);
    fmt::print(log, "training {} ({} parameters) from step {} to {}\n", arch_name(cfg.lm.arch),
               model.params().scalar_count(), trainer.step(), cfg.train.total_steps);

    while (trainer.step() < cfg.train.total_steps) {
        const auto r = trainer.train_step();
        if (!r.applied) fmt::print(log, "warning: step {} skipped (non-finite gradient)\n", r.step);
        rows.push_back(format_loss_row(r.step, "train", r.loss, r.lr));
        const bool stop = opt.stop_after && r.step == *opt.stop_after;
        if (r.step % cfg.train.eval_every == 0 || r.step == cfg.train.total_steps || stop) {
            const double v = trainer.evaluate(valid);
            rows.push_back(format_loss_row(r.step, "valid", v, r.lr));
            const auto name = (fs::path(kCheckpointDir) / checkpoint_name(r.step)).generic_string();
            save_model(model, opt.out / name, trainer.save_state());
            write_lines(opt.out / kLossFile, kLossCsvHeader, rows);
            m.add_artifact(opt.out, name);
            m.add_artifact(opt.out, kLossFile);
            m.save(opt.out);
            fmt::print(log, "step {:>5}  train {:.4f}  valid {:.4f}  lr {:.3g}\n", r.step, r.loss, v, r.lr);
        }
        if (stop) break;
    }
}

void cmd_eval_sweep(const EvalSweepOptions& opt, std::ostream& log) {
    auto m = RunManifest::load(opt.run);
    if (m.kind != "run") throw DataError(opt.run.string() + " is not a training run directory");
    const auto cfg = parse_run_config(read_file(opt.run / kConfigFile), std::nullopt);
    const auto b = load_corpus_dir(m.corpus, false);
    const auto probe = Probe::load(fs::path(m.corpus) / kTokenProbeFile);
    auto test = b.corpus.split(Split::Test);
    if (opt.limit && *opt.limit < test.size()) test.resize(*opt.limit);

    std::vector<std::pair<std::size_t, std::string>> chosen;
    for (const auto& c : list_checkpoints(opt.run)) {
        if (opt.every == 0 || c.first % opt.every == 0) chosen.push_back(c);
    }
    if (chosen.empty()) throw DataError("E_MISSING", "no checkpoints to evaluate in " + opt.run.string());

    GenerationConfig g;
    g.steps = b.corpus.length;
    g.seed = derive_seed(opt.seed, fnv1a64("eval"));
    std::vector<std::string> rows;
    for (const auto& [step, name] : chosen) {
        const auto model = load_model(opt.run / name);
        if (model.config().arch != cfg.lm.arch) throw IntegrityError(name + " does not match the run config");
        const auto r = evaluate_checkpoint(model, step, test, probe, g, opt.threads);
        rows.push_back(format_metrics_row(r));
        fmt::print(log, "step {:>5}  fd {:.4f}  kld {:.4f}  alignment {:.4f}\n", step, r.fd, r.kld, r.alignment);
    }
    write_lines(opt.run / kMetricsFile, kMetricsCsvHeader, rows);
    m.metrics_csv = kMetricsFile;
    m.add_artifact(opt.run, kMetricsFile);
    m.save(opt.run);
}

std::vector<int> cmd_generate(const GenerateOptions& opt, std::ostream& out) {
    const auto model = load_model(opt.checkpoint);
    const auto tokens = model.generate(model.encode_caption(opt.caption), opt.steps, opt.temperature, opt.top_k, opt.seed);
    for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
    out << '\n';
    if (opt.codebooks) {
        const auto books = load_codebooks(*opt.codebooks);
        TokenMatrix layer1{1, tokens.size(), tokens};
        const auto frames = rvq_decode_prefix(layer1, books, 1);
        std::string pitches;
        for (int p : decode_pitches(frames)) pitches += p == kRest ? " ." : " " + std::to_string(p);
        fmt::print(out, "decoded pitches:{}\n", pitches);
        if (frames.dim(0) >= 16) fmt::print(out, "decoded attributes: {}\n", describe(classify_piece(frames)));
    }
    return tokens;
}

void cmd_plot(const PlotOptions& opt, std::ostream& log) {
    if (opt.runs.empty()) throw UsageError("E_ARGUMENT", "plot needs at least one run");
    struct Run {
        std::string label;
        std::vector<MetricsRecord> records;
        Series valid_loss;
    };
    std::vector<Run> runs;
    for (const auto& dir : opt.runs) {
        const auto path = dir / kMetricsFile;
        if (!fs::exists(path)) throw DataError("E_MISSING", "no " + std::string(kMetricsFile) + " in " + dir.string());
        Run r;
        r.records = parse_metrics_csv(read_file(path));
        if (r.records.empty()) throw InsufficientDataError(path.string() + " has no rows");
        r.label = r.records.front().arch;
        r.valid_loss.name = r.label;
        if (fs::exists(dir / kLossFile)) {
            for (const auto& row : read_rows(dir / kLossFile, kLossCsvHeader)) {
                std::vector<std::string> cols;
                std::istringstream in(row);
                for (std::string c; std::getline(in, c, ',');) cols.push_back(c);
                if (cols.size() == 4 && cols[1] == "valid") {
                    r.valid_loss.x.push_back(std::stod(cols[0]));
                    r.valid_loss.y.push_back(std::stod(cols[2]));
                }
            }
        }
        runs.push_back(std::move(r));
    }
    fs::create_directories(opt.out);

    struct Metric {
        const char* name;
        const char* title;
        double MetricsRecord::*field;
        bool lower_better;
    };
    const Metric metrics[] = {
        {"fd", "Frechet distance of probe embeddings (lower is better)", &MetricsRecord::fd, true},
        {"kld", "Probe KL divergence (lower is better)", &MetricsRecord::kld, true},
        {"alignment", "Caption alignment (higher is better)", &MetricsRecord::alignment, false},
    };
    for (const auto& metric : metrics) {
        std::vector<Series> series;
        for (const auto& r : runs) {
            Series s{r.label, {}, {}};
            for (const auto& rec : r.records) {
                s.x.push_back(double(rec.step));
                s.y.push_back(rec.*metric.field);
            }
            series.push_back(std::move(s));
        }
        write_file(opt.out / (std::string(metric.name) + ".svg"), line_chart(metric.title, "training step", metric.name, series));
    }
    std::vector<Series> losses;
    for (const auto& r : runs) {
        if (!r.valid_loss.x.empty()) losses.push_back(r.valid_loss);
    }
    if (!losses.empty()) write_file(opt.out / "valid_loss.svg", line_chart("Validation loss", "training step", "nats", losses));

    // Leader per metric at every step all runs evaluated.
    std::set<std::size_t> steps;
    for (const auto& rec : runs.front().records) steps.insert(rec.step);
    for (const auto& r : runs) {
        std::set<std::size_t> mine;
        for (const auto& rec : r.records) mine.insert(rec.step);
        std::set<std::size_t> both;
        std::set_intersection(steps.begin(), steps.end(), mine.begin(), mine.end(), std::inserter(both, both.begin()));
        steps = std::move(both);
    }
    auto at = [](const Run& r, std::size_t step) {
        return *std::find_if(r.records.begin(), r.records.end(), [&](const MetricsRecord& x) { return x.step == step; });
    };
    std::string report = "# Metric-vs-step comparison\n\n";
    report += "Metrics are probe-based analogs of FAD, KLD and CLAP scores. Absolute values are not on the scale of "
              "those metrics; compare curve shapes and model ordering only.\n\n";
    report += "| step |";
    for (const auto& metric : metrics) report += fmt::format(" {} leader |", metric.name);
    for (const auto& r : runs) {
        for (const auto& metric : metrics) report += fmt::format(" {} {} |", r.label, metric.name);
    }
    report += "\n|---|";
    for (std::size_t i = 0; i < 3 + 3 * runs.size(); ++i) report += "---|";
    report += "\n";
    std::map<std::string, std::map<std::string, std::size_t>> wins;
    for (std::size_t step : steps) {
        report += fmt::format("| {} |", step);
        for (const auto& metric : metrics) {
            const Run* best = nullptr;
            double best_v = 0.0;
            bool tie = false;
            for (const auto& r : runs) {
                const double v = at(r, step).*metric.field;
                if (!best || (metric.lower_better ? v < best_v : v > best_v)) {
                    best = &r;
                    best_v = v;
                    tie = false;
                } else if (v == best_v) {
                    tie = true;
                }
            }
            const std::string leader = tie ? "tie" : best->label;
            ++wins[metric.name][leader];
            report += " " + leader + " |";
        }
        for (const auto& r : runs) {
            const auto rec = at(r, step);
            for (const auto& metric : metrics) report += fmt::format(" {:.4f} |", rec.*metric.field);
        }
        report += "\n";
    }
    report += "\n## Checkpoints led\n\n";
    for (const auto& metric : metrics) {
        report += fmt::format("- {}:", metric.name);
        for (const auto& [label, count] : wins[metric.name]) report += fmt::format(" {} {}/{};", label, count, steps.size());
        report += "\n";
    }
    write_file(opt.out / "report.md", report);
    log << report;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Synthetic text-to-music token generation: codec, prefix SSM and cross-attention models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SynthOptions synth;
    auto* s = app.add_subcommand("synth", "Synthesize a captioned corpus, fit the codec and train the probes");
    s->add_option("--n", synth.n, "Number of pieces")->capture_default_str();
    s->add_option("--len", synth.length, "Frames per piece")->capture_default_str();
    s->add_option("--seed", synth.seed, "Seed")->capture_default_str();
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--layers", synth.layers, "Codec layers K")->capture_default_str();
    s->add_option("--codewords", synth.codewords, "Codewords per layer V")->capture_default_str();
    s->add_option("--probe-pieces", synth.probe_pieces, "Pieces in the probe corpus")->capture_default_str();
    s->add_flag("--force", synth.force, "Overwrite an existing output directory");

    CodecSweepOptions sweep;
    auto* c = app.add_subcommand("codec-sweep", "Reconstruction error and probe alignment per codebook prefix");
    c->add_option("--corpus", sweep.corpus, "Corpus directory")->required();
    c->add_option("--out", sweep.out, "Output directory")->required();

    TrainOptions train;
    std::string train_arch;
    std::size_t stop_after = 0;
    auto* t = app.add_subcommand("train", "Train one architecture on a corpus");
    t->add_option("--config", train.config, "Run config (key = value)")->required()->check(CLI::ExistingFile);
    t->add_option("--corpus", train.corpus, "Corpus directory")->required();
    t->add_option("--out", train.out, "Run directory")->required();
    auto* arch_opt = t->add_option("--arch", train_arch, "prefix_simba or cross_transformer (overrides the config)");
    t->add_flag("--force", train.force, "Overwrite an existing run");
    t->add_flag("--resume", train.resume, "Continue from the newest checkpoint");
    auto* stop_opt = t->add_option("--stop-after", stop_after, "Stop after this step (a multiple of eval_every)");

    EvalSweepOptions eval;
    std::size_t limit = 0;
    auto* e = app.add_subcommand("eval-sweep", "Evaluate every checkpoint of a run into metrics.csv");
    e->add_option("--run", eval.run, "Run directory")->required();
    e->add_option("--every", eval.every, "Only checkpoints whose step is a multiple of this (0 = all)")->capture_default_str();
    e->add_option("--seed", eval.seed, "Generation seed")->capture_default_str();
    auto* limit_opt = e->add_option("--limit", limit, "Use only the first N test pieces");

    GenerateOptions gen;
    std::string codebooks;
    auto* g = app.add_subcommand("generate", "Sample a token sequence for a caption");
    g->add_option("--checkpoint", gen.checkpoint, "Checkpoint file")->required();
    g->add_option("--caption", gen.caption, "Caption text")->required();
    g->add_option("--seed", gen.seed, "Sampling seed")->capture_default_str();
    g->add_option("--temperature", gen.temperature, "Softmax temperature (0 = greedy)")->capture_default_str();
    g->add_option("--top-k", gen.top_k, "Top-k cutoff")->capture_default_str();
    g->add_option("--steps", gen.steps, "Tokens to generate")->capture_default_str();
    auto* books_opt = g->add_option("--codebooks", codebooks, "Decode layer-1 tokens with this codec");

    PlotOptions plot;
    auto* p = app.add_subcommand("plot", "Overlay metric curves of runs and write the leader report");
    p->add_option("--runs", plot.runs, "Run directories")->required()->expected(1, -1);
    p->add_option("--out", plot.out, "Output directory")->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& pe) {
            if (pe.get_exit_code() == 0) return app.exit(pe, out, err);
            std::string msg = pe.what();
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            err << "error[E_USAGE]: " << msg << '\n';
            return 2;
        }
        const std::size_t threads = thread_limit();
        if (s->parsed()) {
            cmd_synth(synth, out);
        } else if (c->parsed()) {
            cmd_codec_sweep(sweep, out);
        } else if (t->parsed()) {
            if (arch_opt->count()) train.arch = train_arch;
            if (stop_opt->count()) train.stop_after = stop_after;
            cmd_train(train, out);
        } else if (e->parsed()) {
            eval.threads = threads;
            if (limit_opt->count()) eval.limit = limit;
            cmd_eval_sweep(eval, out);
        } else if (g->parsed()) {
            if (books_opt->count()) gen.codebooks = codebooks;
            cmd_generate(gen, out);
        } else if (p->parsed()) {
            cmd_plot(plot, out);
        }
        return 0;
    } catch (const Error& ex) {
        std::string msg = ex.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error[" << ex.code() << "]: " << msg << '\n';
        switch (ex.kind()) {
            case ErrorKind::Usage: return 2;
            case ErrorKind::Data: return 3;
            case ErrorKind::Numeric:
            case ErrorKind::Integrity: return 4;
        }
        return 4;
    } catch (const fs::filesystem_error& ex) {
        err << "error[E_IO]: " << ex.what() << '\n';
        return 3;
    } catch (const std::exception& ex) {
        err << "error[E_INTERNAL]: " << ex.what() << '\n';
        return 4;
    }
}

}  // namespace ssmg::cli
