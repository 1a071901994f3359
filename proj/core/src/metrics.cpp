#include "ssmg/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "ssmg/checkpoint.hpp"
#include "ssmg/error.hpp"
#include "ssmg/key_values.hpp"
#include "ssmg/ops.hpp"
#include "ssmg/params.hpp"
#include "ssmg/trainer.hpp"

namespace ssmg {

namespace {

using MatrixX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const MatrixX> as_matrix(std::span<const double> m, std::size_t d) {
    return {m.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)};
}

MatrixX sqrt_psd(const MatrixX& m) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw ContractError("matrix_sqrt_psd: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<MatrixX> eig(0.5 * (m + m.transpose()));
    if (eig.info() != Eigen::Success) throw ContractError("matrix_sqrt_psd: eigendecomposition failed");
    Eigen::VectorXd roots = eig.eigenvalues().unaryExpr([](double l) { return l < 1e-10 ? 0.0 : std::sqrt(l); });
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

std::vector<double> softmax(const double* logits, std::size_t n) {
    const double top = *std::max_element(logits, logits + n);
    std::vector<double> p(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += p[i] = std::exp(logits[i] - top);
    for (auto& v : p) v /= z;
    return p;
}

}  // namespace

GaussianStats gaussian_stats(std::span<const double> samples, std::size_t dim) {
    if (dim == 0 || samples.size() % dim != 0) throw DimensionError("gaussian_stats: samples are not rows of width " + std::to_string(dim));
    const std::size_t n = samples.size() / dim;
    if (n < 2) throw InsufficientDataError("gaussian_stats needs at least 2 samples, got " + std::to_string(n));
    Eigen::Map<const MatrixX> x(samples.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const MatrixX centered = x.rowwise() - mu;
    MatrixX cov = (centered.transpose() * centered) / double(n - 1);
    cov = 0.5 * (cov + cov.transpose());
    GaussianStats s;
    s.dim = dim;
    s.count = n;
    s.mean.assign(mu.data(), mu.data() + dim);
    s.cov.assign(cov.data(), cov.data() + dim * dim);
    return s;
}

std::vector<double> matrix_sqrt_psd(std::span<const double> m, std::size_t d) {
    if (m.size() != d * d) throw DimensionError("matrix_sqrt_psd: expected " + std::to_string(d * d) + " values");
    const MatrixX r = sqrt_psd(as_matrix(m, d));
    return {r.data(), r.data() + d * d};
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim != b.dim) {
        throw DimensionError("frechet_distance: dimensions " + std::to_string(a.dim) + " and " + std::to_string(b.dim));
    }
    const std::size_t d = a.dim;
    const Eigen::Map<const Eigen::VectorXd> mu_a(a.mean.data(), static_cast<Eigen::Index>(d));
    const Eigen::Map<const Eigen::VectorXd> mu_b(b.mean.data(), static_cast<Eigen::Index>(d));
    const MatrixX sa = as_matrix(a.cov, d), sb = as_matrix(b.cov, d);
    const MatrixX root_a = sqrt_psd(sa);
    MatrixX inner = root_a * sb * root_a;
    inner = 0.5 * (inner + inner.transpose());
    const double fd = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * sqrt_psd(inner).trace();
    return std::max(fd, 0.0);
}

double kl_divergence(std::span<const double> p, std::span<const double> q, double eps) {
    if (p.size() != q.size() || p.empty()) throw DimensionError("kl_divergence: distributions differ in size");
    double zp = 0.0, zq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        zp += p[i] + eps;
        zq += q[i] + eps;
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = (p[i] + eps) / zp, qi = (q[i] + eps) / zq;
        kl += pi * std::log(pi / qi);
    }
    return std::max(kl, 0.0);
}

std::vector<double> token_features(std::span<const int> tokens, std::size_t vocab) {
    if (tokens.empty()) throw InsufficientDataError("token_features: empty sequence");
    std::vector<double> h(vocab, 0.0);
    for (int t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
            throw IndexError("token " + std::to_string(t) + " outside vocabulary " + std::to_string(vocab));
        }
        h[static_cast<std::size_t>(t)] += 1.0;
    }
    for (auto& v : h) v /= double(tokens.size());
    return h;
}

std::vector<double> frame_features(const Tensor<double>& frames) {
    const auto pitches = decode_pitches(frames);
    std::vector<double> h(kFrameFeatures, 0.0);
    for (std::size_t t = 0; t < pitches.size(); ++t) {
        const int p = pitches[t];
        h[p == kRest ? kPitchCount : static_cast<std::size_t>(p)] += 1.0;
        if (p != kRest && (t == 0 || pitches[t - 1] != p)) h[kPitchCount + 1] += 1.0;
    }
    for (auto& v : h) v /= double(pitches.size());
    return h;
}

Probe Probe::train(ProbeInput input, std::size_t input_dim, const std::vector<std::vector<double>>& features,
                   const std::vector<PieceAttributes>& labels, const ProbeTrainConfig& cfg) {
    const std::size_t n = features.size();
    if (n < 2 || labels.size() != n) throw InsufficientDataError("probe training needs matching features and labels");
    const std::size_t h = cfg.hidden;
    Rng rng(derive_seed(cfg.seed, "probe-init"));

    std::vector<double> x(n * input_dim);
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != input_dim) throw DimensionError("probe feature width mismatch");
        std::copy(features[i].begin(), features[i].end(), x.begin() + static_cast<std::ptrdiff_t>(i * input_dim));
    }
    // Scale-free start: the first layer sees unit-scale inputs.
    double rms = 0.0;
    for (double v : x) rms += v * v;
    rms = std::sqrt(rms / double(n * input_dim)) + 1e-12;

    ParameterSet<double> params;
    const auto w1 = params.add("w1", init::normal<double>({input_dim, h}, 1.0 / (rms * std::sqrt(double(input_dim))), rng));
    const auto b1 = params.add("b1", Tensor<double>::zeros({h}));
    std::array<Tensor<double>, 4> w2, b2;
    std::array<std::vector<int>, 4> targets;
    for (std::size_t k = 0; k < 4; ++k) {
        w2[k] = params.add("w2." + std::to_string(k), init::normal<double>({h, kHeadClasses[k]}, 1.0 / std::sqrt(double(h)), rng));
        b2[k] = params.add("b2." + std::to_string(k), Tensor<double>::zeros({kHeadClasses[k]}));
        for (const auto& l : labels) targets[k].push_back(attribute_labels(l)[k]);
    }
    for (const auto& [name, p] : params.entries()) p.set_requires_grad(true);

    const Tensor<double> xt({n, input_dim}, std::move(x));
    TrainConfig opt_cfg;
    opt_cfg.lr_max = cfg.lr;
    opt_cfg.weight_decay = 0.0;
    opt_cfg.total_steps = cfg.steps;
    opt_cfg.warmup_steps = std::max<std::size_t>(1, cfg.steps / 20);
    OptimizerState opt;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        params.zero_grad();
        Tape<double> tape;
        TapeScope<double> scope(tape);
        const auto hidden = tanh(linear(xt, w1, b1));
        Tensor<double> loss;
        for (std::size_t k = 0; k < 4; ++k) {
            auto ce = softmax_cross_entropy(linear(hidden, w2[k], b2[k]), targets[k], -1);
            loss = loss.defined() ? add(loss, ce) : ce;
        }
        tape.backward(scale(loss, 0.25));
        adamw_step(params, opt, opt_cfg, lr_schedule(step, opt_cfg));
    }

    Probe p;
    p.input_ = input;
    p.input_dim_ = input_dim;
    p.hidden_ = h;
    // Stored at f32 precision so a reloaded probe is bit-identical to the trained one.
    auto frozen = [](const Tensor<double>& t) {
        std::vector<double> v;
        for (double x : t.data()) v.push_back(static_cast<double>(static_cast<float>(x)));
        return v;
    };
    p.w1_ = frozen(w1);
    p.b1_ = frozen(b1);
    for (std::size_t k = 0; k < 4; ++k) {
        p.w2_[k] = frozen(w2[k]);
        p.b2_[k] = frozen(b2[k]);
    }
    return p;
}

ProbeOutput Probe::run(std::span<const double> features) const {
    if (features.size() != input_dim_) {
        throw DimensionError("probe expects " + std::to_string(input_dim_) + " features, got " +
                             std::to_string(features.size()));
    }
    ProbeOutput out;
    out.embedding.assign(b1_.begin(), b1_.end());
    for (std::size_t i = 0; i < input_dim_; ++i) {
        const double f = features[i];
        if (f == 0.0) continue;
        const double* row = &w1_[i * hidden_];
        for (std::size_t j = 0; j < hidden_; ++j) out.embedding[j] += f * row[j];
    }
    for (auto& v : out.embedding) v = std::tanh(v);
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t c = kHeadClasses[k];
        std::vector<double> logits(b2_[k]);
        for (std::size_t j = 0; j < hidden_; ++j) {
            for (std::size_t m = 0; m < c; ++m) logits[m] += out.embedding[j] * w2_[k][j * c + m];
        }
        out.posterior[k] = softmax(logits.data(), c);
    }
    return out;
}

ProbeOutput Probe::run_tokens(std::span<const int> tokens) const {
    if (input_ != ProbeInput::Tokens) throw ArgumentError("probe was trained on frames, not tokens");
    return run(token_features(tokens, input_dim_));
}

ProbeOutput Probe::run_frames(const Tensor<double>& frames) const {
    if (input_ != ProbeInput::Frames) throw ArgumentError("probe was trained on tokens, not frames");
    return run(frame_features(frames));
}

double Probe::joint_accuracy(const std::vector<std::vector<double>>& features,
                             const std::vector<PieceAttributes>& labels) const {
    if (features.empty() || labels.size() != features.size()) throw InsufficientDataError("joint_accuracy: no data");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto out = run(features[i]);
        const auto truth = attribute_labels(labels[i]);
        bool all = true;
        for (std::size_t k = 0; k < 4; ++k) {
            const auto& p = out.posterior[k];
            all &= static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) == truth[k];
        }
        hits += all;
    }
    return double(hits) / double(features.size());
}

void Probe::save(const std::filesystem::path& path) const {
    KeyValues kv;
    kv.set("probe_input", input_ == ProbeInput::Tokens ? "tokens" : "frames");
    kv.set("probe_input_dim", std::to_string(input_dim_));
    kv.set("probe_hidden", std::to_string(hidden_));
    CheckpointData data;
    data.config_text = kv.to_text();
    auto store = [&](const std::string& name, Shape shape, const std::vector<double>& v) {
        data.tensors.push_back({name, std::move(shape), std::vector<float>(v.begin(), v.end())});
    };
    store("w1", {input_dim_, hidden_}, w1_);
    store("b1", {hidden_}, b1_);
    for (std::size_t k = 0; k < 4; ++k) {
        store("w2." + std::to_string(k), {hidden_, kHeadClasses[k]}, w2_[k]);
        store("b2." + std::to_string(k), {kHeadClasses[k]}, b2_[k]);
    }
    save_checkpoint(data, path);
}

Probe Probe::load(const std::filesystem::path& path) {
    const auto data = load_checkpoint(path);
    Probe p;
    try {
        auto kv = KeyValues::parse(data.config_text);
        const auto kind = kv.read_string("probe_input", "");
        if (kind != "tokens" && kind != "frames") throw IntegrityError("unknown probe input '" + kind + "'");
        p.input_ = kind == "tokens" ? ProbeInput::Tokens : ProbeInput::Frames;
        p.input_dim_ = kv.read_size("probe_input_dim", 0);
        p.hidden_ = kv.read_size("probe_hidden", 0);
        kv.finish();
    } catch (const ConfigError& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
    if (data.tensors.size() != 10) throw IntegrityError(path.string() + ": probe file has the wrong tensor count");
    auto take = [&](std::size_t i, const Shape& shape) {
        const auto& t = data.tensors[i];
        if (t.shape != shape) throw IntegrityError(path.string() + ": probe tensor " + t.name + " has the wrong shape");
        return std::vector<double>(t.values.begin(), t.values.end());
    };
    p.w1_ = take(0, {p.input_dim_, p.hidden_});
    p.b1_ = take(1, {p.hidden_});
    for (std::size_t k = 0; k < 4; ++k) {
        p.w2_[k] = take(2 + 2 * k, {p.hidden_, kHeadClasses[k]});
        p.b2_[k] = take(3 + 2 * k, {kHeadClasses[k]});
    }
    return p;
}

Probe train_token_probe(const RvqCodebooks& books, std::size_t pieces, std::size_t length, std::uint64_t seed) {
    auto corpus = sample_corpus(pieces, length, derive_seed(seed, "probe"));
    tokenize(corpus, books);
    std::vector<std::vector<double>> features;
    std::vector<PieceAttributes> labels;
    for (const auto& e : corpus.examples) {
        features.push_back(token_features(e.tokens, books.codewords));
        labels.push_back(e.attrs);
    }
    ProbeTrainConfig cfg;
    cfg.seed = seed;
    return Probe::train(ProbeInput::Tokens, books.codewords, features, labels, cfg);
}

Probe train_frame_probe(std::size_t pieces, std::size_t length, std::uint64_t seed) {
    const auto corpus = sample_corpus(pieces, length, derive_seed(seed, "probe"));
    std::vector<std::vector<double>> features;
    std::vector<PieceAttributes> labels;
    for (const auto& e : corpus.examples) {
        features.push_back(frame_features(e.frames));
        labels.push_back(e.attrs);
    }
    ProbeTrainConfig cfg;
    cfg.seed = seed;
    return Probe::train(ProbeInput::Frames, kFrameFeatures, features, labels, cfg);
}

AlignmentResult alignment_score(const std::vector<ProbeOutput>& outputs, const std::vector<std::string>& captions) {
    if (outputs.size() != captions.size()) throw ArgumentError("alignment_score: outputs and captions differ in count");
    AlignmentResult r;
    double total = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const auto attrs = parse_caption(captions[i]);
        if (!attrs) {
            ++r.skipped;
            continue;
        }
        const auto truth = attribute_labels(*attrs);
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += outputs[i].posterior[k][static_cast<std::size_t>(truth[k])];
        total += s / 4.0;
        ++r.scored;
    }
    r.score = r.scored ? total / double(r.scored) : 0.0;
    return r;
}

double kld_probe(const std::vector<ProbeOutput>& ref, const std::vector<ProbeOutput>& gen) {
    if (ref.size() != gen.size() || ref.empty()) {
        throw ArgumentError("kld_probe: need equally many paired reference and generated pieces");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        for (std::size_t k = 0; k < 4; ++k) total += kl_divergence(ref[i].posterior[k], gen[i].posterior[k]);
    }
    return total / double(4 * ref.size());
}

GaussianStats embedding_stats(const std::vector<ProbeOutput>& outputs) {
    if (outputs.empty()) throw InsufficientDataError("embedding_stats: no outputs");
    const std::size_t d = outputs.front().embedding.size();
    std::vector<double> rows;
    rows.reserve(d * outputs.size());
    for (const auto& o : outputs) rows.insert(rows.end(), o.embedding.begin(), o.embedding.end());
    return gaussian_stats(rows, d);
}

std::string format_metrics_row(const MetricsRecord& r) {
    return std::to_string(r.step) + "," + r.arch + "," + format_double(r.fd) + "," + format_double(r.kld) + "," +
           format_double(r.alignment) + "," + std::to_string(r.n_examples);
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsCsvHeader) throw DataError("metrics CSV lacks the expected header");
    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::istringstream row(line);
        for (std::string c; std::getline(row, c, ',');) cols.push_back(c);
        if (cols.size() != 6) throw DataError("metrics CSV row has " + std::to_string(cols.size()) + " fields: " + line);
        try {
            out.push_back({std::stoull(cols[0]), cols[1], std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4]),
                           std::stoull(cols[5])});
        } catch (const std::exception&) {
            throw DataError("malformed metrics CSV row: " + line);
        }
    }
    return out;
}

std::vector<std::vector<int>> generate_for(const LanguageModel<float>& model, const std::vector<const Example*>& examples,
                                           const GenerationConfig& cfg, std::size_t threads) {
    std::vector<std::vector<int>> out(examples.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < examples.size(); i = next++) {
            const auto* e = examples[i];
            out[i] = model.generate(model.encode_caption(e->caption), cfg.steps, cfg.temperature, cfg.top_k,
                                    derive_seed(cfg.seed, e->id));
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, examples.size()));
    if (threads == 1) {
        worker();
        return out;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
}

MetricsRecord score_generations(const std::vector<const Example*>& reference,
                                const std::vector<std::vector<int>>& generated, const Probe& probe) {
    if (reference.size() != generated.size()) throw ArgumentError("score_generations: unpaired inputs");
    std::vector<ProbeOutput> ref, gen;
    std::vector<std::string> captions;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        ref.push_back(probe.run_tokens(reference[i]->tokens));
        gen.push_back(probe.run_tokens(generated[i]));
        captions.push_back(reference[i]->caption);
    }
    MetricsRecord r;
    r.fd = frechet_distance(embedding_stats(ref), embedding_stats(gen));
    r.kld = kld_probe(ref, gen);
    r.alignment = alignment_score(gen, captions).score;
    r.n_examples = reference.size();
    return r;
}

MetricsRecord evaluate_checkpoint(const LanguageModel<float>& model, std::size_t step,
                                  const std::vector<const Example*>& reference, const Probe& probe,
                                  const GenerationConfig& cfg, std::size_t threads) {
    auto r = score_generations(reference, generate_for(model, reference, cfg, threads), probe);
    r.step = step;
    r.arch = std::string(arch_name(model.config().arch));
    return r;
}

}  // namespace ssmg
