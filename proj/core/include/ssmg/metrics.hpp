#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssmg/lm.hpp"
#include "ssmg/synthdata.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg {

// Mean and unbiased covariance (row-major dim x dim) of a sample set.
struct GaussianStats {
    std::size_t dim = 0;
    std::size_t count = 0;
    std::vector<double> mean;
    std::vector<double> cov;
};

// samples is count x dim, row-major; count must be at least 2.
GaussianStats gaussian_stats(std::span<const double> samples, std::size_t dim);

// Q sqrt(max(L, 0)) Q^T of a symmetric PSD matrix (row-major d x d).
std::vector<double> matrix_sqrt_psd(std::span<const double> m, std::size_t d);

// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 sqrt(sqrt(S_a) S_b sqrt(S_a))), clamped at zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// KL(p || q) after adding eps to every entry and renormalizing both.
double kl_divergence(std::span<const double> p, std::span<const double> q, double eps = 1e-8);

enum class ProbeInput { Tokens, Frames };

// Fixed-length summary of one piece for the probe.
//   Tokens: normalized histogram of layer-1 token ids (mean of one-hot rows).
//   Frames: normalized histogram of nearest pitches and rests, then the onset rate.
inline constexpr std::size_t kFrameFeatures = kPitchCount + 2;
std::vector<double> token_features(std::span<const int> tokens, std::size_t vocab);
std::vector<double> frame_features(const Tensor<double>& frames);

struct ProbeOutput {
    std::vector<double> embedding;                // hidden activations
    std::array<std::vector<double>, 4> posterior;  // per head, in kHeadClasses order
};

struct ProbeTrainConfig {
    std::size_t hidden = 32;
    std::size_t steps = 600;
    double lr = 1e-2;
    std::uint64_t seed = 0;
};

// Two-layer classifier: features -> tanh(hidden) -> four softmax heads. The first layer
// over a token histogram equals mean pooling of learned token embeddings.
class Probe {
public:
    Probe() = default;

    static Probe train(ProbeInput input, std::size_t input_dim, const std::vector<std::vector<double>>& features,
                       const std::vector<PieceAttributes>& labels, const ProbeTrainConfig& cfg);

    ProbeInput input() const { return input_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t hidden() const { return hidden_; }

    ProbeOutput run(std::span<const double> features) const;
    ProbeOutput run_tokens(std::span<const int> tokens) const;
    ProbeOutput run_frames(const Tensor<double>& frames) const;

    // Fraction of pieces whose argmax matches on all four heads.
    double joint_accuracy(const std::vector<std::vector<double>>& features,
                          const std::vector<PieceAttributes>& labels) const;

    void save(const std::filesystem::path& path) const;
    static Probe load(const std::filesystem::path& path);

private:
    ProbeInput input_ = ProbeInput::Tokens;
    std::size_t input_dim_ = 0;
    std::size_t hidden_ = 0;
    std::vector<double> w1_, b1_;                 // [input x hidden], [hidden]
    std::array<std::vector<double>, 4> w2_, b2_;  // per head [hidden x classes], [classes]
};

// Probe trained on a dedicated corpus drawn with seed derive_seed(seed, "probe").
Probe train_token_probe(const RvqCodebooks& books, std::size_t pieces, std::size_t length, std::uint64_t seed);
Probe train_frame_probe(std::size_t pieces, std::size_t length, std::uint64_t seed);

struct AlignmentResult {
    double score = 0.0;
    std::size_t scored = 0;
    std::size_t skipped = 0;  // captions without recoverable attributes
};

// Mean over pieces and heads of the posterior given to each caption's stated attribute.
AlignmentResult alignment_score(const std::vector<ProbeOutput>& outputs, const std::vector<std::string>& captions);

// Mean over pairs and heads of KL(p_ref || p_gen).
double kld_probe(const std::vector<ProbeOutput>& ref, const std::vector<ProbeOutput>& gen);

GaussianStats embedding_stats(const std::vector<ProbeOutput>& outputs);

struct MetricsRecord {
    std::size_t step = 0;
    std::string arch;
    double fd = 0.0;
    double kld = 0.0;
    double alignment = 0.0;
    std::size_t n_examples = 0;
};

inline constexpr std::string_view kMetricsCsvHeader = "step,arch,fd,kld,alignment,n_examples";
std::string format_metrics_row(const MetricsRecord& r);
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

struct GenerationConfig {
    std::size_t steps = 500;
    double temperature = 1.0;
    int top_k = 64;
    std::uint64_t seed = 0;
};

// One generated sequence per example, seeded by derive_seed(seed, example id). Runs on
// up to `threads` workers; the output does not depend on the thread count.
std::vector<std::vector<int>> generate_for(const LanguageModel<float>& model, const std::vector<const Example*>& examples,
                                           const GenerationConfig& cfg, std::size_t threads = 1);

// Three metrics of generations conditioned on each reference caption against the
// reference pieces themselves.
MetricsRecord score_generations(const std::vector<const Example*>& reference,
                                const std::vector<std::vector<int>>& generated, const Probe& probe);

MetricsRecord evaluate_checkpoint(const LanguageModel<float>& model, std::size_t step,
                                  const std::vector<const Example*>& reference, const Probe& probe,
                                  const GenerationConfig& cfg, std::size_t threads = 1);

}  // namespace ssmg
