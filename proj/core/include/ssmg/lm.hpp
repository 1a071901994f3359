#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssmg/attention.hpp"
#include "ssmg/key_values.hpp"
#include "ssmg/params.hpp"
#include "ssmg/random.hpp"
#include "ssmg/simba.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg {

enum class Arch { PrefixSimba, CrossTransformer };

std::string_view arch_name(Arch arch);
// Raises ArgumentError listing the accepted names.
Arch parse_arch(std::string_view name);

struct LmConfig {
    Arch arch = Arch::PrefixSimba;
    std::size_t vocab = 64;
    std::size_t n_blocks = 4;
    std::size_t d_model = 64;
    std::size_t text_dim = 768;
    std::size_t max_len = 1024;
    std::uint64_t text_seed = 2024;
    double dropout = 0.3;
    // cross_transformer
    std::size_t attn_heads = 4;
    std::size_t ffn_expansion = 2;
    // prefix_simba
    std::size_t ssm_heads = 4;
    std::size_t ssm_head_dim = 32;
    std::size_t state_dim = 16;
    std::size_t conv_width = 4;

    // Hidden size 1024, state 512, dropout 0.3.
    static LmConfig paper_scale();

    int bos() const { return static_cast<int>(vocab); }
    int pad() const { return static_cast<int>(vocab) + 1; }
    std::size_t classes() const { return vocab + 2; }

    SsmConfig ssm() const;
    AttnConfig attn() const;
    void validate() const;

    // Reads the keys above (missing keys keep their defaults) and writes them back.
    static LmConfig read(KeyValues& kv);
    void write(KeyValues& kv) const;
};

struct LossInfo {
    std::size_t counted = 0;
    bool all_padding = false;
};

template <typename T>
class IncrementalDecoder;

// Conditional next-token model over layer-1 codec tokens. BOS (= vocab) is prepended
// internally; PAD (= vocab + 1) targets are ignored by the loss.
template <typename T>
class LanguageModel {
public:
    LanguageModel(const LmConfig& cfg, std::uint64_t seed);
    LanguageModel(const LanguageModel&) = delete;
    LanguageModel& operator=(const LanguageModel&) = delete;
    LanguageModel(LanguageModel&&) = default;

    const LmConfig& config() const { return cfg_; }
    const ParameterSet<T>& params() const { return params_; }

    // Frozen text condition [T x text_dim] for a caption.
    Tensor<T> encode_caption(std::string_view caption) const;

    // Logits [(L+1) x (vocab+2)]: row i predicts the token after BOS, tokens[0..i).
    Tensor<T> forward_logits(std::span<const int> tokens, const Tensor<T>& text, const RunMode& mode) const;

    // Rows predicting each of tokens[0..L): forward_logits over tokens[0..L-1).
    Tensor<T> sequence_logits(std::span<const int> tokens, const Tensor<T>& text, const RunMode& mode) const;

    // Mean next-token cross-entropy over the audio positions.
    Tensor<T> loss(std::span<const int> tokens, const Tensor<T>& text, const RunMode& mode,
                   LossInfo* info = nullptr) const;

    // Autoregressive sampling with carried state. temperature 0 means argmax.
    std::vector<int> generate(const Tensor<T>& text, std::size_t steps, double temperature, int top_k,
                              std::uint64_t seed) const;

private:
    friend class IncrementalDecoder<T>;

    Tensor<T> embed(std::span<const int> ids, std::size_t first_position) const;
    // Linear map to d_model, then RMS norm with a learned gain (the encoder's final norm).
    Tensor<T> project_text(const Tensor<T>& text) const;
    Tensor<T> head(const Tensor<T>& hidden) const;
    void check_text(const Tensor<T>& text) const;

    LmConfig cfg_;
    ParameterSet<T> params_;
    Tensor<T> token_embedding_, text_w_, text_b_, text_norm_, final_norm_, head_w_, head_b_;
    std::vector<SimbaBlock<T>> simba_;
    std::vector<TransformerBlock<T>> transformer_;
};

// Step-by-step decoding with carried SSM state or key/value caches.
template <typename T>
class IncrementalDecoder {
public:
    IncrementalDecoder(const LanguageModel<T>& model, const Tensor<T>& text);

    // Logits of the next token given everything pushed so far.
    std::span<const T> logits() const { return logits_; }
    void push(int token);
    std::size_t tokens_consumed() const { return consumed_; }

private:
    void absorb(const Tensor<T>& hidden);

    const LanguageModel<T>& model_;
    Tensor<T> text_;
    std::vector<SimbaBlockState<T>> simba_states_;
    std::vector<TransformerBlockState<T>> transformer_states_;
    std::vector<T> logits_;
    std::size_t consumed_ = 0;
    std::size_t context_ = 0;
};

// Draws from softmax(logits / temperature) restricted to the top_k largest logits
// (ties to the lower index). temperature 0 or top_k 1 is argmax.
template <typename T>
int sample_token(std::span<const T> logits, double temperature, int top_k, Rng& rng);

// Sinusoidal position code added to token embeddings in the attention model.
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t first_position, std::size_t count, std::size_t d_model);

void save_model(const LanguageModel<float>& model, const std::filesystem::path& path,
                const std::optional<std::string>& trainer_state = std::nullopt);
// Rebuilds the model described by the file; trainer_state (when given) receives the trainer section.
LanguageModel<float> load_model(const std::filesystem::path& path, std::optional<std::string>* trainer_state = nullptr);

extern template class LanguageModel<float>;
extern template class LanguageModel<double>;
extern template class IncrementalDecoder<float>;
extern template class IncrementalDecoder<double>;

}  // namespace ssmg
