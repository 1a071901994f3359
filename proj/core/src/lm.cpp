#include "ssmg/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssmg/checkpoint.hpp"
#include "ssmg/error.hpp"
#include "ssmg/layers.hpp"
#include "ssmg/ops.hpp"
#include "ssmg/text_encoder.hpp"

namespace ssmg {

std::string_view arch_name(Arch arch) {
    return arch == Arch::PrefixSimba ? "prefix_simba" : "cross_transformer";
}

Arch parse_arch(std::string_view name) {
    if (name == "prefix_simba") return Arch::PrefixSimba;
    if (name == "cross_transformer") return Arch::CrossTransformer;
    throw ArgumentError("unknown arch '" + std::string(name) + "'; expected one of {prefix_simba, cross_transformer}");
}

LmConfig LmConfig::paper_scale() {
    LmConfig cfg;
    cfg.d_model = 1024;
    cfg.state_dim = 512;
    cfg.ssm_heads = 32;
    cfg.ssm_head_dim = 64;
    cfg.attn_heads = 16;
    cfg.dropout = 0.3;
    return cfg;
}

SsmConfig LmConfig::ssm() const {
    SsmConfig s;
    s.d_model = d_model;
    s.n_heads = ssm_heads;
    s.head_dim = ssm_head_dim;
    s.state_dim = state_dim;
    s.conv_width = conv_width;
    s.dropout = dropout;
    return s;
}

AttnConfig LmConfig::attn() const {
    AttnConfig a;
    a.d_model = d_model;
    a.n_heads = attn_heads;
    a.ffn_expansion = ffn_expansion;
    a.dropout = dropout;
    return a;
}

void LmConfig::validate() const {
    if (vocab < 2) throw ConfigError("vocab must be at least 2");
    if (n_blocks == 0 || d_model == 0 || text_dim == 0) throw ConfigError("n_blocks, d_model and text_dim must be positive");
    if (max_len < 2) throw ConfigError("max_len must be at least 2");
    if (arch == Arch::PrefixSimba) {
        ssm().validate();
    } else {
        attn().validate();
    }
}

LmConfig LmConfig::read(KeyValues& kv) {
    LmConfig c;
    c.arch = parse_arch(kv.read_string("arch", std::string(arch_name(c.arch))));
    c.vocab = kv.read_size("vocab", c.vocab);
    c.n_blocks = kv.read_size("n_blocks", c.n_blocks);
    c.d_model = kv.read_size("d_model", c.d_model);
    c.text_dim = kv.read_size("text_dim", c.text_dim);
    c.max_len = kv.read_size("max_len", c.max_len);
    c.text_seed = kv.read_u64("text_seed", c.text_seed);
    c.dropout = kv.read_double("dropout", c.dropout);
    c.attn_heads = kv.read_size("attn_heads", c.attn_heads);
    c.ffn_expansion = kv.read_size("ffn_expansion", c.ffn_expansion);
    c.ssm_heads = kv.read_size("ssm_heads", c.ssm_heads);
    c.ssm_head_dim = kv.read_size("ssm_head_dim", c.ssm_head_dim);
    c.state_dim = kv.read_size("state_dim", c.state_dim);
    c.conv_width = kv.read_size("conv_width", c.conv_width);
    return c;
}

void LmConfig::write(KeyValues& kv) const {
    kv.set("arch", std::string(arch_name(arch)));
    kv.set("vocab", std::to_string(vocab));
    kv.set("n_blocks", std::to_string(n_blocks));
    kv.set("d_model", std::to_string(d_model));
    kv.set("text_dim", std::to_string(text_dim));
    kv.set("max_len", std::to_string(max_len));
    kv.set("text_seed", std::to_string(text_seed));
    kv.set("dropout", format_double(dropout));
    kv.set("attn_heads", std::to_string(attn_heads));
    kv.set("ffn_expansion", std::to_string(ffn_expansion));
    kv.set("ssm_heads", std::to_string(ssm_heads));
    kv.set("ssm_head_dim", std::to_string(ssm_head_dim));
    kv.set("state_dim", std::to_string(state_dim));
    kv.set("conv_width", std::to_string(conv_width));
}

template <typename T>
Tensor<T> sinusoidal_positions(std::size_t first_position, std::size_t count, std::size_t d_model) {
    std::vector<T> out(count * d_model);
    for (std::size_t i = 0; i < count; ++i) {
        const double pos = double(first_position + i);
        for (std::size_t j = 0; j < d_model; ++j) {
            const double freq = std::pow(10000.0, -double(j - j % 2) / double(d_model));
            out[i * d_model + j] = static_cast<T>(j % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
        }
    }
    return Tensor<T>({count, d_model}, std::move(out));
}

template <typename T>
LanguageModel<T>::LanguageModel(const LmConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "lm-init"));
    const std::size_t d = cfg.d_model, C = cfg.classes();
    token_embedding_ = params_.add("token_embedding", init::normal<T>({C, d}, 1.0, rng));
    text_w_ = params_.add("text_proj.w", linear_weight<T>(cfg.text_dim, d, rng));
    text_b_ = params_.add("text_proj.b", Tensor<T>::zeros({d}));
    text_norm_ = params_.add("text_proj.norm", Tensor<T>::full({d}, T(1)));
    if (cfg.arch == Arch::PrefixSimba) {
        simba_.reserve(cfg.n_blocks);
        for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
            simba_.emplace_back(cfg_.ssm(), params_, "block" + std::to_string(i), rng);
        }
    } else {
        transformer_.reserve(cfg.n_blocks);
        for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
            transformer_.emplace_back(cfg_.attn(), params_, "block" + std::to_string(i), rng);
        }
    }
    final_norm_ = params_.add("final_norm", Tensor<T>::full({d}, T(1)));
    // Zero head: the untrained model predicts the uniform distribution.
    head_w_ = params_.add("head.w", Tensor<T>::zeros({d, C}));
    head_b_ = params_.add("head.b", Tensor<T>::zeros({C}));
}

template <typename T>
Tensor<T> LanguageModel<T>::encode_caption(std::string_view caption) const {
    return encode_text<T>(caption, cfg_.text_seed, cfg_.text_dim);
}

template <typename T>
void LanguageModel<T>::check_text(const Tensor<T>& text) const {
    if (!text.defined()) {
        if (cfg_.arch == Arch::CrossTransformer) {
            throw EmptyConditionError("cross_transformer needs a non-empty text condition");
        }
        return;
    }
    if (text.rank() != 2 || text.dim(1) != cfg_.text_dim) {
        throw DimensionError("text condition must be [T x " + std::to_string(cfg_.text_dim) + "], got " +
                             shape_to_string(text.shape()));
    }
}

template <typename T>
Tensor<T> LanguageModel<T>::embed(std::span<const int> ids, std::size_t first_position) const {
    auto x = embedding(token_embedding_, ids);
    if (cfg_.arch == Arch::CrossTransformer) x = add(x, sinusoidal_positions<T>(first_position, ids.size(), cfg_.d_model));
    return x;
}

template <typename T>
Tensor<T> LanguageModel<T>::project_text(const Tensor<T>& text) const {
    return rms_norm(linear(text, text_w_, text_b_), text_norm_, T(1e-6));
}

template <typename T>
Tensor<T> LanguageModel<T>::head(const Tensor<T>& hidden) const {
    return linear(rms_norm(hidden, final_norm_, T(1e-6)), head_w_, head_b_);
}

template <typename T>
Tensor<T> LanguageModel<T>::forward_logits(std::span<const int> tokens, const Tensor<T>& text,
                                           const RunMode& mode) const {
    check_text(text);
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    ids.push_back(cfg_.bos());
    ids.insert(ids.end(), tokens.begin(), tokens.end());
    const std::size_t prefix = (cfg_.arch == Arch::PrefixSimba && text.defined()) ? text.dim(0) : 0;
    if (prefix + ids.size() > cfg_.max_len) {
        throw ContextLengthError("sequence of " + std::to_string(prefix) + " text + " + std::to_string(ids.size()) +
                                 " audio positions exceeds max_len " + std::to_string(cfg_.max_len));
    }
    auto x = embed(ids, 0);
    if (cfg_.arch == Arch::PrefixSimba) {
        if (prefix > 0) x = concat<T>({project_text(text), x}, 0);
        for (const auto& block : simba_) x = block.forward(x, mode);
        if (prefix > 0) x = slice(x, 0, prefix, prefix + ids.size());
    } else {
        const auto cond = project_text(text);
        for (const auto& block : transformer_) x = block.forward(x, cond, mode);
    }
    return head(x);
}

template <typename T>
Tensor<T> LanguageModel<T>::sequence_logits(std::span<const int> tokens, const Tensor<T>& text,
                                            const RunMode& mode) const {
    if (tokens.empty()) throw ArgumentError("sequence_logits: need at least one token");
    return forward_logits(tokens.first(tokens.size() - 1), text, mode);
}

template <typename T>
Tensor<T> LanguageModel<T>::loss(std::span<const int> tokens, const Tensor<T>& text, const RunMode& mode,
                                 LossInfo* info) const {
    CrossEntropyInfo ce;
    auto out = softmax_cross_entropy(sequence_logits(tokens, text, mode), tokens, cfg_.pad(), &ce);
    if (info) *info = LossInfo{ce.counted, ce.counted == 0};
    return out;
}

template <typename T>
std::vector<int> LanguageModel<T>::generate(const Tensor<T>& text, std::size_t steps, double temperature, int top_k,
                                            std::uint64_t seed) const {
    if (steps == 0) throw ArgumentError("generate: steps must be at least 1");
    if (top_k < 1) throw ArgumentError("generate: top_k must be at least 1");
    if (!(temperature >= 0.0)) throw ArgumentError("generate: temperature must be non-negative");
    NoGradScope<T> no_grad;
    Rng rng(derive_seed(seed, "generate"));
    IncrementalDecoder<T> decoder(*this, text);
    std::vector<int> out;
    out.reserve(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        // Only codec tokens are sampled; BOS and PAD never appear in the output.
        const int token = sample_token<T>(decoder.logits().first(cfg_.vocab), temperature, top_k, rng);
        out.push_back(token);
        if (i + 1 < steps) decoder.push(token);
    }
    return out;
}

template <typename T>
IncrementalDecoder<T>::IncrementalDecoder(const LanguageModel<T>& model, const Tensor<T>& text) : model_(model) {
    NoGradScope<T> no_grad;
    const auto& cfg = model.cfg_;
    model.check_text(text);
    if (text.defined()) text_ = model.project_text(text);
    const int bos = cfg.bos();
    auto x = model.embed(std::span<const int>(&bos, 1), 0);
    if (cfg.arch == Arch::PrefixSimba) {
        for (std::size_t i = 0; i < cfg.n_blocks; ++i) simba_states_.emplace_back(cfg.ssm());
        if (text_.defined()) x = concat<T>({text_, x}, 0);
    } else {
        transformer_states_.resize(cfg.n_blocks);
    }
    context_ = x.dim(0);
    if (context_ > cfg.max_len) throw ContextLengthError("text prefix exceeds max_len " + std::to_string(cfg.max_len));
    absorb(x);
}

template <typename T>
void IncrementalDecoder<T>::push(int token) {
    NoGradScope<T> no_grad;
    const auto& cfg = model_.cfg_;
    if (context_ + 1 > cfg.max_len) {
        throw ContextLengthError("decoding past max_len " + std::to_string(cfg.max_len));
    }
    auto x = model_.embed(std::span<const int>(&token, 1), consumed_ + 1);
    ++consumed_;
    ++context_;
    absorb(x);
}

template <typename T>
void IncrementalDecoder<T>::absorb(const Tensor<T>& input) {
    const RunMode eval{};
    Tensor<T> x = input;
    if (!simba_states_.empty()) {
        for (std::size_t i = 0; i < model_.simba_.size(); ++i) x = model_.simba_[i].forward(x, eval, &simba_states_[i]);
    } else {
        for (std::size_t i = 0; i < model_.transformer_.size(); ++i) {
            x = model_.transformer_[i].forward(x, text_, eval, &transformer_states_[i]);
        }
    }
    const std::size_t last = x.dim(0) - 1;
    const auto logits = model_.head(slice(x, 0, last, last + 1));
    logits_.assign(logits.data().begin(), logits.data().end());
}

template <typename T>
int sample_token(std::span<const T> logits, double temperature, int top_k, Rng& rng) {
    if (logits.empty()) throw ArgumentError("sample_token: no logits");
    if (top_k < 1) throw ArgumentError("sample_token: top_k must be at least 1");
    if (!(temperature >= 0.0)) throw ArgumentError("sample_token: temperature must be non-negative");
    std::vector<std::size_t> order(logits.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(top_k), logits.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
    if (temperature == 0.0 || k == 1) return static_cast<int>(order.front());
    const double peak = double(logits[order.front()]);
    std::vector<double> weight(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        weight[i] = std::exp((double(logits[order[i]]) - peak) / temperature);
        total += weight[i];
    }
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < k; ++i) {
        if (u < weight[i]) return static_cast<int>(order[i]);
        u -= weight[i];
    }
    return static_cast<int>(order[k - 1]);
}

void save_model(const LanguageModel<float>& model, const std::filesystem::path& path,
                const std::optional<std::string>& trainer_state) {
    KeyValues kv;
    model.config().write(kv);
    save_checkpoint(CheckpointData{kv.to_text(), export_parameters(model.params()), trainer_state}, path);
}

LanguageModel<float> load_model(const std::filesystem::path& path, std::optional<std::string>* trainer_state) {
    auto data = load_checkpoint(path);
    LmConfig cfg;
    try {
        auto kv = KeyValues::parse(data.config_text);
        cfg = LmConfig::read(kv);
        kv.finish();
    } catch (const Error& e) {
        throw IntegrityError("checkpoint " + path.string() + " has an invalid model config: " + e.what());
    }
    LanguageModel<float> model(cfg, 0);
    import_parameters(model.params(), data.tensors);
    if (trainer_state) *trainer_state = std::move(data.trainer_state);
    return model;
}

#define SSMG_INSTANTIATE_LM(T)                                                                 \
    template class LanguageModel<T>;                                                           \
    template class IncrementalDecoder<T>;                                                      \
    template int sample_token<T>(std::span<const T>, double, int, Rng&);                       \
    template Tensor<T> sinusoidal_positions<T>(std::size_t, std::size_t, std::size_t);

SSMG_INSTANTIATE_LM(float)
SSMG_INSTANTIATE_LM(double)

}  // namespace ssmg
