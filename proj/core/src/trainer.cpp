#include "ssmg/trainer.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "ssmg/binary_io.hpp"
#include "ssmg/error.hpp"
#include "ssmg/ops.hpp"

namespace ssmg {

void TrainConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(micro_batch, "micro_batch");
    positive(accum_steps, "accum_steps");
    positive(total_steps, "total_steps");
    positive(warmup_steps, "warmup_steps");
    positive(eval_every, "eval_every");
    if (warmup_steps >= total_steps) throw ConfigError("warmup_steps must be below total_steps");
    if (!(lr_max > 0.0) || !std::isfinite(lr_max)) throw ConfigError("lr_max must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
}

TrainConfig TrainConfig::read(KeyValues& kv) {
    TrainConfig c;
    c.lr_max = kv.read_double("lr_max", c.lr_max);
    c.weight_decay = kv.read_double("weight_decay", c.weight_decay);
    c.beta1 = kv.read_double("beta1", c.beta1);
    c.beta2 = kv.read_double("beta2", c.beta2);
    c.eps = kv.read_double("eps", c.eps);
    c.micro_batch = kv.read_size("micro_batch", c.micro_batch);
    c.accum_steps = kv.read_size("accum_steps", c.accum_steps);
    c.total_steps = kv.read_size("total_steps", c.total_steps);
    c.warmup_steps = kv.read_size("warmup_steps", c.warmup_steps);
    c.eval_every = kv.read_size("eval_every", c.eval_every);
    c.seed = kv.read_u64("seed", c.seed);
    return c;
}

void TrainConfig::write(KeyValues& kv) const {
    kv.set("lr_max", format_double(lr_max));
    kv.set("weight_decay", format_double(weight_decay));
    kv.set("beta1", format_double(beta1));
    kv.set("beta2", format_double(beta2));
    kv.set("eps", format_double(eps));
    kv.set("micro_batch", std::to_string(micro_batch));
    kv.set("accum_steps", std::to_string(accum_steps));
    kv.set("total_steps", std::to_string(total_steps));
    kv.set("warmup_steps", std::to_string(warmup_steps));
    kv.set("eval_every", std::to_string(eval_every));
    kv.set("seed", std::to_string(seed));
}

double lr_schedule(std::size_t step, const TrainConfig& cfg) {
    if (step > cfg.total_steps) {
        throw ArgumentError("lr_schedule: step " + std::to_string(step) + " beyond total_steps " +
                            std::to_string(cfg.total_steps));
    }
    if (step < cfg.warmup_steps) return cfg.lr_max * double(step) / double(cfg.warmup_steps);
    const double progress = double(step - cfg.warmup_steps) / double(cfg.total_steps - cfg.warmup_steps);
    return cfg.lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
bool adamw_step(const ParameterSet<T>& params, OptimizerState& state, const TrainConfig& cfg, double lr) {
    const auto& entries = params.entries();
    if (state.m.empty()) {
        for (const auto& [name, p] : entries) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != entries.size()) throw ContractError("optimizer state does not match the parameter set");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& p = entries[i].second;
        if (state.m[i].size() != p.size()) throw ContractError("optimizer moments for " + entries[i].first + " mis-sized");
        if (!p.has_grad()) continue;
        for (T g : p.grad()) {
            if (!std::isfinite(static_cast<double>(g))) {
                ++state.skipped;
                return false;
            }
        }
    }

    ++state.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, double(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(state.t));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& p = entries[i].second;
        auto w = p.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const std::span<const T> g = p.has_grad() ? p.grad() : std::span<const T>{};
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            const double m_hat = m[j] / c1, v_hat = v[j] / c2;
            const double wj = static_cast<double>(w[j]);
            w[j] = static_cast<T>(wj - lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * wj));
        }
    }
    return true;
}

template bool adamw_step(const ParameterSet<float>&, OptimizerState&, const TrainConfig&, double);
template bool adamw_step(const ParameterSet<double>&, OptimizerState&, const TrainConfig&, double);

BatchIterator::BatchIterator(std::size_t count, std::uint64_t seed) : count_(count), seed_(seed) {
    if (count == 0) throw InsufficientDataError("no training sequences");
    shuffle();
}

void BatchIterator::shuffle() {
    order_.resize(count_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, fnv1a64("epoch"), epoch_));
    for (std::size_t i = count_; i > 1; --i) std::swap(order_[i - 1], order_[uniform_index(rng, i)]);
}

std::size_t BatchIterator::next() {
    if (position_ == count_) {
        ++epoch_;
        position_ = 0;
        shuffle();
    }
    return order_[position_++];
}

void BatchIterator::restore(std::size_t epoch, std::size_t position) {
    if (position > count_) throw IntegrityError("batch position " + std::to_string(position) + " out of range");
    epoch_ = epoch;
    position_ = position;
    shuffle();
}

std::vector<TrainSequence> training_sequences(const Corpus& corpus, Split split) {
    std::vector<TrainSequence> out;
    for (const auto* e : corpus.split(split)) {
        if (e->tokens.empty()) throw DataError("example " + std::to_string(e->id) + " has no tokens");
        out.push_back({e->tokens, e->caption});
    }
    return out;
}

template <typename T>
Trainer<T>::Trainer(LanguageModel<T>& model, std::vector<TrainSequence> data, const TrainConfig& cfg)
    : model_(model),
      data_(std::move(data)),
      cfg_(cfg),
      batches_(data_.size(), derive_seed(cfg.seed, fnv1a64("batches"))),
      dropout_rng_(derive_seed(cfg.seed, fnv1a64("dropout"))) {
    cfg_.validate();
}

template <typename T>
const Tensor<T>& Trainer<T>::text_for(const std::string& caption) {
    auto it = text_cache_.find(caption);
    if (it == text_cache_.end()) it = text_cache_.emplace(caption, model_.encode_caption(caption)).first;
    return it->second;
}

template <typename T>
StepResult Trainer<T>::train_step() {
    if (step_ >= cfg_.total_steps) throw ContractError("training already reached total_steps");
    const auto& params = model_.params();
    params.zero_grad();
    const RunMode mode{true, &dropout_rng_};
    const std::size_t sequences = cfg_.micro_batch * cfg_.accum_steps;
    const T weight = static_cast<T>(1.0 / double(sequences));
    double loss_sum = 0.0;
    for (std::size_t a = 0; a < cfg_.accum_steps; ++a) {
        for (std::size_t b = 0; b < cfg_.micro_batch; ++b) {
            const auto& seq = data_[batches_.next()];
            Tape<T> tape;
            TapeScope<T> scope(tape);
            auto loss = model_.loss(seq.tokens, text_for(seq.caption), mode);
            loss_sum += static_cast<double>(loss.item());
            tape.backward(scale(loss, weight));
        }
    }
    StepResult r;
    r.lr = lr_schedule(step_ + 1, cfg_);
    r.applied = adamw_step(params, opt_, cfg_, r.lr);
    r.loss = loss_sum / double(sequences);
    r.step = ++step_;
    return r;
}

template <typename T>
double Trainer<T>::evaluate(const std::vector<TrainSequence>& data) {
    if (data.empty()) throw InsufficientDataError("no evaluation sequences");
    NoGradScope<T> no_grad;
    double total = 0.0;
    for (const auto& seq : data) total += static_cast<double>(model_.loss(seq.tokens, text_for(seq.caption), RunMode{}).item());
    return total / double(data.size());
}

template <typename T>
std::string Trainer<T>::save_state() const {
    ByteWriter w;
    w.bytes("TRN1");
    w.u64(step_);
    w.u64(opt_.t);
    w.u64(opt_.skipped);
    w.u64(batches_.epoch());
    w.u64(batches_.position());
    w.str(serialize_rng(dropout_rng_));
    w.u64(opt_.m.size());
    for (std::size_t i = 0; i < opt_.m.size(); ++i) {
        w.u64(opt_.m[i].size());
        for (double x : opt_.m[i]) w.f64(x);
        for (double x : opt_.v[i]) w.f64(x);
    }
    return w.take();
}

template <typename T>
void Trainer<T>::load_state(const std::string& bytes) {
    ByteReader r(bytes);
    r.expect_magic("TRN1", "trainer state");
    const auto step = r.u64(), t = r.u64(), skipped = r.u64(), epoch = r.u64(), position = r.u64();
    Rng rng = deserialize_rng(r.str());
    const auto count = r.u64();
    const auto& entries = model_.params().entries();
    if (count != 0 && count != entries.size()) throw IntegrityError("trainer state has moments for a different model");
    OptimizerState opt;
    for (std::size_t i = 0; i < count; ++i) {
        const auto n = r.u64();
        if (n != entries[i].second.size()) throw IntegrityError("trainer moments for " + entries[i].first + " mis-sized");
        std::vector<double> m(n), v(n);
        for (auto& x : m) x = r.f64();
        for (auto& x : v) x = r.f64();
        opt.m.push_back(std::move(m));
        opt.v.push_back(std::move(v));
    }
    if (r.remaining() != 0) throw IntegrityError("trainer state has trailing bytes");
    if (step > cfg_.total_steps) throw IntegrityError("trainer state step beyond total_steps");
    opt.t = t;
    opt.skipped = skipped;
    batches_.restore(epoch, position);
    opt_ = std::move(opt);
    dropout_rng_ = rng;
    step_ = step;
}

std::string format_loss_row(std::size_t step, std::string_view split, double loss, double lr) {
    return std::to_string(step) + "," + std::string(split) + "," + format_double(loss) + "," + format_double(lr);
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace ssmg
