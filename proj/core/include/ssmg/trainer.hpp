#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ssmg/key_values.hpp"
#include "ssmg/lm.hpp"
#include "ssmg/params.hpp"
#include "ssmg/random.hpp"
#include "ssmg/synthdata.hpp"

namespace ssmg {

struct TrainConfig {
    double lr_max = 1e-4;
    double weight_decay = 2e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t micro_batch = 4;
    std::size_t accum_steps = 32;
    std::size_t total_steps = 3000;
    std::size_t warmup_steps = 100;
    std::size_t eval_every = 250;
    std::uint64_t seed = 0;

    void validate() const;
    static TrainConfig read(KeyValues& kv);
    void write(KeyValues& kv) const;
};

// Linear warmup to lr_max, then cosine annealing to zero at total_steps.
double lr_schedule(std::size_t step, const TrainConfig& cfg);

// First and second moments per parameter, in registration order.
struct OptimizerState {
    std::size_t t = 0;
    std::vector<std::vector<double>> m, v;
    std::size_t skipped = 0;
};

// One decoupled-decay AdamW update from the parameters' current gradients. Returns
// false (parameters and moments untouched, state.skipped incremented) when any gradient
// is non-finite.
template <typename T>
bool adamw_step(const ParameterSet<T>& params, OptimizerState& state, const TrainConfig& cfg, double lr);

// Endless stream of example positions; each epoch is a fresh seeded permutation.
class BatchIterator {
public:
    BatchIterator(std::size_t count, std::uint64_t seed);

    std::size_t next();
    std::size_t epoch() const { return epoch_; }
    std::size_t position() const { return position_; }
    void restore(std::size_t epoch, std::size_t position);

private:
    void shuffle();

    std::size_t count_;
    std::uint64_t seed_;
    std::size_t epoch_ = 0;
    std::size_t position_ = 0;
    std::vector<std::size_t> order_;
};

struct TrainSequence {
    std::vector<int> tokens;
    std::string caption;
};

std::vector<TrainSequence> training_sequences(const Corpus& corpus, Split split);

struct StepResult {
    std::size_t step = 0;  // optimizer steps completed, including this one
    double loss = 0.0;     // mean sequence loss over the accumulation window
    double lr = 0.0;
    bool applied = true;   // false when the update was skipped for non-finite gradients
};

// Owns the optimizer, data order and dropout stream for one model.
template <typename T>
class Trainer {
public:
    Trainer(LanguageModel<T>& model, std::vector<TrainSequence> data, const TrainConfig& cfg);

    const TrainConfig& config() const { return cfg_; }
    std::size_t step() const { return step_; }
    const OptimizerState& optimizer() const { return opt_; }

    // accum_steps micro-batches of micro_batch sequences, then one AdamW update.
    StepResult train_step();

    // Mean sequence loss in evaluation mode (no dropout, no tape).
    double evaluate(const std::vector<TrainSequence>& data);

    // Binary snapshot of step, moments, data position and dropout generator.
    std::string save_state() const;
    void load_state(const std::string& bytes);

private:
    const Tensor<T>& text_for(const std::string& caption);

    LanguageModel<T>& model_;
    std::vector<TrainSequence> data_;
    TrainConfig cfg_;
    OptimizerState opt_;
    BatchIterator batches_;
    Rng dropout_rng_;
    std::size_t step_ = 0;
    std::map<std::string, Tensor<T>> text_cache_;
};

// Training loop log: `step,split,loss,lr` rows.
std::string format_loss_row(std::size_t step, std::string_view split, double loss, double lr);
inline constexpr std::string_view kLossCsvHeader = "step,split,loss,lr";

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace ssmg
