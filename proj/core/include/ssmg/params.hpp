#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssmg/random.hpp"
#include "ssmg/tensor.hpp"

namespace ssmg {

// Train/eval switch plus the dropout generator threaded through a forward pass.
struct RunMode {
    bool train = false;
    Rng* rng = nullptr;
};

// Named, ordered trainable tensors. Registration order is the serialization order.
template <typename T>
class ParameterSet {
public:
    using Entry = std::pair<std::string, Tensor<T>>;

    const Tensor<T>& add(const std::string& name, Tensor<T> value);
    const Tensor<T>& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const;
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    void zero_grad() const;
    void drop_grads() const;

    // Copies values from another set with identical names and shapes.
    void copy_values_from(const ParameterSet& other) const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace init {

template <typename T>
Tensor<T> uniform(Shape shape, double bound, Rng& rng) {
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(ssmg::uniform(rng, -bound, bound));
    return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> normal(Shape shape, double stddev, Rng& rng) {
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(stddev * standard_normal(rng));
    return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace init

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace ssmg
