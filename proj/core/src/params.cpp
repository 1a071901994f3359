#include "ssmg/params.hpp"

#include <algorithm>

#include "ssmg/error.hpp"

namespace ssmg {

template <typename T>
const Tensor<T>& ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
    if (contains(name)) throw ArgumentError("duplicate parameter name " + name);
    value.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(value));
    return entries_.back().second;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter " + name);
    return entries_[it->second].second;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() const {
    for (const auto& [name, t] : entries_) t.zero_grad();
}

template <typename T>
void ParameterSet<T>::drop_grads() const {
    for (const auto& [name, t] : entries_) t.drop_grad();
}

template <typename T>
void ParameterSet<T>::copy_values_from(const ParameterSet& other) const {
    if (other.size() != size()) throw DimensionError("parameter sets differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& [name, dst] = entries_[i];
        const auto& [other_name, src] = other.entries_[i];
        if (name != other_name || dst.shape() != src.shape()) {
            throw DimensionError("parameter mismatch at " + name + " vs " + other_name);
        }
        std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
    }
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace ssmg
