#include "ssmg/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "ssmg/error.hpp"

namespace ssmg {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace {

template <typename T>
Tape<T>*& current_slot() noexcept {
    thread_local Tape<T>* slot = nullptr;
    return slot;
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
    for (auto extent : shape) {
        if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                             std::to_string(data.size()) + " elements");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    std::vector<T> data(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
    }
    return s[axis];
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return node_->data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
    return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::size_t row, std::size_t col) const {
    const auto& s = shape();
    if (s.size() != 2 || row >= s[0] || col >= s[1]) {
        throw IndexError("index (" + std::to_string(row) + "," + std::to_string(col) + ") invalid for " +
                         shape_to_string(s));
    }
    return node_->data[row * s[1] + col];
}

template <typename T>
const Tensor<T>& Tensor<T>::set_requires_grad(bool flag) const {
    if (!node_) throw ContractError("use of an undefined tensor");
    node_->requires_grad = flag;
    return *this;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
    return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::drop_grad() const {
    if (node_) {
        node_->grad.clear();
        node_->grad.shrink_to_fit();
    }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(shape(), node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    Tensor copy(shape(), node_->data, node_->requires_grad);
    copy.node_->grad = node_->grad;
    return copy;
}

template <typename T>
void Tape<T>::record(const Tensor<T>& output, std::vector<Tensor<T>> inputs, GradFn fn) {
    entries_.push_back(Entry{output, std::move(inputs), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward() needs a scalar loss, got " +
                            (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
    }
    std::size_t end = entries_.size();
    while (end > 0 && !entries_[end - 1].output.same_storage(loss)) --end;
    if (end == 0) throw ContractError("backward() called on a loss that is not on this tape");

    for (auto& entry : entries_) entry.output.drop_grad();
    loss.grad_buffer()[0] = T(1);

    for (std::size_t i = end; i-- > 0;) {
        auto& entry = entries_[i];
        if (!entry.output.has_grad()) continue;
        entry.fn(entry.output.grad());
    }
}

template <typename T>
Tape<T>* Tape<T>::current() noexcept {
    return current_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(current_slot<T>()) {
    current_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
    current_slot<T>() = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(current_slot<T>()) {
    current_slot<T>() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
    current_slot<T>() = previous_;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    auto* tape = Tape<T>::current();
    if (!tape) throw ContractError("backward() called with no current tape");
    tape->backward(loss);
}

template <typename T>
bool will_record(std::initializer_list<const Tensor<T>*> inputs) {
    if (!Tape<T>::current()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                         typename Tape<T>::GradFn grad_fn) {
    Tensor<T> out(std::move(shape), std::move(data));
    auto* tape = Tape<T>::current();
    if (!tape) return out;
    bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
    if (!any) return out;
    out.set_requires_grad(true);
    tape->record(out, std::move(inputs), std::move(grad_fn));
    return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;

template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template bool will_record<float>(std::initializer_list<const Tensor<float>*>);
template bool will_record<double>(std::initializer_list<const Tensor<double>*>);
template Tensor<float> make_op_result<float>(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                             Tape<float>::GradFn);
template Tensor<double> make_op_result<double>(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                               Tape<double>::GradFn);

}  // namespace ssmg
