#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ssmg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty means "no gradient yet"
    bool requires_grad = false;
};

}  // namespace detail

// Reference-counted handle to a dense row-major array. Copies share storage;
// use clone() for a deep copy. Constness applies to the handle, not the payload.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return node_ ? node_->data.size() : 0; }

    std::span<const T> data() const;
    std::span<T> mutable_data() const;
    T item() const;
    T at(std::size_t i) const { return data()[i]; }
    T at(std::size_t row, std::size_t col) const;

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    const Tensor& set_requires_grad(bool flag) const;

    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    std::span<const T> grad() const;
    // Gradient buffer, allocated (zero-filled) on first use.
    std::span<T> grad_buffer() const;
    void zero_grad() const;
    void drop_grad() const;

    Tensor detach() const;
    Tensor clone() const;
    bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

private:
    std::shared_ptr<detail::Node<T>> node_;
};

// Element-type conversion; the result is a detached leaf.
template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
    auto in = src.data();
    return Tensor<To>(src.shape(), std::vector<To>(in.begin(), in.end()));
}

// Ordered record of differentiable operations. An operation is recorded only when a
// tape is current on the calling thread (see TapeScope) and one of its inputs
// requires a gradient. Independent tapes may be used from independent threads.
template <typename T>
class Tape {
public:
    using GradFn = std::function<void(std::span<const T> out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(const Tensor<T>& output, std::vector<Tensor<T>> inputs, GradFn fn);

    // Reverse-order sweep. Gradients of recorded outputs are rebuilt on every call;
    // leaf gradients accumulate across calls.
    void backward(const Tensor<T>& loss);

    std::size_t size() const noexcept { return entries_.size(); }
    void clear() { entries_.clear(); }

    static Tape* current() noexcept;

private:
    struct Entry {
        Tensor<T> output;
        std::vector<Tensor<T>> inputs;
        GradFn fn;
    };
    std::vector<Entry> entries_;
};

// Makes a tape current on this thread for the lifetime of the scope.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* previous_;
};

// Suspends recording (e.g. for evaluation inside a training loop).
template <typename T>
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape<T>* previous_;
};

// Runs backward on the tape current on this thread.
template <typename T>
void backward(const Tensor<T>& loss);

// Builds an op result and records it on the current tape when any input needs a
// gradient. `grad_fn` receives the upstream gradient and accumulates into inputs.
template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                         typename Tape<T>::GradFn grad_fn);

// True when a result built from these inputs would be recorded.
template <typename T>
bool will_record(std::initializer_list<const Tensor<T>*> inputs);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;
extern template class NoGradScope<float>;
extern template class NoGradScope<double>;

}  // namespace ssmg
