#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dcan/error.hpp"

namespace dcan {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

template <typename T>
struct TensorData {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
};

// Dense row-major tensor. Value-semantics handle over shared storage so the
// tape can keep inputs/outputs alive; copying a Tensor aliases its buffers.
template <typename T>
class Tensor {
public:
    Tensor() : d_(std::make_shared<TensorData<T>>()) {}

    explicit Tensor(Shape shape, T fill = T(0)) : d_(std::make_shared<TensorData<T>>()) {
        d_->shape = std::move(shape);
        d_->values.assign(static_cast<size_t>(shape_numel(d_->shape)), fill);
    }

    static Tensor from(Shape shape, std::vector<T> values) {
        Tensor t;
        const int64_t n = shape_numel(shape);
        if (n != static_cast<int64_t>(values.size()))
            throw ShapeError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
        t.d_->shape = std::move(shape);
        t.d_->values = std::move(values);
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    const Shape& shape() const { return d_->shape; }
    size_t rank() const { return d_->shape.size(); }
    int64_t dim(size_t i) const { return d_->shape.at(i); }
    int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }

    std::span<T> values() { return d_->values; }
    std::span<const T> values() const { return d_->values; }

    T& at(int64_t i) { return d_->values[static_cast<size_t>(i)]; }
    T at(int64_t i) const { return d_->values[static_cast<size_t>(i)]; }
    T& at(int64_t i, int64_t j) { return d_->values[static_cast<size_t>(i * dim(1) + j)]; }
    T at(int64_t i, int64_t j) const { return d_->values[static_cast<size_t>(i * dim(1) + j)]; }
    T& at(int64_t i, int64_t j, int64_t k) {
        return d_->values[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    T at(int64_t i, int64_t j, int64_t k) const {
        return d_->values[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
    }

    // Scalar extraction; the tensor must hold exactly one element.
    T item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
        return d_->values[0];
    }

    bool requires_grad() const { return d_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        d_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return !d_->grad.empty(); }
    void ensure_grad() {
        if (d_->grad.empty()) d_->grad.assign(d_->values.size(), T(0));
    }
    void zero_grad() {
        if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), T(0));
    }
    std::span<T> grad() {
        ensure_grad();
        return d_->grad;
    }
    std::span<const T> grad() const {
        if (d_->grad.empty()) throw ContractViolation("grad read before backward");
        return d_->grad;
    }

    std::shared_ptr<TensorData<T>> ptr() const { return d_; }
    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

private:
    std::shared_ptr<TensorData<T>> d_;
};

// Ordered record of executed operations. Ops push a backward closure while a
// Tape::Scope is active; backward() replays the record once in reverse,
// accumulating gradients additively across fan-out.
template <typename T>
class Tape {
public:
    class Scope {
    public:
        explicit Scope(Tape& t) : prev_(current_) { current_ = &t; }
        ~Scope() { current_ = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

    static Tape* current() { return current_; }

    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and walks the record backwards.
    void backward(Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("backward requires a scalar loss, got " +
                                        shape_str(loss.shape()));
        loss.ensure_grad();
        loss.grad()[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
    static thread_local Tape* current_;
};

template <typename T>
thread_local Tape<T>* Tape<T>::current_ = nullptr;

template <typename T>
inline void backward(Tensor<T>& loss, Tape<T>& tape) {
    tape.backward(loss);
}

}  // namespace dcan
