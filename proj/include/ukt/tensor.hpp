#pragma once

// Dense row-major matrices with tape-based reverse-mode differentiation.
//
// Every tensor is rank 2 (vectors are 1 x n, scalars 1 x 1). Operations that
// see at least one requires_grad input while a Tape is active append their
// result to that tape together with a backward rule; Tape::backward replays
// the rules in reverse order. Without an active tape the same operations run
// as plain numeric code, which is what evaluation uses.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ukt {

#ifdef UKT_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::function<void(const TensorImpl&)> backward;
    std::string name;

    std::size_t rows() const { return shape[0]; }
    std::size_t cols() const { return shape[1]; }
    std::vector<Real>& ensure_grad();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor full(std::size_t rows, std::size_t cols, Real value, bool requires_grad = false);
    static Tensor from(std::size_t rows, std::size_t cols, std::vector<Real> values,
                       bool requires_grad = false);
    static Tensor scalar(Real value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rows() const { return impl_->shape[0]; }
    std::size_t cols() const { return impl_->shape[1]; }
    std::size_t size() const { return impl_->data.size(); }

    std::span<const Real> data() const { return impl_->data; }
    // Direct write access, meant for initialisation and optimiser updates of leaves.
    std::span<Real> mutable_data() { return impl_->data; }
    Real operator()(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }
    Real item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on) { impl_->requires_grad = on; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const Real> grad() const { return impl_->grad; }
    void zero_grad();

    const std::string& name() const { return impl_->name; }
    Tensor& named(std::string name) {
        impl_->name = std::move(name);
        return *this;
    }

    // Deep copy of the values; the copy is a fresh leaf.
    Tensor clone() const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

std::string shape_string(const Shape& shape);

// Ordered record of differentiable operations for one forward pass.
class Tape {
public:
    void record(std::shared_ptr<detail::TensorImpl> node);

    // Seeds d(loss)/d(loss) = 1 and runs backward rules newest-first. Leaves
    // accumulate into their existing grad, so callers zero grads between steps.
    void backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Tape that operations currently record into, or nullptr.
    static Tape* active();

private:
    friend class TapeScope;
    std::vector<std::shared_ptr<detail::TensorImpl>> nodes_;
};

// Makes a tape the active one for the current thread for the scope's lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

// Suspends recording for the scope's lifetime (evaluation inside training).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* previous_;
};

}  // namespace ukt
