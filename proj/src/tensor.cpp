#include "ukt/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "ukt/errors.hpp"

namespace ukt {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::vector<Real>& detail::TensorImpl::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
    return grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return full(rows, cols, Real(0), requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, Real value, bool requires_grad) {
    return from(rows, cols, std::vector<Real>(rows * cols, value), requires_grad);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<Real> values,
                    bool requires_grad) {
    if (values.size() != rows * cols) {
        throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_string({rows, cols}));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = {rows, cols};
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
    return from(1, 1, {value}, requires_grad);
}

Real Tensor::item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
    return impl_->data[0];
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0));
}

Tensor Tensor::clone() const {
    Tensor copy = from(rows(), cols(), impl_->data, impl_->requires_grad);
    copy.impl()->name = impl_->name;
    return copy;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

void Tape::record(std::shared_ptr<detail::TensorImpl> node) {
    nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw UsageError("backward: loss must be a scalar, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    }
    if (nodes_.empty()) throw UsageError("backward: tape is empty");

    auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                           [&](const auto& n) { return n.get() == loss.impl(); });
    if (it == nodes_.rend()) throw UsageError("backward: loss was not recorded on this tape");

    loss.impl()->ensure_grad()[0] = Real(1);
    for (; it != nodes_.rend(); ++it) {
        detail::TensorImpl& node = **it;
        if (node.grad.empty() || !node.backward) continue;
        node.backward(node);
    }
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

}  // namespace ukt
