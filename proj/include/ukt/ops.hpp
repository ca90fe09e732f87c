#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ukt/tensor.hpp"

namespace ukt {

// Row-major keep-mask, one byte per entry (1 = keep).
using Mask = std::vector<std::uint8_t>;

// Linear algebra and shape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Stacks tensors with equal column counts on top of each other.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
// Rows of `table` selected by `ids`; gradients scatter-add back into the table.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// a [m,n] + row [1,n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, Real factor);
Tensor add_scalar(const Tensor& a, Real value);
Tensor neg(const Tensor& a);

Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
// Exponential linear unit with alpha = 1.
Tensor elu(const Tensor& a);
// ELU(x) + 1 evaluated without cancellation (exp(x) on the negative branch) and
// floored at the smallest normal number, so the result is always > 0.
Tensor elu_plus_one(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// log(sigmoid(x)) evaluated without overflow.
Tensor log_sigmoid(const Tensor& a);
// min(a, cap); the gradient is zero where the cap is active.
Tensor clamp_max(const Tensor& a, Real cap);

// Reductions. axis 0 collapses rows ([m,n] -> [1,n]), axis 1 collapses columns.
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// Trace of the diagonal matrices stored row-wise in `diag` ([m,n] -> [m,1]).
Tensor trace_diag(const Tensor& diag);

// Softmax over each row restricted to entries with mask = 1. Masked entries are
// exactly zero; a row with no kept entries is all zero.
Tensor masked_softmax(const Tensor& scores, const Mask& mask);
// log-softmax over kept entries; masked entries hold 0 and receive no gradient.
Tensor masked_log_softmax(const Tensor& scores, const Mask& mask);

// ||a_i - b_j||^2 for every row pair ([m,d] x [n,d] -> [m,n]), computed directly.
Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b);

// Inverted dropout. Identity when rate is 0.
Tensor dropout(const Tensor& a, Real rate, std::mt19937_64& rng);

// Uniform dispatch over the parameter-free op kinds, used by property tests
// and anything that wants to treat ops as data.
enum class OpKind {
    MatMul,
    Add,
    Subtract,
    Multiply,
    Divide,
    BroadcastAdd,
    Sqrt,
    Square,
    SumRows,
    SumCols,
    MeanRows,
    MeanCols,
    Concat,
    Relu,
    Elu,
    Sigmoid,
    Log,
    Exp,
    MaskedSoftmax,  // all-keep mask
    TraceDiag,
    EmbeddingLookup,  // inputs: table, ids stored as a 1 x k tensor of whole numbers
};

const char* op_name(OpKind kind);
std::size_t op_arity(OpKind kind);
Tensor forward_op(OpKind kind, std::span<const Tensor> inputs);

}  // namespace ukt
