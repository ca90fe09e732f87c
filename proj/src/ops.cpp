#include "ukt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "ukt/errors.hpp"

namespace ukt {

namespace {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_result(std::size_t rows, std::size_t cols, std::vector<Real> data, bool track,
                   std::function<void(const TensorImpl&)> backward) {
    Tensor out = Tensor::from(rows, cols, std::move(data));
    if (track) {
        out.impl()->requires_grad = true;
        out.impl()->backward = std::move(backward);
        Tape::active()->record(out.handle());
    }
    return out;
}

std::vector<Real>* grad_of(const ImplPtr& p) {
    return p->requires_grad ? &p->ensure_grad() : nullptr;
}

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMatrix> as_matrix(Real* p, std::size_t rows, std::size_t cols) {
    return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Eigen::Map<const RowMatrix> as_matrix(const Real* p, std::size_t rows, std::size_t cols) {
    return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

void require_matrix(const char* op, const Tensor& t) {
    if (!t.defined() || t.shape().size() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 tensor");
    }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    require_matrix(op, a);
    require_matrix(op, b);
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
    }
}

// Elementwise unary op: forward value f(x) and local derivative df(x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
    require_matrix("unary", a);
    const auto& x = a.impl()->data;
    std::vector<Real> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    ImplPtr pa = a.handle();
    return make_result(a.rows(), a.cols(), std::move(y), tracking({&a}),
                       [pa, df](const TensorImpl& out) {
                           auto* ga = grad_of(pa);
                           if (!ga) return;
                           for (std::size_t i = 0; i < out.data.size(); ++i) {
                               (*ga)[i] += out.grad[i] * df(pa->data[i], out.data[i]);
                           }
                       });
}

Real stable_sigmoid(Real x) {
    if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<Real> c(m * n, Real(0));
    as_matrix(c.data(), m, n).noalias() = as_matrix(a.data().data(), m, k) * as_matrix(b.data().data(), k, n);
    ImplPtr pa = a.handle(), pb = b.handle();
    return make_result(m, n, std::move(c), tracking({&a, &b}),
                       [pa, pb, m, k, n](const TensorImpl& out) {
                           const auto g = as_matrix(out.grad.data(), m, n);
                           if (auto* ga = grad_of(pa)) {
                               as_matrix(ga->data(), m, k).noalias() +=
                                   g * as_matrix(pb->data.data(), k, n).transpose();
                           }
                           if (auto* gb = grad_of(pb)) {
                               as_matrix(gb->data(), k, n).noalias() +=
                                   as_matrix(pa->data.data(), m, k).transpose() * g;
                           }
                       });
}

Tensor transpose(const Tensor& a) {
    require_matrix("transpose", a);
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<Real> t(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a(i, j);
    ImplPtr pa = a.handle();
    return make_result(n, m, std::move(t), tracking({&a}), [pa, m, n](const TensorImpl& out) {
        auto* ga = grad_of(pa);
        if (!ga) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += out.grad[j * m + i];
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_matrix("concat_cols", a);
    require_matrix("concat_cols", b);
    if (a.rows() != b.rows()) {
        throw DimensionError("concat_cols: row counts differ " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
    std::vector<Real> c(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.data().data() + i * na, na, c.data() + i * n);
        std::copy_n(b.data().data() + i * nb, nb, c.data() + i * n + na);
    }
    ImplPtr pa = a.handle(), pb = b.handle();
    return make_result(m, n, std::move(c), tracking({&a, &b}),
                       [pa, pb, m, na, nb, n](const TensorImpl& out) {
                           auto* ga = grad_of(pa);
                           auto* gb = grad_of(pb);
                           for (std::size_t i = 0; i < m; ++i) {
                               if (ga)
                                   for (std::size_t j = 0; j < na; ++j)
                                       (*ga)[i * na + j] += out.grad[i * n + j];
                               if (gb)
                                   for (std::size_t j = 0; j < nb; ++j)
                                       (*gb)[i * nb + j] += out.grad[i * n + na + j];
                           }
                       });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const Tensor& p : parts) {
        require_matrix("concat_rows", p);
        if (p.cols() != n) {
            throw DimensionError("concat_rows: column counts differ " + shape_string(parts[0].shape()) +
                                 " vs " + shape_string(p.shape()));
        }
        m += p.rows();
    }
    std::vector<Real> c;
    c.reserve(m * n);
    bool track = false;
    std::vector<ImplPtr> inputs;
    for (const Tensor& p : parts) {
        c.insert(c.end(), p.data().begin(), p.data().end());
        track = track || tracking({&p});
        inputs.push_back(p.handle());
    }
    return make_result(m, n, std::move(c), track, [inputs](const TensorImpl& out) {
        std::size_t offset = 0;
        for (const ImplPtr& p : inputs) {
            if (auto* g = grad_of(p))
                for (std::size_t i = 0; i < p->data.size(); ++i) (*g)[i] += out.grad[offset + i];
            offset += p->data.size();
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    require_matrix("slice_cols", a);
    if (begin + count > a.cols()) {
        throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of " + shape_string(a.shape()));
    }
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<Real> s(m * count);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(a.data().data() + i * n + begin, count, s.data() + i * count);
    ImplPtr pa = a.handle();
    return make_result(m, count, std::move(s), tracking({&a}),
                       [pa, m, n, begin, count](const TensorImpl& out) {
                           auto* ga = grad_of(pa);
                           if (!ga) return;
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < count; ++j)
                                   (*ga)[i * n + begin + j] += out.grad[i * count + j];
                       });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
    require_matrix("slice_rows", a);
    if (begin + count > a.rows()) {
        throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of " + shape_string(a.shape()));
    }
    const std::size_t n = a.cols();
    std::vector<Real> s(a.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                        a.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
    ImplPtr pa = a.handle();
    return make_result(count, n, std::move(s), tracking({&a}),
                       [pa, n, begin](const TensorImpl& out) {
                           auto* ga = grad_of(pa);
                           if (!ga) return;
                           for (std::size_t i = 0; i < out.data.size(); ++i)
                               (*ga)[begin * n + i] += out.grad[i];
                       });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    require_matrix("gather_rows", table);
    const std::size_t n = table.cols();
    std::vector<Real> g(ids.size() * n);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= table.rows()) {
            throw LookupError("gather_rows: id " + std::to_string(ids[r]) + " out of range for " +
                              (table.name().empty() ? std::string("table") : table.name()) + " " +
                              shape_string(table.shape()));
        }
        std::copy_n(table.data().data() + ids[r] * n, n, g.data() + r * n);
    }
    ImplPtr pt = table.handle();
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    return make_result(ids.size(), n, std::move(g), tracking({&table}),
                       [pt, n, idx = std::move(idx)](const TensorImpl& out) {
                           auto* gt = grad_of(pt);
                           if (!gt) return;
                           for (std::size_t r = 0; r < idx.size(); ++r)
                               for (std::size_t j = 0; j < n; ++j)
                                   (*gt)[idx[r] * n + j] += out.grad[r * n + j];
                       });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<Real> c(a.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] + b.data()[i];
    ImplPtr pa = a.handle(), pb = b.handle();
    return make_result(a.rows(), a.cols(), std::move(c), tracking({&a, &b}),
                       [pa, pb](const TensorImpl& out) {
                           // pa and pb may alias (x + x); each branch accumulates separately.
                           if (auto* ga = grad_of(pa))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*ga)[i] += out.grad[i];
                           if (auto* gb = grad_of(pb))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*gb)[i] += out.grad[i];
                       });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<Real> c(a.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] - b.data()[i];
    ImplPtr pa = a.handle(), pb = b.handle();
    return make_result(a.rows(), a.cols(), std::move(c), tracking({&a, &b}),
                       [pa, pb](const TensorImpl& out) {
                           if (auto* ga = grad_of(pa))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*ga)[i] += out.grad[i];
                           if (auto* gb = grad_of(pb))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*gb)[i] -= out.grad[i];
                       });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<Real> c(a.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] * b.data()[i];
    ImplPtr pa = a.handle(), pb = b.handle();
    return make_result(a.rows(), a.cols(), std::move(c), tracking({&a, &b}),
                       [pa, pb](const TensorImpl& out) {
                           if (auto* ga = grad_of(pa))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*ga)[i] += out.grad[i] * pb->data[i];
                           if (auto* gb = grad_of(pb))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*gb)[i] += out.grad[i] * pa->data[i];
                       });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    std::vector<Real> c(a.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (b.data()[i] == Real(0)) throw DomainError("div: division by zero at index " + std::to_string(i));
        c[i] = a.data()[i] / b.data()[i];
    }
    ImplPtr pa = a.handle(), pb = b.handle();
    return make_result(a.rows(), a.cols(), std::move(c), tracking({&a, &b}),
                       [pa, pb](const TensorImpl& out) {
                           if (auto* ga = grad_of(pa))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*ga)[i] += out.grad[i] / pb->data[i];
                           if (auto* gb = grad_of(pb))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*gb)[i] -= out.grad[i] * out.data[i] / pb->data[i];
                       });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    require_matrix("add_row", a);
    require_matrix("add_row", row);
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw DimensionError("add_row: cannot broadcast " + shape_string(row.shape()) + " over " +
                             shape_string(a.shape()));
    }
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<Real> c(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) c[i * n + j] += row.data()[j];
    ImplPtr pa = a.handle(), pr = row.handle();
    return make_result(m, n, std::move(c), tracking({&a, &row}),
                       [pa, pr, m, n](const TensorImpl& out) {
                           if (auto* ga = grad_of(pa))
                               for (std::size_t i = 0; i < out.grad.size(); ++i)
                                   (*ga)[i] += out.grad[i];
                           if (auto* gr = grad_of(pr))
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < n; ++j)
                                       (*gr)[j] += out.grad[i * n + j];
                       });
}

Tensor scale(const Tensor& a, Real factor) {
    return unary(a, [factor](Real x) { return x * factor; },
                 [factor](Real, Real) { return factor; });
}

Tensor add_scalar(const Tensor& a, Real value) {
    return unary(a, [value](Real x) { return x + value; }, [](Real, Real) { return Real(1); });
}

Tensor neg(const Tensor& a) { return scale(a, Real(-1)); }

Tensor sqrt(const Tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a.data()[i] >= Real(0))) {
            throw DomainError("sqrt: negative input " + std::to_string(a.data()[i]) + " at index " +
                              std::to_string(i));
        }
    }
    return unary(a, [](Real x) { return std::sqrt(x); },
                 [](Real, Real y) { return Real(0.5) / y; });
}

Tensor square(const Tensor& a) {
    return unary(a, [](Real x) { return x * x; }, [](Real x, Real) { return Real(2) * x; });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

Tensor log(const Tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a.data()[i] > Real(0))) {
            throw DomainError("log: nonpositive input " + std::to_string(a.data()[i]) +
                              " at index " + std::to_string(i));
        }
    }
    return unary(a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](Real x) { return x > Real(0) ? x : Real(0); },
                 [](Real x, Real) { return x > Real(0) ? Real(1) : Real(0); });
}

Tensor elu(const Tensor& a) {
    return unary(a, [](Real x) { return x > Real(0) ? x : std::expm1(x); },
                 [](Real x, Real) { return x > Real(0) ? Real(1) : std::exp(x); });
}

Tensor elu_plus_one(const Tensor& a) {
    static constexpr Real floor = std::numeric_limits<Real>::min();
    return unary(
        a, [](Real x) { return x > Real(0) ? x + Real(1) : std::max(std::exp(x), floor); },
        [](Real x, Real) { return x > Real(0) ? Real(1) : std::exp(x); });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, stable_sigmoid, [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor log_sigmoid(const Tensor& a) {
    return unary(
        a,
        [](Real x) {
            return x >= Real(0) ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
        },
        [](Real x, Real) { return stable_sigmoid(-x); });
}

Tensor clamp_max(const Tensor& a, Real cap) {
    return unary(a, [cap](Real x) { return x < cap ? x : cap; },
                 [cap](Real x, Real) { return x < cap ? Real(1) : Real(0); });
}

Tensor sum(const Tensor& a, int axis) {
    require_matrix("sum", a);
    const std::size_t m = a.rows(), n = a.cols();
    if (axis == 0) {
        std::vector<Real> s(n, Real(0));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) s[j] += a(i, j);
        ImplPtr pa = a.handle();
        return make_result(1, n, std::move(s), tracking({&a}), [pa, m, n](const TensorImpl& out) {
            auto* ga = grad_of(pa);
            if (!ga) return;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += out.grad[j];
        });
    }
    if (axis == 1) {
        std::vector<Real> s(m, Real(0));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) s[i] += a(i, j);
        ImplPtr pa = a.handle();
        return make_result(m, 1, std::move(s), tracking({&a}), [pa, m, n](const TensorImpl& out) {
            auto* ga = grad_of(pa);
            if (!ga) return;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += out.grad[i];
        });
    }
    throw DimensionError("sum: axis must be 0 or 1, got " + std::to_string(axis));
}

Tensor mean(const Tensor& a, int axis) {
    require_matrix("mean", a);
    const std::size_t count = axis == 0 ? a.rows() : a.cols();
    if (count == 0) throw DimensionError("mean: empty axis in " + shape_string(a.shape()));
    return scale(sum(a, axis), Real(1) / static_cast<Real>(count));
}

Tensor sum_all(const Tensor& a) {
    require_matrix("sum_all", a);
    Real s = 0;
    for (Real x : a.data()) s += x;
    ImplPtr pa = a.handle();
    return make_result(1, 1, {s}, tracking({&a}), [pa](const TensorImpl& out) {
        auto* ga = grad_of(pa);
        if (!ga) return;
        for (Real& g : *ga) g += out.grad[0];
    });
}

Tensor mean_all(const Tensor& a) {
    if (a.size() == 0) throw DimensionError("mean_all: empty tensor");
    return scale(sum_all(a), Real(1) / static_cast<Real>(a.size()));
}

Tensor trace_diag(const Tensor& diag) { return sum(diag, 1); }

Tensor masked_softmax(const Tensor& scores, const Mask& mask) {
    require_matrix("masked_softmax", scores);
    if (mask.size() != scores.size()) {
        throw DimensionError("masked_softmax: mask of size " + std::to_string(mask.size()) +
                             " for scores " + shape_string(scores.shape()));
    }
    const std::size_t m = scores.rows(), n = scores.cols();
    std::vector<Real> y(m * n, Real(0));
    for (std::size_t i = 0; i < m; ++i) {
        Real best = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j]) best = std::max(best, scores(i, j));
        if (best == -std::numeric_limits<Real>::infinity()) continue;
        Real total = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!mask[i * n + j]) continue;
            y[i * n + j] = std::exp(scores(i, j) - best);
            total += y[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= total;
    }
    ImplPtr ps = scores.handle();
    return make_result(m, n, std::move(y), tracking({&scores}), [ps, m, n](const TensorImpl& out) {
        auto* gs = grad_of(ps);
        if (!gs) return;
        for (std::size_t i = 0; i < m; ++i) {
            const Real* yr = &out.data[i * n];
            const Real* gr = &out.grad[i * n];
            Real dot = 0;
            for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
            for (std::size_t j = 0; j < n; ++j) (*gs)[i * n + j] += yr[j] * (gr[j] - dot);
        }
    });
}

Tensor masked_log_softmax(const Tensor& scores, const Mask& mask) {
    require_matrix("masked_log_softmax", scores);
    if (mask.size() != scores.size()) {
        throw DimensionError("masked_log_softmax: mask of size " + std::to_string(mask.size()) +
                             " for scores " + shape_string(scores.shape()));
    }
    const std::size_t m = scores.rows(), n = scores.cols();
    std::vector<Real> y(m * n, Real(0));
    std::vector<Real> prob(m * n, Real(0));
    for (std::size_t i = 0; i < m; ++i) {
        Real best = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j]) best = std::max(best, scores(i, j));
        if (best == -std::numeric_limits<Real>::infinity()) continue;
        Real total = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j]) total += std::exp(scores(i, j) - best);
        const Real lse = best + std::log(total);
        for (std::size_t j = 0; j < n; ++j) {
            if (!mask[i * n + j]) continue;
            y[i * n + j] = scores(i, j) - lse;
            prob[i * n + j] = std::exp(y[i * n + j]);
        }
    }
    ImplPtr ps = scores.handle();
    return make_result(m, n, std::move(y), tracking({&scores}),
                       [ps, m, n, mask, prob = std::move(prob)](const TensorImpl& out) {
                           auto* gs = grad_of(ps);
                           if (!gs) return;
                           for (std::size_t i = 0; i < m; ++i) {
                               Real total = 0;
                               for (std::size_t j = 0; j < n; ++j)
                                   if (mask[i * n + j]) total += out.grad[i * n + j];
                               for (std::size_t j = 0; j < n; ++j) {
                                   if (!mask[i * n + j]) continue;
                                   (*gs)[i * n + j] += out.grad[i * n + j] - prob[i * n + j] * total;
                               }
                           }
                       });
}

Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b) {
    require_matrix("pairwise_sq_dist", a);
    require_matrix("pairwise_sq_dist", b);
    if (a.cols() != b.cols()) {
        throw DimensionError("pairwise_sq_dist: feature dimensions differ " +
                             shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    const std::size_t m = a.rows(), n = b.rows(), d = a.cols();
    const Real* A = a.data().data();
    const Real* B = b.data().data();
    std::vector<Real> dist(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            Real acc = 0;
            for (std::size_t k = 0; k < d; ++k) {
                const Real diff = A[i * d + k] - B[j * d + k];
                acc += diff * diff;
            }
            dist[i * n + j] = acc;
        }
    }
    ImplPtr pa = a.handle(), pb = b.handle();
    return make_result(m, n, std::move(dist), tracking({&a, &b}),
                       [pa, pb, m, n, d](const TensorImpl& out) {
                           auto* ga = grad_of(pa);
                           auto* gb = grad_of(pb);
                           const Real* A = pa->data.data();
                           const Real* B = pb->data.data();
                           for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < n; ++j) {
                                   const Real g = out.grad[i * n + j];
                                   if (g == Real(0)) continue;
                                   for (std::size_t k = 0; k < d; ++k) {
                                       const Real step = Real(2) * g * (A[i * d + k] - B[j * d + k]);
                                       if (ga) (*ga)[i * d + k] += step;
                                       if (gb) (*gb)[j * d + k] -= step;
                                   }
                               }
                           }
                       });
}

Tensor dropout(const Tensor& a, Real rate, std::mt19937_64& rng) {
    if (rate <= Real(0)) return a;
    if (rate >= Real(1)) throw UsageError("dropout: rate must be below 1, got " + std::to_string(rate));
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
    const Real inv = Real(1) / (Real(1) - rate);
    std::vector<Real> factor(a.size());
    for (Real& f : factor) f = keep(rng) ? inv : Real(0);
    return mul(a, Tensor::from(a.rows(), a.cols(), std::move(factor)));
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Subtract: return "subtract";
        case OpKind::Multiply: return "multiply";
        case OpKind::Divide: return "divide";
        case OpKind::BroadcastAdd: return "broadcast_add";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Square: return "square";
        case OpKind::SumRows: return "sum_rows";
        case OpKind::SumCols: return "sum_cols";
        case OpKind::MeanRows: return "mean_rows";
        case OpKind::MeanCols: return "mean_cols";
        case OpKind::Concat: return "concat";
        case OpKind::Relu: return "relu";
        case OpKind::Elu: return "elu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Log: return "log";
        case OpKind::Exp: return "exp";
        case OpKind::MaskedSoftmax: return "masked_softmax";
        case OpKind::TraceDiag: return "trace_diag";
        case OpKind::EmbeddingLookup: return "embedding_lookup";
    }
    return "unknown";
}

std::size_t op_arity(OpKind kind) {
    switch (kind) {
        case OpKind::MatMul:
        case OpKind::Add:
        case OpKind::Subtract:
        case OpKind::Multiply:
        case OpKind::Divide:
        case OpKind::BroadcastAdd:
        case OpKind::Concat:
        case OpKind::EmbeddingLookup: return 2;
        default: return 1;
    }
}

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs) {
    if (inputs.size() != op_arity(kind)) {
        throw UsageError(std::string("forward_op: ") + op_name(kind) + " expects " +
                         std::to_string(op_arity(kind)) + " inputs, got " +
                         std::to_string(inputs.size()));
    }
    const Tensor& a = inputs[0];
    switch (kind) {
        case OpKind::MatMul: return matmul(a, inputs[1]);
        case OpKind::Add: return add(a, inputs[1]);
        case OpKind::Subtract: return sub(a, inputs[1]);
        case OpKind::Multiply: return mul(a, inputs[1]);
        case OpKind::Divide: return div(a, inputs[1]);
        case OpKind::BroadcastAdd: return add_row(a, inputs[1]);
        case OpKind::Sqrt: return sqrt(a);
        case OpKind::Square: return square(a);
        case OpKind::SumRows: return sum(a, 0);
        case OpKind::SumCols: return sum(a, 1);
        case OpKind::MeanRows: return mean(a, 0);
        case OpKind::MeanCols: return mean(a, 1);
        case OpKind::Concat: return concat_cols(a, inputs[1]);
        case OpKind::Relu: return relu(a);
        case OpKind::Elu: return elu(a);
        case OpKind::Sigmoid: return sigmoid(a);
        case OpKind::Log: return log(a);
        case OpKind::Exp: return exp(a);
        case OpKind::MaskedSoftmax: return masked_softmax(a, Mask(a.size(), 1));
        case OpKind::TraceDiag: return trace_diag(a);
        case OpKind::EmbeddingLookup: {
            std::vector<std::size_t> ids;
            for (Real v : inputs[1].data()) {
                if (v < 0 || v != std::floor(v)) throw LookupError("embedding_lookup: bad id");
                ids.push_back(static_cast<std::size_t>(v));
            }
            return gather_rows(a, ids);
        }
    }
    throw UsageError("forward_op: unknown op kind");
}

}  // namespace ukt
