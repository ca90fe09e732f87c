#include "ukt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ukt/errors.hpp"

namespace ukt {

namespace {

Real evaluate(const std::function<Tensor()>& loss_fn, const std::string& context) {
    NoGradScope no_grad;
    const Real value = loss_fn().item();
    if (!std::isfinite(value)) throw NumericError("finite_diff_check: non-finite loss while perturbing " + context);
    return value;
}

}  // namespace

CheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                              const GradCheckOptions& options) {
    if (options.epsilon < Real(1e-7) || options.epsilon > Real(1e-4)) {
        throw UsageError("finite_diff_check: epsilon must lie in [1e-7, 1e-4]");
    }

    std::vector<std::vector<Real>> analytic;
    {
        for (Tensor& p : params) {
            p.set_requires_grad(true);
            p.zero_grad();
        }
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = loss_fn();
        if (!std::isfinite(loss.item())) {
            std::string names;
            for (std::size_t k = 0; k < params.size(); ++k) {
                names += (k ? ", " : "") + (params[k].name().empty() ? "param" + std::to_string(k) : params[k].name());
            }
            throw NumericError("finite_diff_check: non-finite loss with parameters " + names);
        }
        tape.backward(loss);
        for (const Tensor& p : params) {
            std::vector<Real> g(p.size(), Real(0));
            if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
            analytic.push_back(std::move(g));
        }
    }

    CheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k];
        GradCheckEntry entry;
        entry.name = p.name().empty() ? "param" + std::to_string(k) : p.name();
        entry.elements = p.size();
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Real original = values[i];
            const std::string where = entry.name + "[" + std::to_string(i) + "]";
            values[i] = original + options.epsilon;
            const Real up = evaluate(loss_fn, where);
            values[i] = original - options.epsilon;
            const Real down = evaluate(loss_fn, where);
            values[i] = original;

            const Real numeric = (up - down) / (Real(2) * options.epsilon);
            const Real exact = analytic[k][i];
            if (!std::isfinite(exact)) throw NumericError("finite_diff_check: non-finite gradient for " + where);
            const Real abs_err = std::abs(exact - numeric);
            const Real denom = std::max({std::abs(exact), std::abs(numeric), options.magnitude_floor});
            entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
            entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    report.passed = report.max_rel_error < options.tolerance;
    return report;
}

}  // namespace ukt
