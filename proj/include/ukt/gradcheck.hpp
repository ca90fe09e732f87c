#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ukt/tensor.hpp"

namespace ukt {

struct GradCheckEntry {
    std::string name;
    std::size_t elements = 0;
    Real max_rel_error = 0;
    Real max_abs_error = 0;
};

struct CheckReport {
    std::vector<GradCheckEntry> entries;
    Real max_rel_error = 0;
    bool passed = false;
};

struct GradCheckOptions {
    Real epsilon = 1e-5;
    Real tolerance = 1e-4;
    // Gradient magnitudes below this floor are compared absolutely, so that
    // finite-difference roundoff on vanishing gradients is not scored as a
    // relative error. Both-zero comparisons always pass.
    Real magnitude_floor = 1e-6;
};

// Compares the tape gradient of `loss_fn` against central differences for
// every element of every tensor in `params`. `loss_fn` must be deterministic
// and must build its graph from the tensors in `params`.
CheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                              const GradCheckOptions& options = {});

}  // namespace ukt
