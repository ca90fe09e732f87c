#pragma once

// End-to-end gradient verification of the full training objective.

#include <cstdint>
#include <vector>

#include "ukt/data.hpp"
#include "ukt/gradcheck.hpp"
#include "ukt/model.hpp"

namespace ukt {

// Two length-5 single-KC sequences over 3 KCs and 4 questions; dense ids start at 1.
std::vector<StudentSequence> toy_batch(std::uint64_t seed);

// Small random model sized for toy_batch.
ModelParams toy_model(std::uint64_t seed, std::size_t dim = 8, std::size_t heads = 2);

// Central-difference check of total_loss (prediction plus contrastive branch)
// on toy_batch for every parameter tensor.
CheckReport end_to_end_gradcheck(std::uint64_t seed, Real lambda = 0.1,
                                 const GradCheckOptions& options = {});

}  // namespace ukt
