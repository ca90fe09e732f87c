#pragma once

// Gaussian token embeddings: each KC-level interaction becomes a diagonal
// Gaussian (mean vector, variance vector) built from a KC base vector plus a
// Rasch-style term scaled by a per-KC variation vector.

#include <random>
#include <vector>

#include "ukt/data.hpp"
#include "ukt/ops.hpp"

namespace ukt {

struct EmbeddingTables {
    Tensor kc_latent;          // [num_kcs, d]     base vector per KC
    Tensor kc_variation;       // [num_kcs, d]     scales the question/response term
    Tensor question_mean;      // [num_questions, d] difficulty vector, mean side
    Tensor question_cov;       // [num_questions, d] difficulty vector, covariance side
    Tensor response_mean;      // [2, d]  row r = response map applied to one-hot(r)
    Tensor response_cov;       // [2, d]
    Tensor position_mean;      // [max_len, d]
    Tensor position_cov;       // [max_len, d]
    // When false the question/response term is dropped (KC-only logs).
    bool use_rasch = true;

    static EmbeddingTables init(std::size_t num_kcs, std::size_t num_questions, std::size_t dim,
                                std::size_t max_len, std::mt19937_64& rng, bool use_rasch = true);
    static EmbeddingTables zeros(std::size_t num_kcs, std::size_t num_questions, std::size_t dim,
                                 std::size_t max_len);

    std::size_t dim() const { return kc_latent.cols(); }
    std::size_t max_len() const { return position_mean.rows(); }
    std::vector<Tensor> parameters() const;
};

// Sequence of diagonal Gaussians. `mask[t]` is 1 for real tokens, 0 for padding.
struct GaussianSeq {
    Tensor mean;  // [T, d]
    Tensor cov;   // [T, d]
    Mask mask;    // [T]

    std::size_t length() const { return mask.size(); }
    std::size_t dim() const { return mean.cols(); }
};

// Interaction side: mean = z_c + r^mu_r * v_c, cov_raw = z_c + r^sigma_r * v_c.
GaussianSeq embed_interactions(const StudentSequence& seq, const EmbeddingTables& tables);
// KC side: mean = z_c + m^mu_q * v_c, cov_raw = z_c + m^sigma_q * v_c.
GaussianSeq embed_kcs(const StudentSequence& seq, const EmbeddingTables& tables);
// Adds the position rows to unmasked tokens.
GaussianSeq add_positions(const GaussianSeq& g, const EmbeddingTables& tables);
// cov = ELU(cov_raw) + 1; mean unchanged.
GaussianSeq activate_covariance(const GaussianSeq& g);

}  // namespace ukt
