#pragma once

// Attention over diagonal-Gaussian tokens scored by negative squared
// 2-Wasserstein distance.

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ukt/embedding.hpp"

namespace ukt {

enum class ScoreKind {
    Wasserstein,  // -W2^2 over mean and covariance blocks
    DotProduct,   // <mu_q, mu_k>, the ablation without distributional scores
};

struct AttentionConfig {
    std::size_t heads = 4;
    std::size_t head_dim = 16;
    Real scale = 4;  // scores are divided by this
    bool causal = true;
    ScoreKind kind = ScoreKind::Wasserstein;
    // Skip the covariance term of the distance (covariances are all ones).
    bool mean_only = false;
    Real dropout = 0;

    // heads must divide dim; scale defaults to sqrt(head_dim).
    static AttentionConfig make(std::size_t dim, std::size_t heads, Real scale = 0);
};

// Squared 2-Wasserstein distance between diagonal Gaussians:
// ||mu1 - mu2||^2 + sum_i (sqrt(cov1_i) - sqrt(cov2_i))^2.
Real w2_sq_diag(std::span<const Real> mu1, std::span<const Real> cov1, std::span<const Real> mu2,
                std::span<const Real> cov2);

// Scores of one query against keys[0, visible) on the columns of `head`.
// Entries at or beyond `visible`, or masked, are -infinity. Returns nullopt
// when no key is visible (empty context).
std::optional<std::vector<Real>> attention_scores(std::span<const Real> query_mean,
                                                  std::span<const Real> query_cov,
                                                  const GaussianSeq& keys, std::size_t visible,
                                                  const AttentionConfig& cfg, std::size_t head = 0);

// Query t attends to keys/values at positions j < t. Each head works on its
// own block of columns and the head outputs are concatenated. Queries with no
// visible key return mean 0 and covariance 1.
GaussianSeq attend(const GaussianSeq& queries, const GaussianSeq& keys, const GaussianSeq& values,
                   const AttentionConfig& cfg, std::mt19937_64* rng = nullptr);

// Keep-mask [T, T] for strictly causal attention restricted to real tokens.
Mask causal_mask(const Mask& query_mask, const Mask& key_mask);

}  // namespace ukt
