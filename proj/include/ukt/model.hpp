#pragma once

// The full uncertainty-aware KT network: Gaussian embeddings, Wasserstein
// attention, covariance-preserving FFN refinement, logistic prediction head,
// and the contrastive objective over rule-built negative sequences.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ukt/attention.hpp"
#include "ukt/data.hpp"
#include "ukt/embedding.hpp"

namespace ukt {

// `Repel` scores the constructed negative with exp(+W2) and in-batch states
// with exp(-W2). `InfoNce` uses exp(-W2) for both (pull the negative view
// close, push the batch away).
enum class ClConvention { Repel, InfoNce };
enum class LossReduction { Mean, Sum };

struct VariantConfig {
    bool use_cl = true;
    bool use_wasserstein = true;
    bool use_stochastic = true;
    Real lambda = 0.1;

    Real effective_lambda() const { return use_cl ? lambda : Real(0); }
    std::string label() const;

    static VariantConfig full(Real lambda);
    static VariantConfig without_cl();
    static VariantConfig without_wasserstein(Real lambda);
    static VariantConfig without_stochastic(Real lambda);
};

// "ukt", "no-cl", "no-wdist", "no-stocemb".
std::optional<VariantConfig> parse_variant(const std::string& name, Real lambda);

struct ModelConfig {
    std::size_t num_kcs = 1;
    std::size_t num_questions = 1;
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t blocks = 1;
    std::size_t max_len = 200;
    Real dropout = 0;
    Real score_scale = 0;  // 0 picks sqrt(head_dim)
    bool use_rasch = true;
    Real cl_distance_cap = 50;
    ClConvention cl_convention = ClConvention::Repel;
    LossReduction reduction = LossReduction::Mean;

    AttentionConfig attention(const VariantConfig& variant) const;
};

struct FfnBlock {
    // Stored input-major: x [T, 2d] times w1 [2d, d].
    Tensor w1, b1, w2, b2;  // mean path
    Tensor w3, b3, w4, b4;  // covariance path

    static FfnBlock init(std::size_t dim, std::mt19937_64& rng, const std::string& prefix);
    static FfnBlock zeros(std::size_t dim, const std::string& prefix);
    std::vector<Tensor> parameters() const;
};

struct ModelParams {
    ModelConfig config;
    EmbeddingTables embedding;
    std::vector<FfnBlock> blocks;
    Tensor head_weight;  // [2d, 1]
    Tensor head_bias;    // [1, 1]

    static ModelParams init(const ModelConfig& config, std::uint64_t seed);
    static ModelParams zeros(const ModelConfig& config);

    std::vector<Tensor> parameters() const;
    ModelParams clone() const;
    // Copies values from `other` (same config) into this model's tensors.
    void assign(const ModelParams& other);
};

struct SequenceOutput {
    Tensor logits;  // [T, 1]; row t predicts response t from history before t
    GaussianSeq state;
    Tensor pooled_mean;  // [1, d] last real position
    Tensor pooled_cov;   // [1, d]
};

struct ForwardOutput {
    std::vector<SequenceOutput> sequences;
};

struct ForwardOptions {
    bool training = false;
    std::mt19937_64* rng = nullptr;  // dropout source when training
};

// Two-layer refinement of [h; kcs] per path; covariance path ends in ELU + 1.
// With stochastic = false the covariance output is the constant 1.
GaussianSeq ffn_refine(const GaussianSeq& h, const GaussianSeq& kcs, const FfnBlock& block,
                       bool stochastic = true, Real dropout = 0, std::mt19937_64* rng = nullptr);

// eta = w . ReLU([h_mean; h_cov]) + b for every position ([T, 1]).
Tensor predict_logit(const GaussianSeq& h, const ModelParams& params);

ForwardOutput forward(std::span<const StudentSequence> batch, const ModelParams& params,
                      const VariantConfig& variant, const ForwardOptions& options = {});

// Positions that carry a prediction: t >= 1 and real.
Mask prediction_mask(const Mask& token_mask);

struct LossSum {
    Tensor total;  // negative log-likelihood summed over predicted positions
    std::size_t count = 0;
};

LossSum bce_sum(const Tensor& logits, std::span<const int> responses, const Mask& mask);
Tensor bce_loss(const Tensor& logits, std::span<const int> responses, const Mask& mask,
                LossReduction reduction = LossReduction::Mean);
Tensor bce_loss(const ForwardOutput& fwd, std::span<const StudentSequence> batch,
                LossReduction reduction = LossReduction::Mean);

// Last answer correct: earlier corrects flip to incorrect. Last answer
// incorrect: earlier incorrects flip to correct. nullopt below length 2.
std::optional<StudentSequence> build_negative_sequence(const StudentSequence& seq);

// Contrastive loss from precomputed squared W2 distances: `positive` [B, 1]
// anchor-to-own-negative, `in_batch` [B, B] anchor-to-anchor. The diagonal of
// `in_batch` is ignored. Distances are capped before exponentiation.
Tensor contrastive_loss_from_distances(const Tensor& positive, const Tensor& in_batch, Real cap,
                                       ClConvention convention);

// Pooled anchor states and the pooled states of their negatives, row-aligned.
// nullopt (with a warning) for batches smaller than 2.
std::optional<Tensor> contrastive_loss(const Tensor& anchor_mean, const Tensor& anchor_cov,
                                       const Tensor& negative_mean, const Tensor& negative_cov,
                                       Real cap = 50, ClConvention convention = ClConvention::Repel);

struct LossBreakdown {
    Tensor total;
    Tensor prediction;
    std::optional<Tensor> contrastive;
};

// L_p + lambda * L_CL. `negatives` may be null when lambda is 0. `negative_of[i]`
// indexes the negative output of batch sequence i, or is empty when none exists.
LossBreakdown total_loss(const ForwardOutput& fwd, const ForwardOutput* negatives,
                         std::span<const std::optional<std::size_t>> negative_of,
                         std::span<const StudentSequence> batch, const ModelParams& params,
                         const VariantConfig& variant);

// Forward on the batch (and on its negatives when lambda > 0) followed by total_loss.
LossBreakdown batch_loss(std::span<const StudentSequence> batch, const ModelParams& params,
                         const VariantConfig& variant, const ForwardOptions& options = {});

// Text checkpoint: header line, config line, then one header + value line per tensor.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ukt
