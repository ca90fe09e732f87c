#include "ukt/embedding.hpp"

#include <cmath>

#include "ukt/errors.hpp"

namespace ukt {

namespace {

Tensor gaussian_table(std::size_t rows, std::size_t cols, std::mt19937_64& rng, const char* name) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<Real> values(rows * cols);
    for (Real& v : values) v = static_cast<Real>(dist(rng));
    Tensor t = Tensor::from(rows, cols, std::move(values), true);
    t.named(name);
    return t;
}

Tensor zero_table(std::size_t rows, std::size_t cols, const char* name) {
    Tensor t = Tensor::zeros(rows, cols, true);
    t.named(name);
    return t;
}

struct TokenIds {
    std::vector<std::size_t> kcs, questions, responses;
};

TokenIds token_ids(const StudentSequence& seq) {
    TokenIds ids;
    for (const auto& it : seq.interactions) {
        if (it.kc_ids.size() != 1) {
            throw UsageError("embedding expects KC-expanded sequences (one KC per interaction)");
        }
        ids.kcs.push_back(it.kc_ids.front());
        ids.questions.push_back(it.question_id);
        ids.responses.push_back(static_cast<std::size_t>(it.response));
    }
    return ids;
}

// base + scale_rows * variation, elementwise product first.
Tensor compose(const Tensor& base, const Tensor& scale_rows, const Tensor& variation) {
    return add(base, mul(scale_rows, variation));
}

}  // namespace

EmbeddingTables EmbeddingTables::init(std::size_t num_kcs, std::size_t num_questions,
                                      std::size_t dim, std::size_t max_len, std::mt19937_64& rng,
                                      bool use_rasch) {
    EmbeddingTables t;
    t.kc_latent = gaussian_table(num_kcs, dim, rng, "kc_latent");
    t.kc_variation = gaussian_table(num_kcs, dim, rng, "kc_variation");
    t.question_mean = gaussian_table(num_questions, dim, rng, "question_mean");
    t.question_cov = gaussian_table(num_questions, dim, rng, "question_cov");
    t.response_mean = gaussian_table(2, dim, rng, "response_mean");
    t.response_cov = gaussian_table(2, dim, rng, "response_cov");
    t.position_mean = gaussian_table(max_len, dim, rng, "position_mean");
    t.position_cov = gaussian_table(max_len, dim, rng, "position_cov");
    t.use_rasch = use_rasch;
    return t;
}

EmbeddingTables EmbeddingTables::zeros(std::size_t num_kcs, std::size_t num_questions,
                                       std::size_t dim, std::size_t max_len) {
    EmbeddingTables t;
    t.kc_latent = zero_table(num_kcs, dim, "kc_latent");
    t.kc_variation = zero_table(num_kcs, dim, "kc_variation");
    t.question_mean = zero_table(num_questions, dim, "question_mean");
    t.question_cov = zero_table(num_questions, dim, "question_cov");
    t.response_mean = zero_table(2, dim, "response_mean");
    t.response_cov = zero_table(2, dim, "response_cov");
    t.position_mean = zero_table(max_len, dim, "position_mean");
    t.position_cov = zero_table(max_len, dim, "position_cov");
    return t;
}

std::vector<Tensor> EmbeddingTables::parameters() const {
    std::vector<Tensor> params{kc_latent, position_mean, position_cov};
    if (use_rasch) {
        params.insert(params.end(),
                      {kc_variation, question_mean, question_cov, response_mean, response_cov});
    }
    return params;
}

GaussianSeq embed_interactions(const StudentSequence& seq, const EmbeddingTables& tables) {
    const TokenIds ids = token_ids(seq);
    const Tensor z = gather_rows(tables.kc_latent, ids.kcs);
    GaussianSeq g;
    g.mask.assign(ids.kcs.size(), 1);
    if (!tables.use_rasch) {
        g.mean = z;
        g.cov = z;
        return g;
    }
    const Tensor v = gather_rows(tables.kc_variation, ids.kcs);
    g.mean = compose(z, gather_rows(tables.response_mean, ids.responses), v);
    g.cov = compose(z, gather_rows(tables.response_cov, ids.responses), v);
    return g;
}

GaussianSeq embed_kcs(const StudentSequence& seq, const EmbeddingTables& tables) {
    const TokenIds ids = token_ids(seq);
    const Tensor z = gather_rows(tables.kc_latent, ids.kcs);
    GaussianSeq g;
    g.mask.assign(ids.kcs.size(), 1);
    if (!tables.use_rasch) {
        g.mean = z;
        g.cov = z;
        return g;
    }
    const Tensor v = gather_rows(tables.kc_variation, ids.kcs);
    g.mean = compose(z, gather_rows(tables.question_mean, ids.questions), v);
    g.cov = compose(z, gather_rows(tables.question_cov, ids.questions), v);
    return g;
}

GaussianSeq add_positions(const GaussianSeq& g, const EmbeddingTables& tables) {
    const std::size_t length = g.length();
    if (length > tables.max_len()) {
        throw ConfigError("add_positions: sequence length " + std::to_string(length) +
                          " exceeds max_len " + std::to_string(tables.max_len()));
    }
    if (length == 0) return g;
    Tensor pos_mean = slice_rows(tables.position_mean, 0, length);
    Tensor pos_cov = slice_rows(tables.position_cov, 0, length);
    bool padded = false;
    for (auto m : g.mask) padded = padded || !m;
    if (padded) {
        std::vector<Real> keep(length * g.dim());
        for (std::size_t t = 0; t < length; ++t)
            for (std::size_t j = 0; j < g.dim(); ++j) keep[t * g.dim() + j] = g.mask[t] ? 1 : 0;
        const Tensor keep_t = Tensor::from(length, g.dim(), std::move(keep));
        pos_mean = mul(pos_mean, keep_t);
        pos_cov = mul(pos_cov, keep_t);
    }
    return GaussianSeq{add(g.mean, pos_mean), add(g.cov, pos_cov), g.mask};
}

GaussianSeq activate_covariance(const GaussianSeq& g) {
    return GaussianSeq{g.mean, elu_plus_one(g.cov), g.mask};
}

}  // namespace ukt
