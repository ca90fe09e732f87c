#include "ukt/attention.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ukt/errors.hpp"

namespace ukt {

AttentionConfig AttentionConfig::make(std::size_t dim, std::size_t heads, Real scale) {
    if (heads == 0 || dim % heads != 0) {
        throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide dim " +
                          std::to_string(dim));
    }
    AttentionConfig cfg;
    cfg.heads = heads;
    cfg.head_dim = dim / heads;
    cfg.scale = scale > 0 ? scale : std::sqrt(static_cast<Real>(cfg.head_dim));
    return cfg;
}

Real w2_sq_diag(std::span<const Real> mu1, std::span<const Real> cov1, std::span<const Real> mu2,
                std::span<const Real> cov2) {
    const std::size_t d = mu1.size();
    if (cov1.size() != d || mu2.size() != d || cov2.size() != d) {
        throw DimensionError("w2_sq_diag: operand lengths differ");
    }
    Real total = 0;
    for (std::size_t i = 0; i < d; ++i) {
        if (!(cov1[i] > 0) || !(cov2[i] > 0)) {
            throw DomainError("w2_sq_diag: nonpositive covariance entry at index " + std::to_string(i));
        }
        const Real dm = mu1[i] - mu2[i];
        const Real ds = std::sqrt(cov1[i]) - std::sqrt(cov2[i]);
        total += dm * dm + ds * ds;
    }
    return total;
}

std::optional<std::vector<Real>> attention_scores(std::span<const Real> query_mean,
                                                  std::span<const Real> query_cov,
                                                  const GaussianSeq& keys, std::size_t visible,
                                                  const AttentionConfig& cfg, std::size_t head) {
    const std::size_t hd = cfg.head_dim;
    const std::size_t offset = head * hd;
    if (offset + hd > query_mean.size() || keys.dim() != query_mean.size()) {
        throw DimensionError("attention_scores: head " + std::to_string(head) + " out of range");
    }
    const std::size_t length = keys.length();
    std::vector<Real> scores(length, -std::numeric_limits<Real>::infinity());
    bool any = false;
    for (std::size_t j = 0; j < length && j < visible; ++j) {
        if (!keys.mask[j]) continue;
        const std::size_t row = j * keys.dim() + offset;
        auto key_mean = keys.mean.data().subspan(row, hd);
        auto key_cov = keys.cov.data().subspan(row, hd);
        Real raw = 0;
        if (cfg.kind == ScoreKind::DotProduct) {
            for (std::size_t i = 0; i < hd; ++i) raw += query_mean[offset + i] * key_mean[i];
        } else if (cfg.mean_only) {
            for (std::size_t i = 0; i < hd; ++i) {
                const Real dm = query_mean[offset + i] - key_mean[i];
                raw -= dm * dm;
            }
        } else {
            raw = -w2_sq_diag(query_mean.subspan(offset, hd), query_cov.subspan(offset, hd),
                              key_mean, key_cov);
        }
        scores[j] = raw / cfg.scale;
        any = true;
    }
    if (!any) return std::nullopt;
    return scores;
}

Mask causal_mask(const Mask& query_mask, const Mask& key_mask) {
    const std::size_t m = query_mask.size(), n = key_mask.size();
    Mask keep(m * n, 0);
    for (std::size_t i = 0; i < m; ++i) {
        if (!query_mask[i]) continue;
        for (std::size_t j = 0; j < n && j < i; ++j) keep[i * n + j] = key_mask[j];
    }
    return keep;
}

GaussianSeq attend(const GaussianSeq& queries, const GaussianSeq& keys, const GaussianSeq& values,
                   const AttentionConfig& cfg, std::mt19937_64* rng) {
    const std::size_t length = queries.length();
    if (keys.length() != length || values.length() != length) {
        throw DimensionError("attend: queries/keys/values lengths " + std::to_string(length) + "/" +
                             std::to_string(keys.length()) + "/" + std::to_string(values.length()));
    }
    const std::size_t dim = queries.dim();
    if (cfg.heads * cfg.head_dim != dim || keys.dim() != dim || values.dim() != dim) {
        throw DimensionError("attend: model dim " + std::to_string(dim) + " does not match " +
                             std::to_string(cfg.heads) + " heads of " + std::to_string(cfg.head_dim));
    }

    const Mask keep = cfg.causal ? causal_mask(queries.mask, keys.mask) : [&] {
        Mask all(length * length, 0);
        for (std::size_t i = 0; i < length; ++i)
            for (std::size_t j = 0; j < length; ++j) all[i * length + j] = queries.mask[i] && keys.mask[j];
        return all;
    }();

    const bool use_cov_distance = cfg.kind == ScoreKind::Wasserstein && !cfg.mean_only;
    Tensor q_root, k_root;
    if (use_cov_distance) {
        q_root = sqrt(queries.cov);
        k_root = queries.cov.impl() == keys.cov.impl() ? q_root : sqrt(keys.cov);
    }

    Tensor out_mean, out_cov;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const std::size_t begin = h * cfg.head_dim;
        const Tensor qm = slice_cols(queries.mean, begin, cfg.head_dim);
        const Tensor km = slice_cols(keys.mean, begin, cfg.head_dim);
        Tensor scores;
        if (cfg.kind == ScoreKind::DotProduct) {
            scores = scale(matmul(qm, transpose(km)), Real(1) / cfg.scale);
        } else {
            Tensor dist = pairwise_sq_dist(qm, km);
            if (use_cov_distance) {
                dist = add(dist, pairwise_sq_dist(slice_cols(q_root, begin, cfg.head_dim),
                                                  slice_cols(k_root, begin, cfg.head_dim)));
            }
            scores = scale(dist, Real(-1) / cfg.scale);
        }
        Tensor weights = masked_softmax(scores, keep);
        if (rng && cfg.dropout > 0) weights = dropout(weights, cfg.dropout, *rng);
        const Tensor hm = matmul(weights, slice_cols(values.mean, begin, cfg.head_dim));
        const Tensor hc = matmul(weights, slice_cols(values.cov, begin, cfg.head_dim));
        out_mean = h == 0 ? hm : concat_cols(out_mean, hm);
        out_cov = h == 0 ? hc : concat_cols(out_cov, hc);
    }

    // Empty-context rows get the neutral prior N(0, I).
    std::vector<Real> prior(length * dim, Real(0));
    bool any_empty = false;
    for (std::size_t i = 0; i < length; ++i) {
        bool empty = true;
        for (std::size_t j = 0; j < length && empty; ++j) empty = !keep[i * length + j];
        if (!empty) continue;
        any_empty = true;
        for (std::size_t k = 0; k < dim; ++k) prior[i * dim + k] = Real(1);
    }
    if (any_empty) out_cov = add(out_cov, Tensor::from(length, dim, std::move(prior)));
    return GaussianSeq{out_mean, out_cov, queries.mask};
}

}  // namespace ukt
