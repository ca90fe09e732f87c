#include "ukt/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "ukt/errors.hpp"
#include "ukt/log.hpp"

namespace ukt {

std::string VariantConfig::label() const {
    if (!use_stochastic) return "w/o Stocemb";
    if (!use_wasserstein) return "w/o W.dist";
    if (!use_cl) return "w/o CL";
    return "UKT";
}

VariantConfig VariantConfig::full(Real lambda) { return VariantConfig{true, true, true, lambda}; }
VariantConfig VariantConfig::without_cl() { return VariantConfig{false, true, true, 0}; }
VariantConfig VariantConfig::without_wasserstein(Real lambda) {
    return VariantConfig{true, false, true, lambda};
}
VariantConfig VariantConfig::without_stochastic(Real lambda) {
    return VariantConfig{true, true, false, lambda};
}

std::optional<VariantConfig> parse_variant(const std::string& name, Real lambda) {
    if (name == "ukt") return VariantConfig::full(lambda);
    if (name == "no-cl") return VariantConfig::without_cl();
    if (name == "no-wdist") return VariantConfig::without_wasserstein(lambda);
    if (name == "no-stocemb") return VariantConfig::without_stochastic(lambda);
    return std::nullopt;
}

AttentionConfig ModelConfig::attention(const VariantConfig& variant) const {
    AttentionConfig cfg = AttentionConfig::make(dim, heads, score_scale);
    cfg.kind = variant.use_wasserstein ? ScoreKind::Wasserstein : ScoreKind::DotProduct;
    cfg.mean_only = !variant.use_stochastic;
    cfg.dropout = dropout;
    return cfg;
}

namespace {

Tensor init_weight(std::size_t rows, std::size_t cols, std::mt19937_64& rng, std::string name) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
    std::vector<Real> values(rows * cols);
    for (Real& v : values) v = static_cast<Real>(dist(rng));
    Tensor t = Tensor::from(rows, cols, std::move(values), true);
    t.named(std::move(name));
    return t;
}

Tensor zero_param(std::size_t rows, std::size_t cols, std::string name) {
    Tensor t = Tensor::zeros(rows, cols, true);
    t.named(std::move(name));
    return t;
}

Tensor two_layer(const Tensor& x, const Tensor& w_in, const Tensor& b_in, const Tensor& w_out,
                 const Tensor& b_out, Real dropout_rate, std::mt19937_64* rng) {
    Tensor hidden = relu(add_row(matmul(x, w_in), b_in));
    if (rng && dropout_rate > 0) hidden = dropout(hidden, dropout_rate, *rng);
    return add_row(matmul(hidden, w_out), b_out);
}

}  // namespace

FfnBlock FfnBlock::init(std::size_t dim, std::mt19937_64& rng, const std::string& prefix) {
    FfnBlock b;
    b.w1 = init_weight(2 * dim, dim, rng, prefix + ".w1");
    b.b1 = zero_param(1, dim, prefix + ".b1");
    b.w2 = init_weight(dim, dim, rng, prefix + ".w2");
    b.b2 = zero_param(1, dim, prefix + ".b2");
    b.w3 = init_weight(2 * dim, dim, rng, prefix + ".w3");
    b.b3 = zero_param(1, dim, prefix + ".b3");
    b.w4 = init_weight(dim, dim, rng, prefix + ".w4");
    b.b4 = zero_param(1, dim, prefix + ".b4");
    return b;
}

FfnBlock FfnBlock::zeros(std::size_t dim, const std::string& prefix) {
    FfnBlock b;
    b.w1 = zero_param(2 * dim, dim, prefix + ".w1");
    b.b1 = zero_param(1, dim, prefix + ".b1");
    b.w2 = zero_param(dim, dim, prefix + ".w2");
    b.b2 = zero_param(1, dim, prefix + ".b2");
    b.w3 = zero_param(2 * dim, dim, prefix + ".w3");
    b.b3 = zero_param(1, dim, prefix + ".b3");
    b.w4 = zero_param(dim, dim, prefix + ".w4");
    b.b4 = zero_param(1, dim, prefix + ".b4");
    return b;
}

std::vector<Tensor> FfnBlock::parameters() const { return {w1, b1, w2, b2, w3, b3, w4, b4}; }

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    AttentionConfig::make(config.dim, config.heads);  // validates heads | dim
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.config = config;
    p.embedding = EmbeddingTables::init(config.num_kcs, config.num_questions, config.dim,
                                        config.max_len, rng, config.use_rasch);
    for (std::size_t b = 0; b < config.blocks; ++b) {
        p.blocks.push_back(FfnBlock::init(config.dim, rng, "block" + std::to_string(b)));
    }
    p.head_weight = init_weight(2 * config.dim, 1, rng, "head.weight");
    p.head_bias = zero_param(1, 1, "head.bias");
    return p;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
    AttentionConfig::make(config.dim, config.heads);
    ModelParams p;
    p.config = config;
    p.embedding = EmbeddingTables::zeros(config.num_kcs, config.num_questions, config.dim,
                                         config.max_len);
    p.embedding.use_rasch = config.use_rasch;
    for (std::size_t b = 0; b < config.blocks; ++b) {
        p.blocks.push_back(FfnBlock::zeros(config.dim, "block" + std::to_string(b)));
    }
    p.head_weight = zero_param(2 * config.dim, 1, "head.weight");
    p.head_bias = zero_param(1, 1, "head.bias");
    return p;
}

std::vector<Tensor> ModelParams::parameters() const {
    std::vector<Tensor> params = embedding.parameters();
    for (const auto& b : blocks) {
        auto bp = b.parameters();
        params.insert(params.end(), bp.begin(), bp.end());
    }
    params.push_back(head_weight);
    params.push_back(head_bias);
    return params;
}

ModelParams ModelParams::clone() const {
    ModelParams copy = ModelParams::zeros(config);
    copy.embedding.use_rasch = embedding.use_rasch;
    copy.assign(*this);
    return copy;
}

void ModelParams::assign(const ModelParams& other) {
    // Covers every table, including ones a disabled Rasch term leaves out of parameters().
    auto all = [](const ModelParams& m) {
        std::vector<Tensor> t{m.embedding.kc_latent,    m.embedding.kc_variation,
                              m.embedding.question_mean, m.embedding.question_cov,
                              m.embedding.response_mean, m.embedding.response_cov,
                              m.embedding.position_mean, m.embedding.position_cov};
        for (const auto& b : m.blocks) {
            auto bp = b.parameters();
            t.insert(t.end(), bp.begin(), bp.end());
        }
        t.push_back(m.head_weight);
        t.push_back(m.head_bias);
        return t;
    };
    auto dst = all(*this);
    const auto src = all(other);
    if (dst.size() != src.size()) throw ConfigError("ModelParams::assign: block counts differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].shape() != src[i].shape()) {
            throw DimensionError("ModelParams::assign: shape mismatch for " + src[i].name());
        }
        std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
    }
}

GaussianSeq ffn_refine(const GaussianSeq& h, const GaussianSeq& kcs, const FfnBlock& block,
                       bool stochastic, Real dropout_rate, std::mt19937_64* rng) {
    if (h.length() != kcs.length()) {
        throw DimensionError("ffn_refine: lengths " + std::to_string(h.length()) + " vs " +
                             std::to_string(kcs.length()));
    }
    GaussianSeq out;
    out.mask = h.mask;
    out.mean = two_layer(concat_cols(h.mean, kcs.mean), block.w1, block.b1, block.w2, block.b2,
                         dropout_rate, rng);
    if (stochastic) {
        out.cov = elu_plus_one(two_layer(concat_cols(h.cov, kcs.cov), block.w3, block.b3, block.w4,
                                         block.b4, dropout_rate, rng));
    } else {
        out.cov = Tensor::full(h.length(), h.dim(), Real(1));
    }
    return out;
}

Tensor predict_logit(const GaussianSeq& h, const ModelParams& params) {
    const Tensor features = relu(concat_cols(h.mean, h.cov));
    return add_row(matmul(features, params.head_weight), params.head_bias);
}

namespace {

SequenceOutput run_sequence(const StudentSequence& seq, const ModelParams& params,
                            const VariantConfig& variant, const AttentionConfig& att,
                            const ForwardOptions& options) {
    if (seq.size() == 0) throw DataError("forward: empty sequence for student " + std::to_string(seq.student_id));
    const EmbeddingTables& tables = params.embedding;
    std::mt19937_64* rng = options.training ? options.rng : nullptr;

    GaussianSeq interactions = add_positions(embed_interactions(seq, tables), tables);
    GaussianSeq kcs = add_positions(embed_kcs(seq, tables), tables);
    if (variant.use_stochastic) {
        interactions = activate_covariance(interactions);
        kcs = activate_covariance(kcs);
    } else {
        const Tensor ones = Tensor::full(seq.size(), tables.dim(), Real(1));
        interactions.cov = ones;
        kcs.cov = ones;
    }

    GaussianSeq state = interactions;
    for (const FfnBlock& block : params.blocks) {
        const GaussianSeq retrieved = attend(kcs, kcs, state, att, rng);
        state = ffn_refine(retrieved, kcs, block, variant.use_stochastic, params.config.dropout, rng);
    }

    SequenceOutput out;
    out.logits = predict_logit(state, params);
    std::size_t last = state.length() - 1;
    while (last > 0 && !state.mask[last]) --last;
    out.pooled_mean = slice_rows(state.mean, last, 1);
    out.pooled_cov = slice_rows(state.cov, last, 1);
    out.state = std::move(state);
    return out;
}

std::vector<int> responses_of(const StudentSequence& seq) {
    std::vector<int> r;
    r.reserve(seq.size());
    for (const auto& it : seq.interactions) r.push_back(it.response);
    return r;
}

}  // namespace

ForwardOutput forward(std::span<const StudentSequence> batch, const ModelParams& params,
                      const VariantConfig& variant, const ForwardOptions& options) {
    const AttentionConfig att = params.config.attention(variant);
    ForwardOutput out;
    out.sequences.reserve(batch.size());
    for (const auto& seq : batch) out.sequences.push_back(run_sequence(seq, params, variant, att, options));
    return out;
}

Mask prediction_mask(const Mask& token_mask) {
    Mask m = token_mask;
    if (!m.empty()) m[0] = 0;
    return m;
}

LossSum bce_sum(const Tensor& logits, std::span<const int> responses, const Mask& mask) {
    const std::size_t length = logits.rows();
    if (logits.cols() != 1 || responses.size() != length || mask.size() != length) {
        throw DimensionError("bce: logits " + shape_string(logits.shape()) + ", " +
                             std::to_string(responses.size()) + " responses, mask of " +
                             std::to_string(mask.size()));
    }
    std::vector<Real> pos(length, 0), negw(length, 0);
    std::size_t count = 0;
    for (std::size_t t = 0; t < length; ++t) {
        if (!mask[t]) continue;
        ++count;
        (responses[t] ? pos : negw)[t] = Real(1);
    }
    if (count == 0) return LossSum{Tensor::scalar(0), 0};
    const Tensor likelihood =
        add(sum_all(mul(log_sigmoid(logits), Tensor::from(length, 1, std::move(pos)))),
            sum_all(mul(log_sigmoid(neg(logits)), Tensor::from(length, 1, std::move(negw)))));
    return LossSum{neg(likelihood), count};
}

Tensor bce_loss(const Tensor& logits, std::span<const int> responses, const Mask& mask,
                LossReduction reduction) {
    LossSum s = bce_sum(logits, responses, prediction_mask(mask));
    if (s.count == 0) throw EvaluationError("bce_loss: no predicted positions");
    return reduction == LossReduction::Mean ? scale(s.total, Real(1) / static_cast<Real>(s.count))
                                            : s.total;
}

Tensor bce_loss(const ForwardOutput& fwd, std::span<const StudentSequence> batch,
                LossReduction reduction) {
    if (fwd.sequences.size() != batch.size()) throw DimensionError("bce_loss: batch/output size mismatch");
    Tensor total;
    std::size_t count = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = responses_of(batch[i]);
        LossSum s = bce_sum(fwd.sequences[i].logits, r, prediction_mask(fwd.sequences[i].state.mask));
        if (s.count == 0) continue;
        total = total.defined() ? add(total, s.total) : s.total;
        count += s.count;
    }
    if (count == 0) throw EvaluationError("bce_loss: batch has no predicted positions");
    return reduction == LossReduction::Mean ? scale(total, Real(1) / static_cast<Real>(count)) : total;
}

std::optional<StudentSequence> build_negative_sequence(const StudentSequence& seq) {
    if (seq.size() < 2) return std::nullopt;
    StudentSequence negative = seq;
    auto& xs = negative.interactions;
    const int last = xs.back().response;
    for (std::size_t t = 0; t + 1 < xs.size(); ++t) {
        if (xs[t].response == last) xs[t].response = 1 - last;
    }
    return negative;
}

Tensor contrastive_loss_from_distances(const Tensor& positive, const Tensor& in_batch, Real cap,
                                       ClConvention convention) {
    const std::size_t b = positive.rows();
    if (positive.cols() != 1 || in_batch.rows() != b || in_batch.cols() != b) {
        throw DimensionError("contrastive_loss: positive " + shape_string(positive.shape()) +
                             ", in-batch " + shape_string(in_batch.shape()));
    }
    const Tensor pos = clamp_max(positive, cap);
    const Tensor others = neg(clamp_max(in_batch, cap));
    const Tensor logits = concat_cols(convention == ClConvention::Repel ? pos : neg(pos), others);
    Mask keep(b * (b + 1), 1);
    for (std::size_t i = 0; i < b; ++i) keep[i * (b + 1) + i + 1] = 0;
    const Tensor log_prob = masked_log_softmax(logits, keep);
    return neg(mean(slice_cols(log_prob, 0, 1), 0));
}

std::optional<Tensor> contrastive_loss(const Tensor& anchor_mean, const Tensor& anchor_cov,
                                       const Tensor& negative_mean, const Tensor& negative_cov,
                                       Real cap, ClConvention convention) {
    if (anchor_mean.rows() < 2) {
        log_warn("contrastive loss skipped: batch needs at least 2 anchors");
        return std::nullopt;
    }
    const Tensor anchor_root = sqrt(anchor_cov);
    const Tensor positive = add(sum(square(sub(anchor_mean, negative_mean)), 1),
                                sum(square(sub(anchor_root, sqrt(negative_cov))), 1));
    const Tensor in_batch = add(pairwise_sq_dist(anchor_mean, anchor_mean),
                                pairwise_sq_dist(anchor_root, anchor_root));
    return contrastive_loss_from_distances(positive, in_batch, cap, convention);
}

LossBreakdown total_loss(const ForwardOutput& fwd, const ForwardOutput* negatives,
                         std::span<const std::optional<std::size_t>> negative_of,
                         std::span<const StudentSequence> batch, const ModelParams& params,
                         const VariantConfig& variant) {
    LossBreakdown out;
    out.prediction = bce_loss(fwd, batch, params.config.reduction);
    out.total = out.prediction;
    const Real lambda = variant.effective_lambda();
    if (lambda <= 0 || negatives == nullptr) return out;

    std::vector<Tensor> am, ac, nm, nc;
    for (std::size_t i = 0; i < fwd.sequences.size() && i < negative_of.size(); ++i) {
        if (!negative_of[i]) continue;
        const SequenceOutput& neg_out = negatives->sequences.at(*negative_of[i]);
        am.push_back(fwd.sequences[i].pooled_mean);
        ac.push_back(fwd.sequences[i].pooled_cov);
        nm.push_back(neg_out.pooled_mean);
        nc.push_back(neg_out.pooled_cov);
    }
    if (am.size() < 2) {
        log_warn("contrastive loss skipped: fewer than 2 sequences with negatives in batch");
        return out;
    }
    out.contrastive = contrastive_loss(concat_rows(am), concat_rows(ac), concat_rows(nm),
                                       concat_rows(nc), params.config.cl_distance_cap,
                                       params.config.cl_convention);
    if (out.contrastive) out.total = add(out.prediction, scale(*out.contrastive, lambda));
    return out;
}

LossBreakdown batch_loss(std::span<const StudentSequence> batch, const ModelParams& params,
                         const VariantConfig& variant, const ForwardOptions& options) {
    const ForwardOutput fwd = forward(batch, params, variant, options);
    if (variant.effective_lambda() <= 0) return total_loss(fwd, nullptr, {}, batch, params, variant);

    std::vector<StudentSequence> negatives;
    std::vector<std::optional<std::size_t>> negative_of(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (auto n = build_negative_sequence(batch[i])) {
            negative_of[i] = negatives.size();
            negatives.push_back(std::move(*n));
        }
    }
    const ForwardOutput neg_fwd = forward(negatives, params, variant, options);
    return total_loss(fwd, &neg_fwd, negative_of, batch, params, variant);
}

namespace {

const char* kCheckpointMagic = "ukt-checkpoint 1";

std::vector<Tensor> checkpoint_tensors(const ModelParams& p) {
    std::vector<Tensor> t{p.embedding.kc_latent,    p.embedding.kc_variation,
                          p.embedding.question_mean, p.embedding.question_cov,
                          p.embedding.response_mean, p.embedding.response_cov,
                          p.embedding.position_mean, p.embedding.position_cov};
    for (const auto& b : p.blocks) {
        auto bp = b.parameters();
        t.insert(t.end(), bp.begin(), bp.end());
    }
    t.push_back(p.head_weight);
    t.push_back(p.head_bias);
    return t;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    const ModelConfig& c = params.config;
    out << kCheckpointMagic << '\n';
    out << "config num_kcs=" << c.num_kcs << " num_questions=" << c.num_questions
        << " dim=" << c.dim << " heads=" << c.heads << " blocks=" << c.blocks
        << " max_len=" << c.max_len << " use_rasch=" << (c.use_rasch ? 1 : 0) << std::setprecision(17)
        << " dropout=" << c.dropout << " score_scale=" << c.score_scale
        << " cl_distance_cap=" << c.cl_distance_cap
        << " cl_convention=" << (c.cl_convention == ClConvention::Repel ? "paper" : "infonce")
        << " reduction=" << (c.reduction == LossReduction::Mean ? "mean" : "sum") << '\n';
    const auto tensors = checkpoint_tensors(params);
    out << "tensors " << tensors.size() << '\n';
    for (const Tensor& t : tensors) {
        out << "tensor " << t.name() << ' ' << t.rows() << ' ' << t.cols() << '\n';
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i) out << ' ';
            out << t.data()[i];
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed for checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) {
        throw ParseError(path.string() + ": not a ukt checkpoint");
    }
    if (!std::getline(in, line) || line.rfind("config ", 0) != 0) {
        throw ParseError(path.string() + ": missing config line");
    }
    std::map<std::string, std::string> kv;
    {
        std::istringstream fields(line.substr(7));
        std::string field;
        while (fields >> field) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) throw ParseError(path.string() + ": bad config field " + field);
            kv[field.substr(0, eq)] = field.substr(eq + 1);
        }
    }
    auto get = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw ParseError(path.string() + ": config lacks " + key);
        return it->second;
    };
    ModelConfig c;
    c.num_kcs = std::stoul(get("num_kcs"));
    c.num_questions = std::stoul(get("num_questions"));
    c.dim = std::stoul(get("dim"));
    c.heads = std::stoul(get("heads"));
    c.blocks = std::stoul(get("blocks"));
    c.max_len = std::stoul(get("max_len"));
    c.use_rasch = get("use_rasch") == "1";
    c.dropout = std::stod(get("dropout"));
    c.score_scale = std::stod(get("score_scale"));
    c.cl_distance_cap = std::stod(get("cl_distance_cap"));
    c.cl_convention = get("cl_convention") == "paper" ? ClConvention::Repel : ClConvention::InfoNce;
    c.reduction = get("reduction") == "mean" ? LossReduction::Mean : LossReduction::Sum;

    ModelParams params = ModelParams::zeros(c);
    std::map<std::string, Tensor> by_name;
    for (const Tensor& t : checkpoint_tensors(params)) by_name[t.name()] = t;

    std::size_t count = 0;
    std::string word;
    if (!(in >> word >> count) || word != "tensors") throw ParseError(path.string() + ": missing tensor count");
    if (count != by_name.size()) {
        throw ParseError(path.string() + ": expected " + std::to_string(by_name.size()) +
                         " tensors, found " + std::to_string(count));
    }
    for (std::size_t k = 0; k < count; ++k) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(in >> word >> name >> rows >> cols) || word != "tensor") {
            throw ParseError(path.string() + ": bad tensor header #" + std::to_string(k));
        }
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ParseError(path.string() + ": unknown tensor " + name);
        Tensor& t = it->second;
        if (t.rows() != rows || t.cols() != cols) {
            throw ParseError(path.string() + ": tensor " + name + " has shape " +
                             shape_string({rows, cols}) + ", expected " + shape_string(t.shape()));
        }
        auto values = t.mutable_data();
        for (Real& v : values) {
            if (!(in >> v)) throw ParseError(path.string() + ": truncated values for " + name);
        }
    }
    return params;
}

}  // namespace ukt
