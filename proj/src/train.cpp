#include "ukt/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "ukt/errors.hpp"
#include "ukt/log.hpp"

namespace ukt {

Adam::Adam(std::vector<Tensor> params, Real learning_rate, Real beta1, Real beta2, Real epsilon)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), Real(0));
        v_.emplace_back(p.size(), Real(0));
    }
}

void Adam::step() {
    ++step_;
    const Real c1 = Real(1) - std::pow(beta1_, static_cast<Real>(step_));
    const Real c2 = Real(1) - std::pow(beta2_, static_cast<Real>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = params_[k];
        if (!p.has_grad()) continue;
        auto values = p.mutable_data();
        auto grad = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
            m[i] = beta1_ * m[i] + (Real(1) - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (Real(1) - beta2_) * grad[i] * grad[i];
            values[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

Real auc(std::span<const Real> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::size_t positives = 0;
    for (int l : labels) positives += l ? 1 : 0;
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw EvaluationError("auc: undefined with a single class (" + std::to_string(positives) +
                              " positives, " + std::to_string(negatives) + " negatives)");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of 1-based average ranks of the positives.
    double rank_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum += avg_rank;
        i = j;
    }
    const double p = static_cast<double>(positives);
    const double q = static_cast<double>(negatives);
    return static_cast<Real>((rank_sum - p * (p + 1) / 2) / (p * q));
}

Real accuracy(std::span<const Real> scores, std::span<const int> labels, Real threshold) {
    if (scores.size() != labels.size()) throw DimensionError("accuracy: length mismatch");
    if (scores.empty()) throw EvaluationError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) hits += ((scores[i] >= threshold) == (labels[i] == 1)) ? 1 : 0;
    return static_cast<Real>(hits) / static_cast<Real>(scores.size());
}

Predictions predict(const ModelParams& params, std::span<const StudentSequence> data,
                    const VariantConfig& variant) {
    NoGradScope no_grad;
    Predictions out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ForwardOutput fwd = forward(data.subspan(i, 1), params, variant);
        const SequenceOutput& s = fwd.sequences.front();
        const Mask mask = prediction_mask(s.state.mask);
        for (std::size_t t = 0; t < mask.size(); ++t) {
            if (!mask[t]) continue;
            const Real eta = s.logits(t, 0);
            out.probabilities.push_back(Real(1) / (Real(1) + std::exp(-eta)));
            out.labels.push_back(data[i].interactions[t].response);
        }
        Real total = 0;
        std::size_t count = 0;
        const std::size_t d = s.state.dim();
        for (std::size_t t = 0; t < s.state.length(); ++t) {
            if (!s.state.mask[t]) continue;
            for (std::size_t k = 0; k < d; ++k) total += s.state.cov(t, k);
            count += d;
        }
        out.cov_means.emplace_back(i, count ? total / static_cast<Real>(count) : Real(0));
    }
    return out;
}

EvalReport evaluate(const ModelParams& params, std::span<const StudentSequence> data,
                    const VariantConfig& variant, Real threshold) {
    const Predictions p = predict(params, data, variant);
    EvalReport report;
    report.auc = auc(p.probabilities, p.labels);
    report.accuracy = accuracy(p.probabilities, p.labels, threshold);
    report.predictions = p.labels.size();
    report.per_sequence_cov_mean = p.cov_means;
    return report;
}

TrainResult train(std::span<const StudentSequence> train_set,
                  std::span<const StudentSequence> valid_set, const ModelConfig& model,
                  const TrainConfig& cfg, const VariantConfig& variant) {
    if (train_set.empty() || valid_set.empty()) throw ConfigError("train: empty training or validation set");
    if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be positive");

    ModelParams params = ModelParams::init(model, cfg.seed);
    ModelParams best = params.clone();
    Adam adam(params.parameters(), cfg.learning_rate);
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 dropout_rng(cfg.seed + 1);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    EvalReport report;
    Real best_auc = -1;
    std::size_t since_best = 0;
    ForwardOptions options{true, &dropout_rng};

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(shuffle_rng)]);
        }
        Real loss_total = 0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<StudentSequence> batch;
            batch.reserve(end - begin);
            for (std::size_t k = begin; k < end; ++k) batch.push_back(train_set[order[k]]);

            Tape tape;
            TapeScope scope(tape);
            const LossBreakdown loss = batch_loss(batch, params, variant, options);
            const Real value = loss.total.item();
            if (!std::isfinite(value)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(batches + 1));
            }
            tape.backward(loss.total);
            adam.step();
            adam.zero_grad();
            loss_total += value;
            ++batches;
        }

        const EvalReport val = evaluate(params, valid_set, variant);
        EpochRecord rec{epoch, loss_total / static_cast<Real>(batches), val.auc, val.accuracy};
        report.epochs.push_back(rec);
        report.loss_trace.push_back(rec.train_loss);
        log_info("epoch " + std::to_string(epoch) + " loss " + std::to_string(rec.train_loss) +
                 " val_auc " + std::to_string(val.auc));

        if (val.auc > best_auc) {
            best_auc = val.auc;
            best.assign(params);
            report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
        if (cfg.target_auc && val.auc >= *cfg.target_auc) break;
    }

    const EvalReport final_val = evaluate(best, valid_set, variant);
    report.auc = final_val.auc;
    report.accuracy = final_val.accuracy;
    report.predictions = final_val.predictions;
    report.per_sequence_cov_mean = final_val.per_sequence_cov_mean;
    return TrainResult{std::move(best), std::move(report)};
}

ModelConfig model_config_for(const DatasetBundle& bundle, std::size_t dim, std::size_t heads,
                             std::size_t blocks, std::size_t max_len) {
    ModelConfig c;
    c.num_kcs = bundle.num_kcs;
    c.num_questions = bundle.num_questions;
    c.dim = dim;
    c.heads = heads;
    c.blocks = blocks;
    c.max_len = max_len;
    return c;
}

void write_metrics_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "epoch,train_loss,val_auc,val_acc\n" << std::setprecision(10);
    for (const auto& e : report.epochs) {
        out << e.epoch << ',' << e.train_loss << ',' << e.val_auc << ',' << e.val_accuracy << '\n';
    }
}

std::vector<Real> default_lambda_grid() { return {0.01, 0.02, 0.05, 0.07, 0.1, 0.5, 1.0}; }

std::vector<SweepRow> lambda_sweep(const DatasetBundle& bundle, const FoldPlan& plan,
                                   const ModelConfig& model, const TrainConfig& cfg,
                                   std::span<const Real> grid, std::size_t folds_used) {
    if (grid.empty()) throw ConfigError("lambda_sweep: empty grid");
    const std::size_t folds = folds_used == 0 ? plan.folds.size() : std::min(folds_used, plan.folds.size());
    std::vector<SweepRow> rows;
    for (Real lambda : grid) {
        SweepRow row;
        row.lambda = lambda;
        for (std::size_t f = 0; f < folds; ++f) {
            const FoldSplit split = materialize_fold(bundle, plan, f);
            const VariantConfig variant = VariantConfig::full(lambda);
            const TrainResult result = train(split.train, split.valid, model, cfg, variant);
            row.fold_aucs.push_back(evaluate(result.params, split.test, variant).auc);
        }
        const Real n = static_cast<Real>(row.fold_aucs.size());
        row.mean_auc = std::accumulate(row.fold_aucs.begin(), row.fold_aucs.end(), Real(0)) / n;
        Real var = 0;
        for (Real a : row.fold_aucs) var += (a - row.mean_auc) * (a - row.mean_auc);
        row.std_auc = row.fold_aucs.size() > 1 ? std::sqrt(var / (n - 1)) : Real(0);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "lambda,mean_auc,std_auc,folds\n" << std::setprecision(10);
    for (const auto& r : rows) {
        out << r.lambda << ',' << r.mean_auc << ',' << r.std_auc << ',' << r.fold_aucs.size() << '\n';
    }
}

std::vector<std::vector<Real>> covariance_heatmap(const ModelParams& params,
                                                  std::span<const StudentSequence> batch,
                                                  const VariantConfig& variant,
                                                  HeatmapLayout layout) {
    NoGradScope no_grad;
    std::vector<std::vector<Real>> matrix;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const ForwardOutput fwd = forward(batch.subspan(i, 1), params, variant);
        const GaussianSeq& state = fwd.sequences.front().state;
        const std::size_t d = state.dim();
        std::vector<Real> per_dim(d, Real(0));
        std::size_t positions = 0;
        for (std::size_t t = 0; t < state.length(); ++t) {
            if (!state.mask[t]) continue;
            ++positions;
            for (std::size_t k = 0; k < d; ++k) per_dim[k] += state.cov(t, k);
        }
        for (Real& v : per_dim) v /= static_cast<Real>(std::max<std::size_t>(positions, 1));
        if (layout == HeatmapLayout::PerDimension) {
            matrix.push_back(std::move(per_dim));
        } else {
            matrix.push_back({std::accumulate(per_dim.begin(), per_dim.end(), Real(0)) / static_cast<Real>(d)});
        }
    }
    return matrix;
}

std::vector<std::vector<Real>> export_covariance_heatmap(const ModelParams& params,
                                                         std::span<const StudentSequence> batch,
                                                         const VariantConfig& variant,
                                                         const std::filesystem::path& path,
                                                         HeatmapLayout layout) {
    auto matrix = covariance_heatmap(params, batch, variant, layout);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "sequence,student";
    const std::size_t cols = matrix.empty() ? (layout == HeatmapLayout::PerDimension ? params.config.dim : 1)
                                            : matrix.front().size();
    if (layout == HeatmapLayout::ScalarMean) {
        out << ",cov_mean";
    } else {
        for (std::size_t k = 0; k < cols; ++k) out << ",dim" << k;
    }
    out << '\n' << std::setprecision(10);
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        out << i << ',' << batch[i].student_id;
        for (Real v : matrix[i]) out << ',' << v;
        out << '\n';
    }
    return matrix;
}

std::vector<AblationRow> ablate(const FoldSplit& split, const ModelConfig& model,
                                const TrainConfig& cfg, Real lambda) {
    const VariantConfig variants[] = {VariantConfig::full(lambda), VariantConfig::without_cl(),
                                      VariantConfig::without_wasserstein(lambda),
                                      VariantConfig::without_stochastic(lambda)};
    std::vector<AblationRow> rows;
    for (const VariantConfig& v : variants) {
        const TrainResult result = train(split.train, split.valid, model, cfg, v);
        const EvalReport test = evaluate(result.params, split.test, v);
        rows.push_back({v.label(), test.auc, test.accuracy});
    }
    return rows;
}

void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "variant,auc,accuracy\n" << std::setprecision(10);
    for (const auto& r : rows) out << r.variant << ',' << r.auc << ',' << r.accuracy << '\n';
}

std::vector<StudentSequence> inject_noise(std::span<const StudentSequence> data, Real rate,
                                          std::uint64_t seed) {
    if (!(rate >= 0 && rate <= 1)) throw ConfigError("inject_noise: rate must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution flip(static_cast<double>(rate));
    std::vector<StudentSequence> out(data.begin(), data.end());
    for (auto& seq : out)
        for (auto& it : seq.interactions)
            if (flip(rng)) it.response = 1 - it.response;
    return out;
}

std::vector<StressRow> aleatory_stress_eval(const std::map<std::string, TrainedVariant>& models,
                                            std::span<const StudentSequence> clean, Real noise_rate,
                                            std::uint64_t seed) {
    const std::vector<StudentSequence> noisy = inject_noise(clean, noise_rate, seed);
    std::vector<StressRow> rows;
    for (const auto& [name, m] : models) {
        StressRow row;
        row.variant = name;
        row.clean_auc = evaluate(m.params, clean, m.variant).auc;
        row.noisy_auc = evaluate(m.params, noisy, m.variant).auc;
        row.degradation_pct = Real(100) * (row.noisy_auc - row.clean_auc) / row.clean_auc;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_stress_csv(std::span<const StressRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "variant,clean_auc,noisy_auc,degradation_pct\n" << std::setprecision(10);
    for (const auto& r : rows) {
        out << r.variant << ',' << r.clean_auc << ',' << r.noisy_auc << ',' << r.degradation_pct << '\n';
    }
}

}  // namespace ukt
