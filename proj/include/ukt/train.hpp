#pragma once

// Optimisation, metrics and the analysis experiments built on them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ukt/data.hpp"
#include "ukt/model.hpp"

namespace ukt {

struct TrainConfig {
    std::size_t max_epochs = 200;
    std::size_t patience = 10;  // epochs without validation-AUC improvement
    Real learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::uint64_t seed = 7;
    // Stop as soon as validation AUC reaches this value.
    std::optional<Real> target_auc;
};

struct EpochRecord {
    std::size_t epoch = 0;
    Real train_loss = 0;
    Real val_auc = 0;
    Real val_accuracy = 0;
};

struct EvalReport {
    Real auc = 0;
    Real accuracy = 0;
    std::size_t predictions = 0;
    std::vector<Real> loss_trace;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    // (sequence index in the evaluated set, mean of refined covariance over positions and dims)
    std::vector<std::pair<std::size_t, Real>> per_sequence_cov_mean;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, Real learning_rate, Real beta1 = 0.9, Real beta2 = 0.999,
         Real epsilon = 1e-8);

    void step();
    void zero_grad();
    std::size_t steps() const { return step_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<Real>> m_, v_;
    Real lr_, beta1_, beta2_, eps_;
    std::size_t step_ = 0;
};

// Probability that a random positive outranks a random negative; ties count
// one half. Throws EvaluationError when only one class is present.
Real auc(std::span<const Real> scores, std::span<const int> labels);
Real accuracy(std::span<const Real> scores, std::span<const int> labels, Real threshold = 0.5);

struct Predictions {
    std::vector<Real> probabilities;
    std::vector<int> labels;
    std::vector<std::pair<std::size_t, Real>> cov_means;
};

Predictions predict(const ModelParams& params, std::span<const StudentSequence> data,
                    const VariantConfig& variant);

EvalReport evaluate(const ModelParams& params, std::span<const StudentSequence> data,
                    const VariantConfig& variant, Real threshold = 0.5);

struct TrainResult {
    ModelParams params;  // best-validation checkpoint
    EvalReport report;   // validation metrics of that checkpoint plus traces
};

// Adam on total_loss with early stopping on validation AUC. Throws
// NumericError on a non-finite loss.
TrainResult train(std::span<const StudentSequence> train_set,
                  std::span<const StudentSequence> valid_set, const ModelConfig& model,
                  const TrainConfig& cfg, const VariantConfig& variant);

// Model config sized for a bundle (vocabulary sizes, max_len).
ModelConfig model_config_for(const DatasetBundle& bundle, std::size_t dim, std::size_t heads,
                             std::size_t blocks, std::size_t max_len = 200);

void write_metrics_csv(const EvalReport& report, const std::filesystem::path& path);

struct SweepRow {
    Real lambda = 0;
    Real mean_auc = 0;
    Real std_auc = 0;
    std::vector<Real> fold_aucs;
};

// One model per lambda and fold; AUC on the held-out test students.
std::vector<SweepRow> lambda_sweep(const DatasetBundle& bundle, const FoldPlan& plan,
                                   const ModelConfig& model, const TrainConfig& cfg,
                                   std::span<const Real> grid, std::size_t folds_used = 0);
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);

// Standard grid of contrastive weights.
std::vector<Real> default_lambda_grid();

enum class HeatmapLayout { PerDimension, ScalarMean };

// Rows = sequences; columns = mean refined covariance per feature dim, or one
// scalar mean per sequence.
std::vector<std::vector<Real>> covariance_heatmap(const ModelParams& params,
                                                  std::span<const StudentSequence> batch,
                                                  const VariantConfig& variant,
                                                  HeatmapLayout layout);
std::vector<std::vector<Real>> export_covariance_heatmap(const ModelParams& params,
                                                         std::span<const StudentSequence> batch,
                                                         const VariantConfig& variant,
                                                         const std::filesystem::path& path,
                                                         HeatmapLayout layout = HeatmapLayout::PerDimension);

struct AblationRow {
    std::string variant;
    Real auc = 0;
    Real accuracy = 0;
};

// Full model and the three single ablations, trained on one fold and scored on its test set.
std::vector<AblationRow> ablate(const FoldSplit& split, const ModelConfig& model,
                                const TrainConfig& cfg, Real lambda);
void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path);

// Copy of `data` with each response flipped independently with probability `rate`.
std::vector<StudentSequence> inject_noise(std::span<const StudentSequence> data, Real rate,
                                          std::uint64_t seed);

struct StressRow {
    std::string variant;
    Real clean_auc = 0;
    Real noisy_auc = 0;
    Real degradation_pct = 0;  // 100 * (noisy - clean) / clean, negative when AUC drops
};

struct TrainedVariant {
    ModelParams params;
    VariantConfig variant;
};

std::vector<StressRow> aleatory_stress_eval(const std::map<std::string, TrainedVariant>& models,
                                            std::span<const StudentSequence> clean, Real noise_rate,
                                            std::uint64_t seed);
void write_stress_csv(std::span<const StressRow> rows, const std::filesystem::path& path);

}  // namespace ukt
