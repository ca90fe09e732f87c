#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "ukt/checks.hpp"
#include "ukt/errors.hpp"
#include "ukt/log.hpp"
#include "ukt/synth.hpp"
#include "ukt/train.hpp"

using namespace ukt;

namespace {

Real brute_auc(const std::vector<Real>& s, const std::vector<int>& y) {
    Real wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1 : s[i] == s[j] ? Real(0.5) : 0;
            }
    return wins / pairs;
}

struct Prepared {
    DatasetBundle bundle;
    FoldSplit split;
};

Prepared prepare(const SynthSpec& spec, std::uint64_t seed) {
    Prepared p;
    p.bundle = preprocess_sequences(expand_by_kc(generate_students(spec)), 3, 200);
    p.split = materialize_fold(p.bundle, split_folds(p.bundle, 0.2, 5, seed), 0);
    return p;
}

SynthSpec small_spec(std::uint64_t seed) {
    SynthSpec s;
    s.cohorts = {Cohort{40, 0, 1}};
    s.num_kcs = 5;
    s.questions_per_kc = 3;
    s.min_len = 10;
    s.max_len = 20;
    s.sharpness = 2;
    s.seed = seed;
    return s;
}

TrainConfig quick_train(std::uint64_t seed, std::size_t epochs = 3) {
    TrainConfig c;
    c.max_epochs = epochs;
    c.patience = epochs;
    c.learning_rate = 5e-3;
    c.batch_size = 8;
    c.seed = seed;
    return c;
}

std::string path_in_tmp(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::size_t count_lines(const std::string& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

}  // namespace

TEST_CASE("auc hand examples") {
    const std::vector<Real> s{0.9, 0.1};
    const std::vector<int> y{1, 0};
    CHECK(auc(s, y) == 1.0);
    CHECK(auc(std::vector<Real>{0.1, 0.9}, y) == 0.0);
    CHECK(auc(std::vector<Real>{0.5, 0.5}, y) == 0.5);
    CHECK(auc(std::vector<Real>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 0, 1}) == 0.5);
    CHECK_THROWS_AS(auc(std::vector<Real>{0.2, 0.4}, std::vector<int>{1, 1}), EvaluationError);
    CHECK_THROWS_AS(auc(std::vector<Real>{}, std::vector<int>{}), EvaluationError);
}

TEST_CASE("auc matches pair counting and ignores monotone transforms") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> level(0, 9), bit(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Real> s(200);
        std::vector<int> y(200);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = level(rng) / Real(10);  // coarse levels force ties
            y[i] = bit(rng);
        }
        y[0] = 1;
        y[1] = 0;
        const Real a = auc(s, y);
        CHECK(a == doctest::Approx(brute_auc(s, y)).epsilon(1e-12));
        std::vector<Real> t(s.size());
        std::transform(s.begin(), s.end(), t.begin(), [](Real v) { return std::exp(3 * v) - 7; });
        CHECK(auc(t, y) == doctest::Approx(a).epsilon(1e-12));
        std::vector<Real> constant(s.size(), 0.4);
        CHECK(auc(constant, y) == 0.5);
    }
}

TEST_CASE("accuracy") {
    CHECK(accuracy(std::vector<Real>{0.9, 0.2, 0.6, 0.4}, std::vector<int>{1, 0, 0, 0}) == 0.75);
    CHECK(accuracy(std::vector<Real>{0.5}, std::vector<int>{1}) == 1.0);
}

TEST_CASE("adam with zero gradient keeps parameters") {
    Tensor w = Tensor::from(2, 2, {1, -2, 3, 0.5}, true);
    const std::vector<Real> before(w.data().begin(), w.data().end());
    Adam opt({w}, 0.1);
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = sum_all(scale(w, 0));
        tape.backward(loss);
    }
    opt.step();
    opt.step();
    CHECK(std::equal(before.begin(), before.end(), w.data().begin()));
    CHECK(opt.steps() == 2);
}

TEST_CASE("adam first step moves by the learning rate against the gradient") {
    Tensor w = Tensor::from(1, 3, {1, 1, 1}, true);
    Adam opt({w}, 0.01);
    {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(sum_all(mul(w, Tensor::from(1, 3, {2, -0.5, 0}))));
    }
    opt.step();
    CHECK(w.data()[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(w.data()[1] == doctest::Approx(1.01).epsilon(1e-9));
    CHECK(w.data()[2] == 1);
}

TEST_CASE("training is deterministic and honours early stopping") {
    set_quiet(true);
    const Prepared data = prepare(small_spec(3), 3);
    const ModelConfig model = model_config_for(data.bundle, 8, 2, 1);
    const TrainConfig cfg = quick_train(3, 6);
    const TrainResult a = train(data.split.train, data.split.valid, model, cfg, VariantConfig::full(0.1));
    const TrainResult b = train(data.split.train, data.split.valid, model, cfg, VariantConfig::full(0.1));
    REQUIRE(!a.report.loss_trace.empty());
    CHECK(a.report.loss_trace == b.report.loss_trace);

    Real best = 0;
    for (const auto& e : a.report.epochs) best = std::max(best, e.val_auc);
    CHECK(a.report.auc == doctest::Approx(best).epsilon(1e-12));
    CHECK(evaluate(a.params, data.split.valid, VariantConfig::full(0.1)).auc == doctest::Approx(best).epsilon(1e-12));

    const TrainResult c = train(data.split.train, data.split.valid, model, cfg, VariantConfig::full(0));
    CHECK(c.report.loss_trace != a.report.loss_trace);

    const std::string path = path_in_tmp("ukt_metrics.csv");
    write_metrics_csv(a.report, path);
    CHECK(count_lines(path) == a.report.epochs.size() + 1);
    set_quiet(false);
}

TEST_CASE("evaluation is order independent") {
    const Prepared data = prepare(small_spec(4), 4);
    const ModelParams params = ModelParams::init(model_config_for(data.bundle, 8, 2, 1), 4);
    std::vector<StudentSequence> reversed(data.split.test.rbegin(), data.split.test.rend());
    const EvalReport a = evaluate(params, data.split.test, VariantConfig::full(0.1));
    const EvalReport b = evaluate(params, reversed, VariantConfig::full(0.1));
    CHECK(a.auc == doctest::Approx(b.auc).epsilon(1e-12));
    CHECK(a.accuracy == doctest::Approx(b.accuracy).epsilon(1e-12));
    CHECK(a.predictions == b.predictions);
}

TEST_CASE("constant predictor scores one half") {
    const Prepared data = prepare(small_spec(5), 5);
    const ModelParams zero = ModelParams::zeros(model_config_for(data.bundle, 8, 2, 1));
    CHECK(evaluate(zero, data.split.test, VariantConfig::full(0.1)).auc == 0.5);
}

TEST_CASE("noise injection") {
    const Prepared data = prepare(small_spec(6), 6);
    const auto same = inject_noise(data.split.test, 0, 1);
    const auto flipped = inject_noise(data.split.test, 1, 1);
    for (std::size_t i = 0; i < same.size(); ++i)
        for (std::size_t t = 0; t < same[i].size(); ++t) {
            CHECK(same[i].interactions[t].response == data.split.test[i].interactions[t].response);
            CHECK(flipped[i].interactions[t].response == 1 - data.split.test[i].interactions[t].response);
        }
    CHECK_THROWS_AS(inject_noise(data.split.test, 1.5, 1), ConfigError);
}

TEST_CASE("stress evaluation endpoints") {
    const Prepared data = prepare(small_spec(7), 7);
    const ModelConfig model = model_config_for(data.bundle, 8, 2, 1);
    ModelParams params = ModelParams::init(model, 7);
    std::map<std::string, TrainedVariant> models;
    models.emplace("UKT", TrainedVariant{params.clone(), VariantConfig::full(0.1)});
    const auto zero = aleatory_stress_eval(models, data.split.test, 0, 1);
    REQUIRE(zero.size() == 1);
    CHECK(zero[0].degradation_pct == 0);
    CHECK(zero[0].noisy_auc == zero[0].clean_auc);

    // Responses carry no signal into this model, so a full flip only inverts the labels.
    auto rows = params.embedding.response_mean.mutable_data();
    std::copy(rows.begin(), rows.begin() + model.dim, rows.begin() + model.dim);
    auto cov_rows = params.embedding.response_cov.mutable_data();
    std::copy(cov_rows.begin(), cov_rows.begin() + model.dim, cov_rows.begin() + model.dim);
    std::map<std::string, TrainedVariant> blind;
    blind.emplace("UKT", TrainedVariant{params.clone(), VariantConfig::full(0.1)});
    const auto full = aleatory_stress_eval(blind, data.split.test, 1, 1);
    CHECK(full[0].noisy_auc == doctest::Approx(1 - full[0].clean_auc).epsilon(1e-12));

    const std::string path = path_in_tmp("ukt_stress.csv");
    write_stress_csv(full, path);
    CHECK(count_lines(path) == 2);
}

TEST_CASE("heatmap shape and zero-model constant") {
    const Prepared data = prepare(small_spec(8), 8);
    const ModelConfig model = model_config_for(data.bundle, 6, 2, 1);
    const ModelParams zero = ModelParams::zeros(model);
    const std::string path = path_in_tmp("ukt_heatmap.csv");
    const auto per_dim = export_covariance_heatmap(zero, data.split.test, VariantConfig::full(0.1), path);
    REQUIRE(per_dim.size() == data.split.test.size());
    for (const auto& row : per_dim) {
        CHECK(row.size() == 6);
        for (Real v : row) CHECK(v == 1.0);
    }
    CHECK(count_lines(path) == data.split.test.size() + 1);
    const auto scalar = covariance_heatmap(ModelParams::init(model, 8), data.split.test, VariantConfig::full(0.1),
                                           HeatmapLayout::ScalarMean);
    REQUIRE(scalar.size() == data.split.test.size());
    for (const auto& row : scalar) {
        CHECK(row.size() == 1);
        CHECK(row[0] > 0);
    }
}

// Welch statistic of the per-sequence covariance means between two cohorts that
// differ only in ability spread.
namespace {

Real cohort_separation(std::uint64_t seed) {
    SynthSpec spec = small_spec(seed);
    spec.cohorts = {Cohort{100, 0, 0.1}, Cohort{100, 0, 4}};
    spec.min_len = 20;
    spec.max_len = 60;
    spec.sharpness = 4;
    spec.kc_difficulty_std = 0.3;
    spec.learning_rate = 0;
    SynthTrace trace;
    DatasetBundle bundle = preprocess_sequences(expand_by_kc(generate_students(spec, &trace)), 3, 200);
    const ModelConfig model = model_config_for(bundle, 8, 2, 1);
    const TrainResult trained = train(bundle.sequences, bundle.sequences, model, quick_train(seed, 30),
                                      VariantConfig::full(0.1));
    const auto means = covariance_heatmap(trained.params, bundle.sequences, VariantConfig::full(0.1),
                                          HeatmapLayout::ScalarMean);
    std::vector<Real> group[2];
    for (std::size_t i = 0; i < bundle.sequences.size(); ++i) {
        const std::string& raw = bundle.students.raw(bundle.sequences[i].student_id);
        group[trace.cohort_of[std::stoul(raw.substr(1))]].push_back(means[i][0]);
    }
    auto mean_of = [](const std::vector<Real>& v) { return std::accumulate(v.begin(), v.end(), Real(0)) / v.size(); };
    auto variance = [&](const std::vector<Real>& v) {
        const Real m = mean_of(v);
        Real s = 0;
        for (Real x : v) s += (x - m) * (x - m);
        return s / (v.size() - 1);
    };
    const Real between = std::abs(mean_of(group[0]) - mean_of(group[1]));
    const Real within = std::sqrt(variance(group[0]) / group[0].size() + variance(group[1]) / group[1].size());
    return between / within;
}

}  // namespace

TEST_CASE("cohorts with different ability spread separate in covariance") {
    set_quiet(true);
    std::size_t separated = 0;
    for (std::uint64_t seed : {9, 11, 12, 13}) {
        const Real t = cohort_separation(seed);
        MESSAGE("seed " << seed << " separation " << t);
        separated += t > 3;
    }
    CHECK(separated >= 3);
    set_quiet(false);
}

TEST_CASE("lambda sweep emits one row per grid value") {
    set_quiet(true);
    const Prepared data = prepare(small_spec(10), 10);
    const FoldPlan plan = split_folds(data.bundle, 0.2, 3, 10);
    const std::vector<Real> grid{0, 0.1};
    const auto rows = lambda_sweep(data.bundle, plan, model_config_for(data.bundle, 6, 2, 1), quick_train(10, 2), grid, 2);
    REQUIRE(rows.size() == grid.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].lambda == grid[i]);
        CHECK(rows[i].fold_aucs.size() == 2);
    }
    const std::string path = path_in_tmp("ukt_sweep.csv");
    write_sweep_csv(rows, path);
    CHECK(count_lines(path) == grid.size() + 1);
    CHECK(default_lambda_grid() == std::vector<Real>{0.01, 0.02, 0.05, 0.07, 0.1, 0.5, 1});
    set_quiet(false);
}
