// ukt: command-line driver for data preparation, training and the analysis experiments.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ukt/checks.hpp"
#include "ukt/config.hpp"
#include "ukt/errors.hpp"
#include "ukt/log.hpp"
#include "ukt/synth.hpp"
#include "ukt/train.hpp"

namespace fs = std::filesystem;
using namespace ukt;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Prepared {
    DatasetBundle bundle;
    ModelConfig model;
};

std::ofstream open_out(const RunConfig& cfg, const std::string& name) {
    std::ofstream out(fs::path(cfg.out) / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (fs::path(cfg.out) / name).string());
    return out;
}

void echo_config(const RunConfig& cfg) {
    fs::create_directories(cfg.out);
    open_out(cfg, "config.toml") << serialize_run_config(cfg);
}

DatasetBundle raw_bundle(const RunConfig& cfg) {
    if (cfg.data.dataset.empty()) {
        log_info("no dataset given; generating a synthetic cohort");
        return generate_students(cfg.synth);
    }
    const fs::path path = cfg.data.dataset;
    if (!fs::exists(path)) throw DataError("dataset not found: " + path.string());
    LogFormat format;
    if (cfg.data.format == "auto") {
        format = detect_log_format(path);
    } else if (auto f = parse_log_format(cfg.data.format)) {
        format = *f;
    } else {
        throw ConfigError("unknown format '" + cfg.data.format + "' (csv-flat, csv-grouped, auto)");
    }
    return parse_interaction_log(path, format);
}

Prepared prepare(const RunConfig& cfg) {
    Prepared p;
    const std::size_t max_len = std::min(cfg.data.max_len, cfg.model.max_len);
    p.bundle = preprocess_sequences(expand_by_kc(raw_bundle(cfg)), cfg.data.min_len, max_len);
    if (p.bundle.sequences.empty()) throw DataError("no sequences left after preprocessing");
    p.model = cfg.model;
    p.model.num_kcs = p.bundle.num_kcs;
    p.model.num_questions = p.bundle.num_questions;
    log_info("dataset: " + std::to_string(p.bundle.num_students()) + " sequences, " +
             std::to_string(p.bundle.num_interactions()) + " interactions");
    return p;
}

FoldPlan plan_for(const RunConfig& cfg, const DatasetBundle& bundle) {
    return split_folds(bundle, cfg.data.test_fraction, cfg.data.folds, cfg.train.seed);
}

FoldSplit split_for(const RunConfig& cfg, const DatasetBundle& bundle) {
    if (cfg.data.fold >= cfg.data.folds) throw ConfigError("data.fold must be below data.folds");
    return materialize_fold(bundle, plan_for(cfg, bundle), cfg.data.fold);
}

fs::path checkpoint_path(const RunConfig& cfg) {
    return cfg.checkpoint.empty() ? fs::path(cfg.out) / "checkpoint.txt" : fs::path(cfg.checkpoint);
}

ModelParams load_compatible(const RunConfig& cfg, const Prepared& p) {
    const fs::path path = checkpoint_path(cfg);
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    ModelParams params = load_checkpoint(path);
    if (p.bundle.num_kcs > params.config.num_kcs || p.bundle.num_questions > params.config.num_questions) {
        throw DataError("dataset vocabulary exceeds the checkpoint's embedding tables");
    }
    return params;
}

void print_report(const std::string& label, const EvalReport& r) {
    std::cout << label << " auc=" << r.auc << " accuracy=" << r.accuracy
              << " predictions=" << r.predictions << '\n';
}

void write_eval(const RunConfig& cfg, const EvalReport& r) {
    auto out = open_out(cfg, "eval.csv");
    out.precision(10);
    out << "auc,accuracy,predictions\n" << r.auc << ',' << r.accuracy << ',' << r.predictions << '\n';
}

int cmd_synth(const RunConfig& cfg) {
    const DatasetBundle bundle = generate_students(cfg.synth);
    write_csv_flat(bundle, fs::path(cfg.out) / "synth.csv");
    std::cout << "wrote " << bundle.num_interactions() << " interactions for "
              << bundle.num_students() << " students\n";
    return kOk;
}

int cmd_prepare(const RunConfig& cfg) {
    const Prepared p = prepare(cfg);
    write_csv_flat(p.bundle, fs::path(cfg.out) / "prepared.csv");
    const FoldPlan plan = plan_for(cfg, p.bundle);
    auto out = open_out(cfg, "folds.csv");
    const Vocab& ids = p.bundle.students;
    out << "student_id,split\n";
    for (std::size_t s : plan.test_students) out << ids.raw(s) << ",test\n";
    for (std::size_t f = 0; f < plan.folds.size(); ++f)
        for (std::size_t s : plan.folds[f]) out << ids.raw(s) << ",fold" << f << '\n';
    std::cout << "prepared " << p.bundle.num_students() << " sequences\n";
    return kOk;
}

int cmd_train(const RunConfig& cfg) {
    const Prepared p = prepare(cfg);
    const FoldSplit split = split_for(cfg, p.bundle);
    const VariantConfig variant = cfg.resolved_variant();
    const TrainResult result = train(split.train, split.valid, p.model, cfg.train, variant);
    save_checkpoint(result.params, fs::path(cfg.out) / "checkpoint.txt");
    write_metrics_csv(result.report, fs::path(cfg.out) / "metrics.csv");
    print_report("valid", result.report);
    const EvalReport test = evaluate(result.params, split.test, variant);
    write_eval(cfg, test);
    print_report("test", test);
    return kOk;
}

int cmd_eval(const RunConfig& cfg) {
    const Prepared p = prepare(cfg);
    const ModelParams params = load_compatible(cfg, p);
    const FoldSplit split = split_for(cfg, p.bundle);
    const EvalReport test = evaluate(params, split.test, cfg.resolved_variant());
    write_eval(cfg, test);
    print_report("test", test);
    return kOk;
}

int cmd_sweep(const RunConfig& cfg) {
    const Prepared p = prepare(cfg);
    const std::vector<Real> grid = default_lambda_grid();
    const auto rows = lambda_sweep(p.bundle, plan_for(cfg, p.bundle), p.model, cfg.train, grid,
                                   cfg.data.folds_used);
    write_sweep_csv(rows, fs::path(cfg.out) / "sweep.csv");
    for (const auto& r : rows) std::cout << "lambda=" << r.lambda << " auc=" << r.mean_auc << " std=" << r.std_auc << '\n';
    return kOk;
}

int cmd_heatmap(const RunConfig& cfg) {
    const Prepared p = prepare(cfg);
    const VariantConfig variant = cfg.resolved_variant();
    ModelParams params = ModelParams::zeros(p.model);
    if (!cfg.checkpoint.empty()) {
        params = load_compatible(cfg, p);
    } else {
        const FoldSplit split = split_for(cfg, p.bundle);
        params = train(split.train, split.valid, p.model, cfg.train, variant).params;
    }
    const auto matrix = export_covariance_heatmap(params, p.bundle.sequences, variant,
                                                  fs::path(cfg.out) / "heatmap.csv");
    export_covariance_heatmap(params, p.bundle.sequences, variant,
                              fs::path(cfg.out) / "heatmap_mean.csv", HeatmapLayout::ScalarMean);
    std::cout << "heatmap " << matrix.size() << " x " << (matrix.empty() ? 0 : matrix.front().size()) << '\n';
    return kOk;
}

int cmd_stress(const RunConfig& cfg) {
    const Prepared p = prepare(cfg);
    const FoldSplit split = split_for(cfg, p.bundle);
    std::map<std::string, TrainedVariant> models;
    for (const VariantConfig& v : {VariantConfig::full(cfg.lambda), VariantConfig::without_cl()}) {
        models.emplace(v.label(), TrainedVariant{train(split.train, split.valid, p.model, cfg.train, v).params, v});
    }
    const auto rows = aleatory_stress_eval(models, split.test, cfg.noise_rate, cfg.train.seed);
    write_stress_csv(rows, fs::path(cfg.out) / "stress.csv");
    for (const auto& r : rows) {
        std::cout << r.variant << " clean=" << r.clean_auc << " noisy=" << r.noisy_auc
                  << " degradation=" << r.degradation_pct << "%\n";
    }
    return kOk;
}

int cmd_gradcheck(const RunConfig& cfg) {
    const CheckReport report = end_to_end_gradcheck(cfg.train.seed, cfg.lambda);
    auto out = open_out(cfg, "gradcheck.csv");
    out.precision(6);
    out << "tensor,elements,max_rel_error,max_abs_error\n";
    for (const auto& e : report.entries)
        out << e.name << ',' << e.elements << ',' << e.max_rel_error << ',' << e.max_abs_error << '\n';
    std::cout << "max relative error " << report.max_rel_error << (report.passed ? " (pass)" : " (FAIL)") << '\n';
    return report.passed ? kOk : kNumeric;
}

int cmd_ablate(const RunConfig& cfg) {
    const Prepared p = prepare(cfg);
    const FoldSplit split = split_for(cfg, p.bundle);
    const auto rows = ablate(split, p.model, cfg.train, cfg.lambda);
    write_ablation_csv(rows, fs::path(cfg.out) / "ablation.csv");
    for (const auto& r : rows) std::cout << r.variant << " auc=" << r.auc << " accuracy=" << r.accuracy << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-aware knowledge tracing"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config_path;
    std::map<std::string, std::string> overrides;
    std::vector<std::pair<std::string, std::string>> flags = {
        {"--dataset", "data.dataset"},      {"--format", "data.format"},
        {"--out", "run.out"},               {"--checkpoint", "run.checkpoint"},
        {"--lambda", "variant.lambda"},     {"--variant", "variant.name"},
        {"--epochs", "train.max_epochs"},   {"--dim", "model.dim"},
        {"--heads", "model.heads"},         {"--blocks", "model.blocks"},
        {"--lr", "train.learning_rate"},    {"--dropout", "model.dropout"},
        {"--batch-size", "train.batch_size"}, {"--noise-rate", "run.noise_rate"},
    };
    std::map<std::string, std::string> flag_values;
    std::optional<std::string> seed;
    bool quiet_flag = false;

    app.add_option("--config", config_path, "Sectioned key = value config file");
    for (const auto& [flag, key] : flags) app.add_option(flag, flag_values[key], "Overrides " + key);
    app.add_option("--seed", seed, "Seed for training and synthetic data");
    app.add_flag("--quiet", quiet_flag, "Suppress progress output");

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"prepare-data", "Parse, expand and chunk a log; write folds"},
        {"synth", "Generate a synthetic cohort as csv-flat"},
        {"train", "Train one variant and save a checkpoint"},
        {"eval", "Evaluate a checkpoint on the test split"},
        {"sweep-lambda", "Train across the contrastive-weight grid"},
        {"heatmap", "Export per-sequence covariance means"},
        {"stress-eval", "Compare AUC on clean and response-flipped data"},
        {"gradcheck", "Finite-difference check of the full objective"},
        {"ablate", "Train the full model and its three ablations"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    RunConfig cfg;
    try {
        if (config_path) cfg = load_run_config(*config_path);
        for (const auto& [key, value] : flag_values)
            if (!value.empty()) set_config_value(cfg, key, value);
        if (seed) {
            set_config_value(cfg, "train.seed", *seed);
            set_config_value(cfg, "synth.seed", *seed);
        }
        if (quiet_flag) cfg.quiet = true;
        set_quiet(cfg.quiet);
        cfg.resolved_variant();
        echo_config(cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }

    const std::map<std::string, int (*)(const RunConfig&)> dispatch = {
        {"prepare-data", cmd_prepare}, {"synth", cmd_synth},     {"train", cmd_train},
        {"eval", cmd_eval},            {"sweep-lambda", cmd_sweep}, {"heatmap", cmd_heatmap},
        {"stress-eval", cmd_stress},   {"gradcheck", cmd_gradcheck}, {"ablate", cmd_ablate},
    };
    try {
        return dispatch.at(command)(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const LookupError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const EvaluationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    }
}
