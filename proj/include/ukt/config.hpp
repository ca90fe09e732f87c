#pragma once

// Run configuration: one merged view of training, model, variant, synthetic
// data and path settings, stored as sectioned `key = value` text.

#include <filesystem>
#include <string>

#include "ukt/model.hpp"
#include "ukt/synth.hpp"
#include "ukt/train.hpp"

namespace ukt {

struct DataConfig {
    std::string dataset;  // empty: generate synthetic data
    std::string format = "auto";
    double test_fraction = 0.2;
    std::size_t folds = 5;
    std::size_t fold = 0;
    std::size_t folds_used = 1;  // lambda sweep
    std::size_t min_len = 3;
    std::size_t max_len = 200;
};

struct RunConfig {
    TrainConfig train;
    ModelConfig model;
    std::string variant = "ukt";
    Real lambda = 0.1;
    SynthSpec synth;
    DataConfig data;
    std::string out = "ukt_out";
    std::string checkpoint;
    Real noise_rate = 0.2;
    bool quiet = false;

    VariantConfig resolved_variant() const;
};

// Sets `section.key` from its text form. Throws ConfigError on unknown keys or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Reads a config file over `base`. Throws ConfigError when the file is missing or malformed.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
RunConfig parse_run_config(const std::string& text, RunConfig base = {});

// Every key, grouped by section, in a form parse_run_config reads back exactly.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace ukt
