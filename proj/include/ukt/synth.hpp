#pragma once

// Synthetic cohorts: per-student ability and learning rate drive latent KC
// mastery; guess and slip probabilities add response noise.

#include <cstdint>
#include <vector>

#include "ukt/data.hpp"

namespace ukt {

struct Cohort {
    std::size_t students = 0;
    double ability_mean = 0;
    double ability_std = 1;
};

struct SynthSpec {
    std::vector<Cohort> cohorts{Cohort{100, 0.0, 1.0}};
    std::size_t num_kcs = 20;
    std::size_t questions_per_kc = 5;
    std::size_t min_len = 30;
    std::size_t max_len = 60;
    double learning_rate = 0.1;      // mastery gain per exposure
    double learning_rate_std = 0;    // spread of the per-student gain
    double kc_difficulty_std = 1;
    double question_difficulty_std = 0.3;
    double sharpness = 1;            // slope of the mastery sigmoid
    double mean_run_length = 1;      // expected consecutive items on one KC
    double guess = 0;
    double slip = 0;
    std::uint64_t seed = 7;

    std::size_t num_students() const;
    // Throws ConfigError on invalid probabilities or sizes.
    void validate() const;
};

// Latent state kept alongside each generated response.
struct SynthTrace {
    std::vector<std::vector<double>> mastery_prob;  // per student, per interaction: p before noise
    std::vector<std::size_t> cohort_of;             // per student
};

// Bundle in the csv-flat schema: raw ids "s<n>", "q<n>", "k<n>", one KC per question.
DatasetBundle generate_students(const SynthSpec& spec, SynthTrace* trace = nullptr);

// Observed correct probability under the guess/slip model.
double observed_correct_prob(double p, double guess, double slip);

}  // namespace ukt
