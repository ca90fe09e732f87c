#include "ukt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ukt/errors.hpp"

namespace ukt {

std::size_t SynthSpec::num_students() const {
    std::size_t n = 0;
    for (const auto& c : cohorts) n += c.students;
    return n;
}

void SynthSpec::validate() const {
    if (!(guess >= 0 && guess < 0.5)) throw ConfigError("synth: guess must lie in [0, 0.5)");
    if (!(slip >= 0 && slip < 0.5)) throw ConfigError("synth: slip must lie in [0, 0.5)");
    if (num_kcs == 0 || questions_per_kc == 0) throw ConfigError("synth: need at least one KC and question");
    if (min_len == 0 || min_len > max_len) throw ConfigError("synth: invalid sequence length range");
    if (mean_run_length < 1) throw ConfigError("synth: mean_run_length must be >= 1");
    for (const auto& c : cohorts)
        if (c.ability_std < 0) throw ConfigError("synth: negative ability std");
    if (learning_rate_std < 0 || kc_difficulty_std < 0 || question_difficulty_std < 0)
        throw ConfigError("synth: negative spread");
}

double observed_correct_prob(double p, double guess, double slip) {
    return p * (1 - slip) + (1 - p) * guess;
}

DatasetBundle generate_students(const SynthSpec& spec, SynthTrace* trace) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    DatasetBundle bundle;
    std::vector<double> kc_difficulty(spec.num_kcs);
    for (std::size_t k = 0; k < spec.num_kcs; ++k) {
        kc_difficulty[k] = spec.kc_difficulty_std * normal(rng);
        bundle.kcs.intern("k" + std::to_string(k));
    }
    const std::size_t num_questions = spec.num_kcs * spec.questions_per_kc;
    std::vector<double> question_difficulty(num_questions);
    for (std::size_t q = 0; q < num_questions; ++q) {
        question_difficulty[q] = spec.question_difficulty_std * normal(rng);
        bundle.questions.intern("q" + std::to_string(q));
    }
    bundle.num_kcs = bundle.kcs.size();
    bundle.num_questions = bundle.questions.size();

    std::uniform_int_distribution<std::size_t> length(spec.min_len, spec.max_len);
    std::uniform_int_distribution<std::size_t> pick_kc(0, spec.num_kcs - 1);
    std::uniform_int_distribution<std::size_t> pick_variant(0, spec.questions_per_kc - 1);
    const double stay = 1.0 - 1.0 / spec.mean_run_length;

    std::size_t student = 0;
    for (std::size_t c = 0; c < spec.cohorts.size(); ++c) {
        const Cohort& cohort = spec.cohorts[c];
        for (std::size_t s = 0; s < cohort.students; ++s, ++student) {
            const double ability = cohort.ability_mean + cohort.ability_std * normal(rng);
            const double gain = std::max(0.0, spec.learning_rate + spec.learning_rate_std * normal(rng));
            std::vector<double> mastery(spec.num_kcs);
            for (std::size_t k = 0; k < spec.num_kcs; ++k) mastery[k] = ability - kc_difficulty[k];

            StudentSequence seq;
            seq.student_id = bundle.students.intern("s" + std::to_string(student));
            const std::size_t len = length(rng);
            std::vector<double> probs;
            std::size_t kc = pick_kc(rng);
            for (std::size_t t = 0; t < len; ++t) {
                if (t > 0 && unit(rng) >= stay) kc = pick_kc(rng);
                const std::size_t q = kc * spec.questions_per_kc + pick_variant(rng);
                const double z = spec.sharpness * (mastery[kc] - question_difficulty[q]);
                const double p = 1.0 / (1.0 + std::exp(-z));
                const double observed = observed_correct_prob(p, spec.guess, spec.slip);

                Interaction it;
                it.question_id = q + 1;
                it.kc_ids = {kc + 1};
                it.response = unit(rng) < observed ? 1 : 0;
                it.time_index = t;
                it.timestamp = static_cast<std::int64_t>(t);
                seq.interactions.push_back(std::move(it));
                probs.push_back(p);
                mastery[kc] += gain;
            }
            bundle.sequences.push_back(std::move(seq));
            if (trace) {
                trace->mastery_prob.push_back(std::move(probs));
                trace->cohort_of.push_back(c);
            }
        }
    }
    return bundle;
}

}  // namespace ukt
