#include "ukt/checks.hpp"

#include <random>

namespace ukt {

std::vector<StudentSequence> toy_batch(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> kc(1, 3), question(1, 4);
    std::bernoulli_distribution correct(0.5);
    std::vector<StudentSequence> batch(2);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        batch[s].student_id = s + 1;
        for (std::size_t t = 0; t < 5; ++t) {
            Interaction it;
            it.question_id = question(rng);
            it.kc_ids = {kc(rng)};
            it.response = correct(rng) ? 1 : 0;
            it.time_index = t;
            batch[s].interactions.push_back(std::move(it));
        }
    }
    // Both predicted classes present and each sequence yields a distinct negative.
    batch[0].interactions[1].response = 1;
    batch[0].interactions[4].response = 1;
    batch[1].interactions[1].response = 1;
    batch[1].interactions[4].response = 0;
    return batch;
}

ModelParams toy_model(std::uint64_t seed, std::size_t dim, std::size_t heads) {
    ModelConfig config;
    config.num_kcs = 4;
    config.num_questions = 5;
    config.dim = dim;
    config.heads = heads;
    config.blocks = 1;
    config.max_len = 8;
    return ModelParams::init(config, seed);
}

CheckReport end_to_end_gradcheck(std::uint64_t seed, Real lambda, const GradCheckOptions& options) {
    const std::vector<StudentSequence> batch = toy_batch(seed);
    const ModelParams params = toy_model(seed);
    const VariantConfig variant = VariantConfig::full(lambda);
    return finite_diff_check([&] { return batch_loss(batch, params, variant).total; },
                             params.parameters(), options);
}

}  // namespace ukt
