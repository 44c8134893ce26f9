#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "robust_embed/encoder.hpp"
#include "robust_embed/objectives.hpp"
#include "robust_embed/perturbation.hpp"
#include "robust_embed/tokenizer.hpp"

namespace robust_embed {

struct TrainState {
    Vocabulary vocab;
    Encoder encoder;
    Discriminator discriminator;
    Matrix vocab_table;  // persistent token perturbation table V
    std::size_t epoch = 0;
    std::size_t step = 0;
};

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double l_con = 0.0;
    double l_reg = 0.0;
    double l_rtd = 0.0;
    double l_total = 0.0;
    double max_delta_norm = 0.0;
    double max_eta_norm = 0.0;
};

// Header and rows of the line-delimited metrics log.
std::string metrics_header();
std::string format_record(const StepRecord& r);

struct TrainOptions {
    HyperParams hp;
    EncoderConfig encoder;  // vocab_size is filled from the corpus vocabulary
    std::size_t discriminator_hidden = 0;  // 0: same as encoder dim
    double mask_rate = 0.15;
    std::uint64_t seed = 1234;
    bool reset_vocab_table_each_epoch = false;
    // Higher is better; evaluated after every epoch to select the returned state.
    std::function<double(const Encoder&, const Vocabulary&)> validation;
    std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
    TrainState state;
    std::vector<StepRecord> records;
    std::vector<double> epoch_mean_total;
    std::vector<double> validation_scores;
    std::size_t selected_epoch = 0;
};

class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Adversarial contrastive training over raw sentences. epsilon == 0 trains the
// plain dual-dropout contrastive baseline (the adversarial positive is
// dropped and no perturbation is generated). The returned weights are rounded
// to float32 so they equal what save_checkpoint writes.
TrainResult train(std::span<const std::string> corpus, const TrainOptions& options);

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir);

}  // namespace robust_embed
