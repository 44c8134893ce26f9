#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace robust_embed::cli {

// Missing input files and checkpoint/dataset mismatches (exit code 2).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void cmd_train(const RunConfig& cfg);
void cmd_eval_sts(const RunConfig& cfg);
void cmd_eval_transfer(const RunConfig& cfg);
void cmd_eval_metrics(const RunConfig& cfg, bool random_init);
void cmd_attack_classify(const RunConfig& cfg);
void cmd_attack_advsts(const RunConfig& cfg);
void cmd_plot(const RunConfig& cfg, const std::vector<std::filesystem::path>& reports,
              const std::vector<std::string>& labels);

}  // namespace robust_embed::cli
