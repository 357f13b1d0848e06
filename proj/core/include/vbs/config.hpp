#pragma once

#include <map>
#include <string>

#include "vbs/loss.hpp"

namespace vbs {

// Run configuration; the documented defaults follow the training protocol
// (SGD, lr 0.05, weight decay 0.001, batch 4, 50 epochs).
struct RunConfig {
    std::string preset = "vit-desk";
    double lr = 0.05;
    double weight_decay = 0.001;
    double momentum = 0.0;
    double loss_scale = 1.0;  // multiplies the loss before backward; logs stay unscaled
    int batch = 4;
    int epochs = 50;
    int max_steps = 0;  // 0 = no cap
    std::uint64_t seed = 42;
    std::string data_dir;
    std::string out_dir = "run";
    double lambda = 0.0;
    double threshold = 0.5;
    bool entropy_bonus = false;
    bool frequency_weights = false;

    void validate() const;
    std::string echo() const;  // flat key=value dump
};

// Flat key=value text, '#' comments, unknown keys rejected.
RunConfig parse_config_file(const std::string& path, const RunConfig& base = {});
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace vbs
