#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vbs/config.hpp"
#include "vbs/metrics.hpp"
#include "vbs/model.hpp"
#include "vbs/scene.hpp"

namespace vbs {

// One scene rendered and rasterized once, reused across epochs.
struct Sample {
    TensorPtr image;       // [3 x H x W], normalized to [-1, 1]
    TensorPtr label;       // [c x Z x X] binary
    TensorPtr visibility;  // [Z x X], 1 = occluded
    int scene_id = 0;
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> val;
};

TensorPtr normalize_image(const TensorPtr& rgb);  // [0,1] -> [-1,1]
Sample prepare_sample(const Scene& scene, const ModelConfig& cfg);
Dataset load_dataset(const std::string& dir, const ModelConfig& cfg);

struct TrainResult {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int steps = 0;
    std::string loss_log;  // CSV, header "step,epoch,loss"
};

// Seeded-shuffle SGD loop; writes one checkpoint per epoch plus a final one
// under out_dir when it is non-empty. Aborts on non-finite loss.
TrainResult train_model(const RunConfig& run, const ModelConfig& cfg, ParameterSet& params,
                        const std::vector<Sample>& data,
                        const std::function<void(int, double)>& on_step = nullptr);

// Accumulates confusion counts over samples; use_gt swaps ground truth in as
// the prediction (debug path).
ConfusionAccumulator evaluate_model(const ModelConfig& cfg, const ParameterSet& params,
                                    const std::vector<Sample>& data, double threshold,
                                    bool use_gt = false);

// IPM heuristic baseline: project the image onto the ground plane and label
// each visible cell with the palette class closest in color.
TensorPtr ipm_nearest_class(const Scene& scene, const BevGridSpec& spec);

}  // namespace vbs
