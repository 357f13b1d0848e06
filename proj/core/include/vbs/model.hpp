#pragma once

#include <string>
#include <vector>

#include "vbs/bev.hpp"
#include "vbs/encoder.hpp"
#include "vbs/reassembly.hpp"

namespace vbs {

struct ModelConfig {
    std::string preset = "vit-desk";
    EncoderConfig encoder;
    ReassemblyConfig reassembly;
    CameraIntrinsics intrinsics;
    BevGridSpec grid;
    DepthPartition partition;
    double cam_height = 1.5;
    int classes = 6;
    int bottleneck = 0;  // 0 selects 2 * proj_dim

    int bottleneck_size() const { return bottleneck > 0 ? bottleneck : 2 * reassembly.proj_dim; }
    void validate() const;
};

ModelConfig model_preset(const std::string& name);

void init_model_params(const ModelConfig& cfg, ParameterSet& params, SeededRng& rng);

// Full image -> BEV occupancy forward pass.
BevGrid model_forward(const TensorPtr& image, const ModelConfig& cfg, const ParameterSet& params);

// Stage-by-stage tensor shapes, computed without running the network.
std::vector<std::pair<std::string, Shape>> shape_trace(const ModelConfig& cfg);

}  // namespace vbs
