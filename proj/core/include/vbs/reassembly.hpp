#pragma once

#include <array>
#include <string>
#include <vector>

#include "vbs/encoder.hpp"

namespace vbs {

struct ReassemblyConfig {
    std::array<double, 5> fractions{0.25, 0.125, 0.0625, 0.03125, 0.015625};  // of input H, W
    int proj_dim = 256;

    // Target spatial extents of level i for a given image extent.
    int level_extent(int i, int image_extent) const;
    void validate(const EncoderConfig& enc) const;
};

ReassemblyConfig reassembly_preset(const std::string& name);

void init_reassembly_params(const EncoderConfig& enc, const ReassemblyConfig& cfg,
                            ParameterSet& params, SeededRng& rng);

// Class token concatenated onto every patch token, projected back to D; the
// class token row itself is dropped. Output [Np x D].
TensorPtr readout_project(const TensorPtr& tokens, const ParameterSet& params,
                          const std::string& prefix);

// Row-major unflatten of [Np x D] into [D x h x w].
TensorPtr tokens_to_grid(const TensorPtr& tokens, int grid_h, int grid_w);

// 1x1 channel projection D -> proj_dim, then transposed convolution for
// finer targets or a chain of strided 3x3 convolutions for coarser ones.
TensorPtr rescale_to_level(const TensorPtr& grid, int level, const EncoderConfig& enc,
                           const ReassemblyConfig& cfg, const ParameterSet& params);

// Top-down fusion, coarsest level passed through, finer levels get the
// bilinearly upsampled coarser sum added. Input/output finest first.
std::vector<TensorPtr> fuse_pyramid(const std::vector<TensorPtr>& levels);

// Fixed 2x bilinear upsampling (corner-aligned source coordinates).
TensorPtr upsample2(const TensorPtr& t);

}  // namespace vbs
