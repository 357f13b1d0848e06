#pragma once

#include <array>
#include <string>
#include <vector>

#include "vbs/ops.hpp"
#include "vbs/params.hpp"

namespace vbs {

struct EncoderConfig {
    int channels = 3;
    int height = 384;
    int width = 384;
    int patch = 16;
    int embed_dim = 768;
    int blocks = 12;
    int heads = 12;
    double mlp_ratio = 4.0;
    std::array<int, 5> hooks{3, 5, 7, 9, 12};

    int grid_h() const { return height / patch; }
    int grid_w() const { return width / patch; }
    int tokens() const { return grid_h() * grid_w(); }  // patch tokens, class token extra
    void validate() const;
};

// Presets: "vit-b16", "vit-l16", "vit-desk".
EncoderConfig encoder_preset(const std::string& name);

void init_encoder_params(const EncoderConfig& cfg, ParameterSet& params, SeededRng& rng);

// Patch projection + positional embedding + class token; output (Np+1) x D
// with the class token in row 0 and patches in row-major patch order.
TensorPtr patch_embed(const TensorPtr& image, const EncoderConfig& cfg, const ParameterSet& params);

// Multi-head self-attention with output projection; prefix selects the
// parameter group, e.g. "encoder.block3.attn".
TensorPtr mhsa(const TensorPtr& tokens, const EncoderConfig& cfg, const ParameterSet& params,
               const std::string& prefix);

// Pre-norm residual block: t' = t + MHSA(LN(t)); out = t' + MLP(LN(t')).
TensorPtr transformer_block(const TensorPtr& tokens, const EncoderConfig& cfg,
                            const ParameterSet& params, const std::string& prefix);

// Runs all blocks, snapshotting the token sequence after each hook block.
std::vector<TensorPtr> encode_with_hooks(const TensorPtr& image, const EncoderConfig& cfg,
                                         const ParameterSet& params);

}  // namespace vbs
