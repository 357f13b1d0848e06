#include "vbs/model.hpp"

namespace vbs {

void ModelConfig::validate() const {
    encoder.validate();
    reassembly.validate(encoder);
    intrinsics.validate();
    grid.validate();
    partition.validate(grid);
    if (classes <= 0) throw ConfigError("model: class count must be positive");
    if (cam_height <= 0) throw ConfigError("model: camera height must be positive");
}

ModelConfig model_preset(const std::string& name) {
    ModelConfig cfg;
    cfg.preset = name;
    cfg.encoder = encoder_preset(name);
    cfg.reassembly = reassembly_preset(name);
    // 90 degree horizontal field of view at the preset image size.
    cfg.intrinsics.width = cfg.encoder.width;
    cfg.intrinsics.height = cfg.encoder.height;
    cfg.intrinsics.fx = cfg.intrinsics.fy = cfg.encoder.width / 2.0;
    cfg.intrinsics.cu = cfg.encoder.width / 2.0;
    cfg.intrinsics.cv = cfg.encoder.height / 2.0;
    cfg.partition = DepthPartition::geometric(cfg.grid);
    cfg.validate();
    return cfg;
}

void init_model_params(const ModelConfig& cfg, ParameterSet& params, SeededRng& rng) {
    cfg.validate();
    init_encoder_params(cfg.encoder, params, rng);
    init_reassembly_params(cfg.encoder, cfg.reassembly, params, rng);
    std::array<int, 5> widths{}, heights{};
    for (int i = 0; i < 5; ++i) {
        widths[i] = cfg.reassembly.level_extent(i, cfg.encoder.width);
        heights[i] = cfg.reassembly.level_extent(i, cfg.encoder.height);
    }
    init_decoder_params(cfg.reassembly.proj_dim, cfg.bottleneck_size(), widths, heights,
                        cfg.partition, cfg.grid, cfg.classes, params, rng);
}

BevGrid model_forward(const TensorPtr& image, const ModelConfig& cfg, const ParameterSet& params) {
    auto hooked = encode_with_hooks(image, cfg.encoder, params);
    std::vector<TensorPtr> levels;
    for (int i = 0; i < 5; ++i) {
        auto tokens = readout_project(hooked[i], params, "reassembly.level" + std::to_string(i));
        auto grid = tokens_to_grid(tokens, cfg.encoder.grid_h(), cfg.encoder.grid_w());
        levels.push_back(rescale_to_level(grid, i, cfg.encoder, cfg.reassembly, params));
    }
    auto fused = fuse_pyramid(levels);
    std::vector<TensorPtr> slices;
    for (int i = 0; i < 5; ++i) {
        auto polar = collapse_expand_polar(fused[i], i, cfg.partition, cfg.grid, params);
        const int interval = cfg.partition.interval_of_level(i);
        slices.push_back(polar_to_cartesian(polar, cfg.intrinsics, cfg.grid,
                                            cfg.partition.boundaries[interval],
                                            cfg.partition.boundaries[interval + 1]));
    }
    auto bev = assemble_bev(slices, cfg.partition, cfg.grid);
    return segmentation_head(bev, params, cfg.classes, cfg.grid);
}

std::vector<std::pair<std::string, Shape>> shape_trace(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, Shape>> trace;
    const auto& enc = cfg.encoder;
    const std::int64_t np = enc.tokens();
    const std::int64_t d = enc.embed_dim;
    const std::int64_t dh = cfg.reassembly.proj_dim;
    trace.emplace_back("input", Shape{enc.channels, enc.height, enc.width});
    trace.emplace_back("patch_tokens", Shape{np + 1, d});
    for (int i = 0; i < 5; ++i)
        trace.emplace_back("hook_block" + std::to_string(enc.hooks[i]), Shape{np + 1, d});
    for (int i = 0; i < 5; ++i) {
        const std::int64_t lh = cfg.reassembly.level_extent(i, enc.height);
        const std::int64_t lw = cfg.reassembly.level_extent(i, enc.width);
        trace.emplace_back("pyramid_level" + std::to_string(i), Shape{dh, lh, lw});
    }
    for (int i = 0; i < 5; ++i) {
        const std::int64_t zi = cfg.partition.bins(cfg.partition.interval_of_level(i), cfg.grid);
        const std::int64_t lw = cfg.reassembly.level_extent(i, enc.width);
        trace.emplace_back("polar_level" + std::to_string(i), Shape{dh, zi, lw});
        trace.emplace_back("cartesian_level" + std::to_string(i),
                           Shape{dh, zi, cfg.grid.lateral_bins()});
    }
    trace.emplace_back("bev_features",
                       Shape{dh, cfg.grid.depth_bins(), cfg.grid.lateral_bins()});
    trace.emplace_back("occupancy",
                       Shape{cfg.classes, cfg.grid.depth_bins(), cfg.grid.lateral_bins()});
    return trace;
}

}  // namespace vbs
