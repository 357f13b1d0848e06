#include "vbs/reassembly.hpp"

#include <cmath>

namespace vbs {

int ReassemblyConfig::level_extent(int i, int image_extent) const {
    const double target = fractions[static_cast<std::size_t>(i)] * image_extent;
    const int rounded = static_cast<int>(std::lround(target));
    if (std::fabs(target - rounded) > 1e-9)
        throw ConfigError("reassembly: level " + std::to_string(i) +
                          " target extent is not integral");
    return rounded;
}

void ReassemblyConfig::validate(const EncoderConfig& enc) const {
    for (int i = 1; i < 5; ++i)
        if (fractions[i] >= fractions[i - 1])
            throw ConfigError("reassembly: fractions must be strictly decreasing");
    for (int i = 0; i < 5; ++i) {
        level_extent(i, enc.height);
        level_extent(i, enc.width);
    }
}

ReassemblyConfig reassembly_preset(const std::string& name) {
    ReassemblyConfig cfg;
    if (name == "vit-b16" || name == "vit-l16") {
        // defaults above
    } else if (name == "vit-desk") {
        cfg.fractions = {0.5, 0.25, 0.125, 0.0625, 0.03125};
        cfg.proj_dim = 32;
    } else {
        throw ConfigError("unknown reassembly preset: " + name);
    }
    return cfg;
}

namespace {

// log2 of the resolution ratio between level target and the patch grid;
// positive = upsample, negative = downsample.
int ratio_log2(int target, int grid) {
    if (target == grid) return 0;
    int big = target > grid ? target : grid;
    int small = target > grid ? grid : target;
    if (big % small != 0) throw ConfigError("reassembly: non power-of-two resolution ratio");
    const int ratio = big / small;
    if ((ratio & (ratio - 1)) != 0)
        throw ConfigError("reassembly: non power-of-two resolution ratio");
    int lg = 0;
    for (int r = ratio; r > 1; r >>= 1) ++lg;
    return target > grid ? lg : -lg;
}

}  // namespace

void init_reassembly_params(const EncoderConfig& enc, const ReassemblyConfig& cfg,
                            ParameterSet& params, SeededRng& rng) {
    cfg.validate(enc);
    const int d = enc.embed_dim;
    const int dh = cfg.proj_dim;
    // These layers sit outside the residual/layer-norm stream, so a fixed
    // 0.02 stddev would shrink activations (and gradients) at every layer;
    // scale by fan-in to keep signal magnitude roughly constant instead.
    for (int i = 0; i < 5; ++i) {
        const std::string p = "reassembly.level" + std::to_string(i) + ".";
        params.add_trunc_normal(p + "readout.weight", {2 * d, d}, rng, fan_in_std(2 * d));
        params.add_constant(p + "readout.bias", {d}, 0.0);
        params.add_trunc_normal(p + "proj.weight", {dh, d, 1, 1}, rng, fan_in_std(d));
        params.add_constant(p + "proj.bias", {dh}, 0.0);
        const int lg = ratio_log2(cfg.level_extent(i, enc.height), enc.grid_h());
        if (lg > 0) {
            const int s = 1 << lg;
            // stride = kernel, so each output pixel sees one tap per channel
            params.add_trunc_normal(p + "up.weight", {dh, dh, s, s}, rng, fan_in_std(dh));
            params.add_constant(p + "up.bias", {dh}, 0.0);
        } else if (lg < 0) {
            for (int s = 0; s < -lg; ++s) {
                params.add_trunc_normal(p + "down" + std::to_string(s) + ".weight", {dh, dh, 3, 3},
                                        rng, fan_in_std(9 * dh));
                params.add_constant(p + "down" + std::to_string(s) + ".bias", {dh}, 0.0);
            }
        }
    }
}

TensorPtr readout_project(const TensorPtr& tokens, const ParameterSet& params,
                          const std::string& prefix) {
    const std::int64_t np = tokens->shape[0] - 1;
    auto cls = ops::slice(tokens, 0, 0, 1);
    auto patches = ops::slice(tokens, 0, 1, np);
    auto widened = ops::concat({patches, ops::repeat_row(cls, np)}, 1);
    return ops::add_rowvec(ops::matmul(widened, params.at(prefix + ".readout.weight")),
                           params.at(prefix + ".readout.bias"));
}

TensorPtr tokens_to_grid(const TensorPtr& tokens, int grid_h, int grid_w) {
    if (tokens->shape.size() != 2 ||
        tokens->shape[0] != static_cast<std::int64_t>(grid_h) * grid_w)
        throw ConfigError("tokens_to_grid: token count " + shape_str(tokens->shape) +
                          " does not match grid " + std::to_string(grid_h) + "x" +
                          std::to_string(grid_w));
    const std::int64_t d = tokens->shape[1];
    return ops::reshape(ops::transpose2d(tokens), {d, grid_h, grid_w});
}

TensorPtr rescale_to_level(const TensorPtr& grid, int level, const EncoderConfig& enc,
                           const ReassemblyConfig& cfg, const ParameterSet& params) {
    const std::string p = "reassembly.level" + std::to_string(level) + ".";
    auto x = ops::conv2d(grid, params.at(p + "proj.weight"), params.at(p + "proj.bias"), 1, 0);
    const int lg = ratio_log2(cfg.level_extent(level, enc.height), enc.grid_h());
    if (lg > 0) {
        x = ops::conv_transpose2d(x, params.at(p + "up.weight"), params.at(p + "up.bias"),
                                  1 << lg);
    } else {
        for (int s = 0; s < -lg; ++s)
            x = ops::conv2d(x, params.at(p + "down" + std::to_string(s) + ".weight"),
                            params.at(p + "down" + std::to_string(s) + ".bias"), 2, 1);
    }
    return x;
}

TensorPtr upsample2(const TensorPtr& t) {
    const std::int64_t h = t->shape[1], w = t->shape[2];
    const std::int64_t oh = 2 * h, ow = 2 * w;
    auto coords = make_tensor({oh, ow, 2});
    const double sr = oh > 1 ? static_cast<double>(h - 1) / static_cast<double>(oh - 1) : 0.0;
    const double sc = ow > 1 ? static_cast<double>(w - 1) / static_cast<double>(ow - 1) : 0.0;
    for (std::int64_t r = 0; r < oh; ++r)
        for (std::int64_t c = 0; c < ow; ++c) {
            coords->values[(r * ow + c) * 2] = static_cast<double>(r) * sr;
            coords->values[(r * ow + c) * 2 + 1] = static_cast<double>(c) * sc;
        }
    return ops::resample_bilinear(t, coords);
}

std::vector<TensorPtr> fuse_pyramid(const std::vector<TensorPtr>& levels) {
    if (levels.size() != 5) throw ConfigError("fuse_pyramid: expected 5 levels");
    for (int i = 1; i < 5; ++i) {
        if (levels[i]->shape[0] != levels[0]->shape[0])
            throw ConfigError("fuse_pyramid: channel mismatch across levels");
        if (levels[i - 1]->shape[1] != 2 * levels[i]->shape[1] ||
            levels[i - 1]->shape[2] != 2 * levels[i]->shape[2])
            throw ConfigError("fuse_pyramid: consecutive levels must halve extents, got " +
                              shape_str(levels[i - 1]->shape) + " then " +
                              shape_str(levels[i]->shape));
    }
    std::vector<TensorPtr> fused(5);
    fused[4] = levels[4];
    for (int i = 3; i >= 0; --i) fused[i] = ops::add(levels[i], upsample2(fused[i + 1]));
    return fused;
}

}  // namespace vbs
