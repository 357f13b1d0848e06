#include "vbs/bev.hpp"

#include <cmath>

namespace vbs {

void CameraIntrinsics::validate() const {
    if (fx <= 0 || fy <= 0) throw ConfigError("intrinsics: focal lengths must be positive");
    if (cu < 0 || cu >= width || cv < 0 || cv >= height)
        throw ConfigError("intrinsics: principal point outside image bounds");
}

namespace {
int exact_bins(double span, double cell, const char* what) {
    const double ratio = span / cell;
    const int bins = static_cast<int>(std::lround(ratio));
    if (bins <= 0 || std::fabs(ratio - bins) > 1e-9)
        throw ConfigError(std::string("grid spec: ") + what + " extent not an integral cell count");
    return bins;
}
}  // namespace

int BevGridSpec::depth_bins() const { return exact_bins(z_max - z_min, cell, "depth"); }
int BevGridSpec::lateral_bins() const { return exact_bins(2.0 * x_max, cell, "lateral"); }

void BevGridSpec::validate() const {
    if (z_min <= 0) throw ConfigError("grid spec: z_min must be positive");
    if (z_max <= z_min || x_max <= 0 || cell <= 0) throw ConfigError("grid spec: bad extents");
    depth_bins();
    lateral_bins();
}

DepthPartition DepthPartition::geometric(const BevGridSpec& spec) {
    DepthPartition part;
    part.boundaries = {spec.z_min,      spec.z_max / 16.0, spec.z_max / 8.0,
                       spec.z_max / 4.0, spec.z_max / 2.0,  spec.z_max};
    part.validate(spec);
    return part;
}

int DepthPartition::bins(int interval, const BevGridSpec& spec) const {
    return exact_bins(boundaries[interval + 1] - boundaries[interval], spec.cell, "interval");
}

void DepthPartition::validate(const BevGridSpec& spec) const {
    if (std::fabs(boundaries[0] - spec.z_min) > 1e-9 ||
        std::fabs(boundaries[5] - spec.z_max) > 1e-9)
        throw ConfigError("depth partition: intervals must cover [z_min, z_max]");
    int total = 0;
    for (int i = 0; i < 5; ++i) {
        if (boundaries[i + 1] <= boundaries[i])
            throw ConfigError("depth partition: boundaries must be ascending");
        total += bins(i, spec);
    }
    if (total != spec.depth_bins())
        throw ConfigError("depth partition: interval bins do not sum to the grid depth");
}

void init_decoder_params(int proj_dim, int bottleneck, const std::array<int, 5>& level_widths,
                         const std::array<int, 5>& level_heights, const DepthPartition& part,
                         const BevGridSpec& spec, int classes, ParameterSet& params,
                         SeededRng& rng) {
    (void)level_widths;
    for (int level = 0; level < 5; ++level) {
        const std::string p = "decoder.level" + std::to_string(level) + ".";
        const int h = level_heights[level];
        const int zi = part.bins(part.interval_of_level(level), spec);
        // Fan-in scaled: these layers have no layer norm after them, so a
        // fixed small stddev would collapse activation/gradient magnitude.
        params.add_trunc_normal(p + "collapse.weight", {bottleneck, proj_dim * h}, rng,
                                fan_in_std(proj_dim * h));
        params.add_trunc_normal(p + "expand.weight", {proj_dim * zi, bottleneck}, rng,
                                fan_in_std(bottleneck));
        params.add_constant(p + "expand.bias", {proj_dim * zi}, 0.0);
    }
    params.add_trunc_normal("head.conv1.weight", {proj_dim, proj_dim, 3, 3}, rng,
                            fan_in_std(9 * proj_dim));
    params.add_constant("head.conv1.bias", {proj_dim}, 0.0);
    params.add_trunc_normal("head.conv2.weight", {proj_dim, proj_dim, 3, 3}, rng,
                            fan_in_std(9 * proj_dim));
    params.add_constant("head.conv2.bias", {proj_dim}, 0.0);
    params.add_trunc_normal("head.classify.weight", {classes, proj_dim, 1, 1}, rng,
                            fan_in_std(proj_dim));
    // Occupancy is sparse: starting the class logits at a negative prior
    // keeps the initial probabilities near the label frequency, so early
    // steps refine spatial structure instead of fighting a uniform 0.5.
    params.add_constant("head.classify.bias", {classes}, -2.0);
}

TensorPtr collapse_expand_polar(const TensorPtr& feature, int level, const DepthPartition& part,
                                const BevGridSpec& spec, const ParameterSet& params) {
    const std::string p = "decoder.level" + std::to_string(level) + ".";
    const std::int64_t dh = feature->shape[0], h = feature->shape[1], w = feature->shape[2];
    const int zi = part.bins(part.interval_of_level(level), spec);
    // Columns share the collapse/expand weights: treat the map as a
    // (Dh*h) x w matrix of column vectors.
    auto columns = ops::reshape(feature, {dh * h, w});
    auto bottleneck = ops::matmul(params.at(p + "collapse.weight"), columns);
    auto expanded = ops::add_colvec(ops::matmul(params.at(p + "expand.weight"), bottleneck),
                                    params.at(p + "expand.bias"));
    return ops::reshape(expanded, {dh, zi, w});
}

TensorPtr polar_to_cartesian(const TensorPtr& polar, const CameraIntrinsics& intr,
                             const BevGridSpec& spec, double interval_lo, double interval_hi) {
    intr.validate();
    if (interval_lo < spec.z_min - 1e-9 || interval_hi > spec.z_max + 1e-9)
        throw ConfigError("polar_to_cartesian: interval outside grid depth range");
    const std::int64_t zi_bins = polar->shape[1];
    const std::int64_t w = polar->shape[2];
    const std::int64_t x_bins = spec.lateral_bins();
    auto coords = make_tensor({zi_bins, x_bins, 2});
    const double col_scale = static_cast<double>(w) / intr.width;
    for (std::int64_t zi = 0; zi < zi_bins; ++zi) {
        const double z = interval_lo + (zi + 0.5) * spec.cell;
        for (std::int64_t xi = 0; xi < x_bins; ++xi) {
            const double x = spec.bin_x(static_cast<int>(xi));
            const double u = intr.fx * x / z + intr.cu;
            double* c = coords->values.data() + (zi * x_bins + xi) * 2;
            if (u < 0.0 || u >= intr.width) {
                c[0] = c[1] = -1e9;  // outside the frustum, sample vanishes
            } else {
                c[0] = static_cast<double>(zi);
                c[1] = std::min(u * col_scale, static_cast<double>(w - 1));
            }
        }
    }
    return ops::resample_bilinear(polar, coords);
}

TensorPtr assemble_bev(const std::vector<TensorPtr>& slices, const DepthPartition& part,
                       const BevGridSpec& spec) {
    if (slices.size() != 5) throw ConfigError("assemble_bev: expected 5 slices");
    std::int64_t total = 0;
    std::vector<TensorPtr> by_depth(5);
    for (int level = 0; level < 5; ++level) {
        const int interval = part.interval_of_level(level);
        const int zi = part.bins(interval, spec);
        if (slices[level]->shape[1] != zi)
            throw ConfigError("assemble_bev: slice for level " + std::to_string(level) + " has " +
                              std::to_string(slices[level]->shape[1]) + " depth bins, expected " +
                              std::to_string(zi));
        if (slices[level]->shape[2] != slices[0]->shape[2])
            throw ConfigError("assemble_bev: lateral extents differ across slices");
        by_depth[interval] = slices[level];
        total += zi;
    }
    if (total != spec.depth_bins())
        throw ConfigError("assemble_bev: depth coverage gap or overlap");
    return ops::concat(by_depth, 1);
}

BevGrid segmentation_head(const TensorPtr& bev, const ParameterSet& params, int classes,
                          const BevGridSpec& spec) {
    auto x = ops::gelu(ops::conv2d(bev, params.at("head.conv1.weight"),
                                   params.at("head.conv1.bias"), 1, 1));
    x = ops::gelu(ops::conv2d(x, params.at("head.conv2.weight"), params.at("head.conv2.bias"), 1, 1));
    auto logits = ops::conv2d(x, params.at("head.classify.weight"), params.at("head.classify.bias"),
                              1, 0);
    BevGrid grid;
    grid.classes = classes;
    grid.probs = ops::sigmoid(logits);
    grid.spec = spec;
    return grid;
}

TensorPtr ipm_baseline(const TensorPtr& image, const CameraIntrinsics& intr,
                       const BevGridSpec& spec, double camera_height) {
    intr.validate();
    spec.validate();
    if (camera_height <= 0) throw ConfigError("ipm_baseline: camera height must be positive");
    const std::int64_t z_bins = spec.depth_bins(), x_bins = spec.lateral_bins();
    auto coords = make_tensor({z_bins, x_bins, 2});
    for (std::int64_t zi = 0; zi < z_bins; ++zi) {
        const double z = spec.bin_z(static_cast<int>(zi));
        const double v = intr.fy * camera_height / z + intr.cv;
        for (std::int64_t xi = 0; xi < x_bins; ++xi) {
            const double x = spec.bin_x(static_cast<int>(xi));
            const double u = intr.fx * x / z + intr.cu;
            double* c = coords->values.data() + (zi * x_bins + xi) * 2;
            if (u < 0.0 || u >= intr.width || v < 0.0 || v >= intr.height) {
                c[0] = c[1] = -1e9;
            } else {
                c[0] = std::min(v, static_cast<double>(intr.height - 1));
                c[1] = std::min(u, static_cast<double>(intr.width - 1));
            }
        }
    }
    return ops::resample_bilinear(image, coords);
}

}  // namespace vbs
