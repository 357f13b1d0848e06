#pragma once

#include <array>
#include <string>
#include <vector>

#include "vbs/ops.hpp"
#include "vbs/params.hpp"

namespace vbs {

struct CameraIntrinsics {
    double fx = 0, fy = 0;  // focal lengths, pixels
    double cu = 0, cv = 0;  // principal point, pixels
    int width = 0, height = 0;

    void validate() const;
};

struct BevGridSpec {
    double z_min = 1.0;
    double z_max = 40.0;
    double x_max = 20.0;
    double cell = 0.5;  // meters per cell

    int depth_bins() const;    // Z; row 0 is nearest depth
    int lateral_bins() const;  // X; column X/2 is straight ahead
    double bin_z(int zi) const { return z_min + (zi + 0.5) * cell; }
    double bin_x(int xi) const { return -x_max + (xi + 0.5) * cell; }
    void validate() const;
};

// Five contiguous depth intervals covering [z_min, z_max], nearest first.
// Feature level i (finest first) serves interval 4 - i: far depth gets the
// high-resolution features.
struct DepthPartition {
    std::array<double, 6> boundaries{};  // ascending, boundaries[0] == z_min

    static DepthPartition geometric(const BevGridSpec& spec);
    int bins(int interval, const BevGridSpec& spec) const;
    int interval_of_level(int level) const { return 4 - level; }
    void validate(const BevGridSpec& spec) const;
};

struct BevGrid {
    int classes = 0;
    TensorPtr probs;  // [c x Z x X], entries in [0,1]
    BevGridSpec spec;
};

void init_decoder_params(int proj_dim, int bottleneck, const std::array<int, 5>& level_widths,
                         const std::array<int, 5>& level_heights, const DepthPartition& part,
                         const BevGridSpec& spec, int classes, ParameterSet& params,
                         SeededRng& rng);

// Height collapse to the bottleneck and expansion to the level's depth bins,
// shared across columns. feature [Dh x h x w] -> [Dh x Z_i x w].
TensorPtr collapse_expand_polar(const TensorPtr& feature, int level, const DepthPartition& part,
                                const BevGridSpec& spec, const ParameterSet& params);

// Resamples a polar (depth bin x image column) slice onto the Cartesian
// lateral axis using the intrinsics; out-of-frustum cells are zero.
TensorPtr polar_to_cartesian(const TensorPtr& polar, const CameraIntrinsics& intr,
                             const BevGridSpec& spec, double interval_lo, double interval_hi);

// Concatenates the five depth slices (given finest-level first) into the
// full [Dh x Z x X] grid, nearest depth first.
TensorPtr assemble_bev(const std::vector<TensorPtr>& slices, const DepthPartition& part,
                       const BevGridSpec& spec);

// Two 3x3 conv + GELU stages and a 1x1 conv to class logits, logistic output.
BevGrid segmentation_head(const TensorPtr& bev, const ParameterSet& params, int classes,
                          const BevGridSpec& spec);

// Flat-ground homography baseline: samples the image at the ground-plane
// projection of every BEV cell.
TensorPtr ipm_baseline(const TensorPtr& image, const CameraIntrinsics& intr,
                       const BevGridSpec& spec, double camera_height);

}  // namespace vbs
