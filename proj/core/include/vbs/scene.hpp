#pragma once

#include <array>
#include <string>
#include <vector>

#include "vbs/bev.hpp"
#include "vbs/rng.hpp"

namespace vbs {

// Camera frame: x lateral (right), y vertical (down), z forward. Boxes rest
// on the ground plane y = camera_height.
struct Box3D {
    int cls = 0;
    double x = 0, y = 0, z = 0;  // center, meters
    double w = 0, l = 0, h = 0;  // width (x), length (z), height (y), meters
    double yaw = 0;              // about vertical, radians
};

struct GroundPolygon {
    int cls = 0;
    std::vector<std::array<double, 2>> pts;  // (x, z) vertices, counter-clockwise
};

struct Scene {
    CameraIntrinsics intrinsics;
    double cam_height = 1.5;
    std::vector<Box3D> boxes;
    GroundPolygon ground;  // drivable surface
    int id = 0;
    std::uint64_t seed = 0;
};

struct ClassInfo {
    std::string name;
    std::array<double, 3> color;  // render color, [0,1]
    double rate = 0.0;            // sampling probability among box classes
    double w_lo = 0, w_hi = 0, l_lo = 0, l_hi = 0, h_lo = 0, h_hi = 0;
    bool occludes = true;  // flat slabs do not block line of sight
};

// 0 drivable, 1 walkway, 2 car, 3 truck, 4 pedestrian, 5 barrier.
// Walkway appears as thin ground-level slabs; drivable is the ground polygon.
const std::vector<ClassInfo>& class_palette();
// Columns of the 14-class report layout each local class maps to.
std::vector<int> report_columns();
// Local class indices that enter the Cityscapes-subset mean.
std::vector<int> cityscapes_subset();

struct BevLabel {
    TensorPtr masks;  // [c x Z x X], binary
};

Scene generate_scene(SeededRng& rng, const BevGridSpec& spec, const CameraIntrinsics& intr,
                     double cam_height, int id);

// Painter's algorithm far-to-near; ground polygon first, then box hulls.
// Output RGB in [0,1].
TensorPtr render_front_view(const Scene& scene, int height, int width);

BevLabel rasterize_bev(const Scene& scene, const BevGridSpec& spec);

// [Z x X] mask, 1 where the line of sight to the cell passes through a
// nearer occluding box footprint.
TensorPtr visibility_mask(const Scene& scene, const BevGridSpec& spec);

// -- serialization -----------------------------------------------------------

struct SceneSet {
    std::vector<Scene> scenes;
    std::vector<std::string> splits;  // "train" or "val", parallel to scenes
};

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

// Directory layout: <dir>/scenes/NNNN.scene plus <dir>/manifest.txt with
// one "NNNN.scene <split>" line per scene.
void save_scene_set(const SceneSet& set, const std::string& dir);
SceneSet load_scene_set(const std::string& dir);

}  // namespace vbs
