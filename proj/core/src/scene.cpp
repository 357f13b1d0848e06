#include "vbs/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace vbs {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<ClassInfo>& class_palette() {
    static const std::vector<ClassInfo> palette = {
        {"drivable", {0.24, 0.24, 0.28}, 0.0, 0, 0, 0, 0, 0, 0, false},
        {"walkway", {0.62, 0.62, 0.55}, 0.20, 1.5, 3.0, 4.0, 10.0, 0.05, 0.05, false},
        {"car", {0.85, 0.10, 0.10}, 0.35, 1.8, 2.2, 4.0, 5.0, 1.4, 1.8, true},
        {"truck", {0.10, 0.35, 0.85}, 0.15, 2.4, 2.9, 6.0, 9.0, 2.5, 3.5, true},
        {"pedestrian", {0.95, 0.80, 0.10}, 0.15, 0.4, 0.7, 0.4, 0.7, 1.5, 1.9, true},
        {"barrier", {0.75, 0.25, 0.75}, 0.15, 0.3, 0.6, 2.0, 4.0, 0.8, 1.2, true},
    };
    return palette;
}

std::vector<int> report_columns() {
    // drivable, walkway, car, truck, pedestrian, barrier onto the
    // Drivable, WW, Car, Truck, Ped, TB columns of the 14-class layout.
    return {0, 2, 4, 5, 9, 13};
}

std::vector<int> cityscapes_subset() {
    // Local classes whose report column carries the Cityscapes marker.
    return {0, 1, 2, 4};
}

Scene generate_scene(SeededRng& rng, const BevGridSpec& spec, const CameraIntrinsics& intr,
                     double cam_height, int id) {
    spec.validate();
    intr.validate();
    Scene scene;
    scene.intrinsics = intr;
    scene.cam_height = cam_height;
    scene.id = id;
    scene.seed = rng.raw();
    SeededRng local(scene.seed);

    const double tan_half = std::min(intr.cu, intr.width - intr.cu) / intr.fx;

    // Drivable surface: trapezoid widening from the near edge to z_max.
    const double near_w = local.uniform(1.5, 3.0);
    const double far_w = local.uniform(0.6 * spec.x_max, spec.x_max);
    scene.ground.cls = 0;
    scene.ground.pts = {{-near_w, spec.z_min},
                        {near_w, spec.z_min},
                        {far_w, spec.z_max},
                        {-far_w, spec.z_max}};

    const auto& palette = class_palette();
    const int count = static_cast<int>(local.uniform_int(3, 10));
    for (int b = 0; b < count; ++b) {
        double pick = local.uniform();
        int cls = 2;
        for (std::size_t k = 1; k < palette.size(); ++k) {
            if (pick < palette[k].rate) {
                cls = static_cast<int>(k);
                break;
            }
            pick -= palette[k].rate;
        }
        const ClassInfo& info = palette[static_cast<std::size_t>(cls)];
        Box3D box;
        box.cls = cls;
        box.w = local.uniform(info.w_lo, info.w_hi);
        box.l = local.uniform(info.l_lo, info.l_hi);
        box.h = local.uniform(info.h_lo, info.h_hi);
        const double diag = 0.5 * std::hypot(box.w, box.l);
        const double z_lo = spec.z_min + 1.0 + diag;
        box.z = local.uniform(z_lo, spec.z_max);
        const double x_lim = std::max(0.5, std::min(spec.x_max, box.z * tan_half) - diag - 0.2);
        box.x = local.uniform(-x_lim, x_lim);
        box.y = cam_height - box.h / 2.0;  // bottom face on the ground
        box.yaw = local.uniform(0.0, 6.283185307179586);
        scene.boxes.push_back(box);
    }
    return scene;
}

namespace {

bool point_in_polygon(double x, double z, const std::vector<std::array<double, 2>>& pts) {
    bool inside = false;
    const std::size_t n = pts.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = pts[i][0], zi = pts[i][1];
        const double xj = pts[j][0], zj = pts[j][1];
        if ((zi > z) != (zj > z) && x < (xj - xi) * (z - zi) / (zj - zi) + xi) inside = !inside;
    }
    return inside;
}

// Ground-plane corners of a box footprint, counter-clockwise.
std::array<std::array<double, 2>, 4> footprint(const Box3D& box) {
    const double cy = std::cos(box.yaw), sy = std::sin(box.yaw);
    const double hw = box.w / 2.0, hl = box.l / 2.0;
    std::array<std::array<double, 2>, 4> out{};
    const double dx[4] = {-hw, hw, hw, -hw};
    const double dz[4] = {-hl, -hl, hl, hl};
    for (int i = 0; i < 4; ++i) {
        out[i][0] = box.x + dx[i] * cy - dz[i] * sy;
        out[i][1] = box.z + dx[i] * sy + dz[i] * cy;
    }
    return out;
}

bool in_footprint(const Box3D& box, double x, double z) {
    const double cy = std::cos(box.yaw), sy = std::sin(box.yaw);
    const double rx = x - box.x, rz = z - box.z;
    const double lx = rx * cy + rz * sy;
    const double lz = -rx * sy + rz * cy;
    return std::fabs(lx) <= box.w / 2.0 && std::fabs(lz) <= box.l / 2.0;
}

struct Pt {
    double u, v;
};

// Andrew monotone chain.
std::vector<Pt> convex_hull(std::vector<Pt> pts) {
    std::sort(pts.begin(), pts.end(),
              [](const Pt& a, const Pt& b) { return a.u < b.u || (a.u == b.u && a.v < b.v); });
    auto cross = [](const Pt& o, const Pt& a, const Pt& b) {
        return (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u);
    };
    std::vector<Pt> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = pts.size() - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k > 1 ? k - 1 : k);
    return hull;
}

void fill_hull(std::vector<double>& img, int height, int width, const std::vector<Pt>& hull,
               const std::array<double, 3>& color) {
    if (hull.size() < 3) return;
    double vmin = hull[0].v, vmax = hull[0].v;
    for (const auto& p : hull) {
        vmin = std::min(vmin, p.v);
        vmax = std::max(vmax, p.v);
    }
    const int y0 = std::max(0, static_cast<int>(std::ceil(vmin)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(vmax)));
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int y = y0; y <= y1; ++y) {
        double umin = 1e18, umax = -1e18;
        const std::size_t n = hull.size();
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const Pt& a = hull[j];
            const Pt& b = hull[i];
            if ((a.v > y) == (b.v > y)) continue;
            const double u = a.u + (b.u - a.u) * (y - a.v) / (b.v - a.v);
            umin = std::min(umin, u);
            umax = std::max(umax, u);
        }
        if (umin > umax) continue;
        const int x0 = std::max(0, static_cast<int>(std::ceil(umin)));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(umax)));
        for (int x = x0; x <= x1; ++x)
            for (int c = 0; c < 3; ++c)
                img[c * plane + static_cast<std::size_t>(y) * width + x] = color[c];
    }
}

}  // namespace

TensorPtr render_front_view(const Scene& scene, int height, int width) {
    const CameraIntrinsics& intr = scene.intrinsics;
    const std::array<double, 3> sky = {0.53, 0.78, 0.92};
    const std::array<double, 3> offroad = {0.36, 0.31, 0.24};
    auto image = make_tensor({3, height, width});
    auto& img = image->values;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int y = 0; y < height; ++y) {
        const double v = static_cast<double>(y);
        for (int x = 0; x < width; ++x) {
            std::array<double, 3> color = sky;
            if (v > intr.cv) {
                const double z = intr.fy * scene.cam_height / (v - intr.cv);
                const double gx = (x - intr.cu) * z / intr.fx;
                color = point_in_polygon(gx, z, scene.ground.pts)
                            ? class_palette()[0].color
                            : offroad;
            }
            for (int c = 0; c < 3; ++c)
                img[c * plane + static_cast<std::size_t>(y) * width + x] = color[c];
        }
    }
    // far to near
    std::vector<const Box3D*> order;
    for (const auto& b : scene.boxes) order.push_back(&b);
    std::stable_sort(order.begin(), order.end(),
                     [](const Box3D* a, const Box3D* b) { return a->z > b->z; });
    for (const Box3D* box : order) {
        const auto fp = footprint(*box);
        std::vector<Pt> pts;
        for (const auto& corner : fp) {
            for (double y3 : {scene.cam_height, scene.cam_height - box->h}) {
                const double z = std::max(corner[1], 0.2);
                pts.push_back({intr.fx * corner[0] / z + intr.cu, intr.fy * y3 / z + intr.cv});
            }
        }
        fill_hull(img, height, width, convex_hull(std::move(pts)),
                  class_palette()[static_cast<std::size_t>(box->cls)].color);
    }
    return image;
}

BevLabel rasterize_bev(const Scene& scene, const BevGridSpec& spec) {
    const int classes = static_cast<int>(class_palette().size());
    const int zb = spec.depth_bins(), xb = spec.lateral_bins();
    BevLabel label;
    label.masks = make_tensor({classes, zb, xb});
    auto& m = label.masks->values;
    const std::size_t cell_count = static_cast<std::size_t>(zb) * xb;
    for (int zi = 0; zi < zb; ++zi)
        for (int xi = 0; xi < xb; ++xi) {
            const double z = spec.bin_z(zi);
            const double x = spec.bin_x(xi);
            const std::size_t at = static_cast<std::size_t>(zi) * xb + xi;
            if (point_in_polygon(x, z, scene.ground.pts))
                m[static_cast<std::size_t>(scene.ground.cls) * cell_count + at] = 1.0;
            for (const auto& box : scene.boxes)
                if (in_footprint(box, x, z))
                    m[static_cast<std::size_t>(box.cls) * cell_count + at] = 1.0;
        }
    return label;
}

TensorPtr visibility_mask(const Scene& scene, const BevGridSpec& spec) {
    const int zb = spec.depth_bins(), xb = spec.lateral_bins();
    auto mask = make_tensor({zb, xb});
    const auto& palette = class_palette();
    for (int zi = 0; zi < zb; ++zi)
        for (int xi = 0; xi < xb; ++xi) {
            const double cz = spec.bin_z(zi);
            const double cx = spec.bin_x(xi);
            const double dist = std::hypot(cx, cz);
            const double step = spec.cell / 2.0;
            bool occluded = false;
            for (double t = step; t < dist - spec.cell && !occluded; t += step) {
                const double sx = cx * t / dist;
                const double sz = cz * t / dist;
                for (const auto& box : scene.boxes) {
                    if (!palette[static_cast<std::size_t>(box.cls)].occludes) continue;
                    if (in_footprint(box, cx, cz)) continue;  // the cell's own box
                    if (in_footprint(box, sx, sz)) {
                        occluded = true;
                        break;
                    }
                }
            }
            mask->values[static_cast<std::size_t>(zi) * xb + xi] = occluded ? 1.0 : 0.0;
        }
    return mask;
}

std::string scene_to_json(const Scene& scene) {
    json j;
    j["version"] = "vbs-scene/1";
    j["id"] = scene.id;
    j["seed"] = scene.seed;
    j["intrinsics"] = {{"fx", scene.intrinsics.fx},       {"fy", scene.intrinsics.fy},
                       {"cu", scene.intrinsics.cu},       {"cv", scene.intrinsics.cv},
                       {"width", scene.intrinsics.width}, {"height", scene.intrinsics.height}};
    j["cam_height"] = scene.cam_height;
    j["boxes"] = json::array();
    for (const auto& b : scene.boxes)
        j["boxes"].push_back({{"cls", b.cls},
                              {"x", b.x},
                              {"y", b.y},
                              {"z", b.z},
                              {"w", b.w},
                              {"l", b.l},
                              {"h", b.h},
                              {"yaw", b.yaw}});
    j["ground"] = json::array();
    for (const auto& p : scene.ground.pts) j["ground"].push_back({p[0], p[1]});
    return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("scene parse error: ") + e.what());
    }
    try {
        if (!j.contains("version")) throw DataError("scene file missing schema version");
        if (j.at("version").get<std::string>() != "vbs-scene/1")
            throw DataError("unsupported scene schema version: " +
                            j.at("version").get<std::string>());
        Scene scene;
        scene.id = j.at("id").get<int>();
        scene.seed = j.at("seed").get<std::uint64_t>();
        const auto& intr = j.at("intrinsics");
        scene.intrinsics.fx = intr.at("fx").get<double>();
        scene.intrinsics.fy = intr.at("fy").get<double>();
        scene.intrinsics.cu = intr.at("cu").get<double>();
        scene.intrinsics.cv = intr.at("cv").get<double>();
        scene.intrinsics.width = intr.at("width").get<int>();
        scene.intrinsics.height = intr.at("height").get<int>();
        scene.cam_height = j.at("cam_height").get<double>();
        for (const auto& jb : j.at("boxes")) {
            Box3D b;
            b.cls = jb.at("cls").get<int>();
            b.x = jb.at("x").get<double>();
            b.y = jb.at("y").get<double>();
            b.z = jb.at("z").get<double>();
            b.w = jb.at("w").get<double>();
            b.l = jb.at("l").get<double>();
            b.h = jb.at("h").get<double>();
            b.yaw = jb.at("yaw").get<double>();
            if (b.cls < 0 || b.cls >= static_cast<int>(class_palette().size()))
                throw DataError("scene box class out of range: " + std::to_string(b.cls));
            scene.boxes.push_back(b);
        }
        scene.ground.cls = 0;
        for (const auto& jp : j.at("ground"))
            scene.ground.pts.push_back({jp.at(0).get<double>(), jp.at(1).get<double>()});
        return scene;
    } catch (const json::exception& e) {
        throw DataError(std::string("scene field error: ") + e.what());
    }
}

void save_scene(const Scene& scene, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << scene_to_json(scene) << "\n";
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scene file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return scene_from_json(buf.str());
}

void save_scene_set(const SceneSet& set, const std::string& dir) {
    if (set.splits.size() != set.scenes.size())
        throw ConfigError("save_scene_set: split list does not match scene list");
    fs::create_directories(fs::path(dir) / "scenes");
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw DataError("cannot write manifest in " + dir);
    for (std::size_t i = 0; i < set.scenes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04d.scene", set.scenes[i].id);
        save_scene(set.scenes[i], (fs::path(dir) / "scenes" / name).string());
        manifest << name << " " << set.splits[i] << "\n";
    }
}

SceneSet load_scene_set(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw DataError("missing manifest.txt in " + dir);
    SceneSet set;
    std::string name, split;
    while (manifest >> name >> split) {
        if (split != "train" && split != "val")
            throw DataError("manifest split must be train or val, got: " + split);
        set.scenes.push_back(load_scene((fs::path(dir) / "scenes" / name).string()));
        set.splits.push_back(split);
    }
    return set;
}

}  // namespace vbs
