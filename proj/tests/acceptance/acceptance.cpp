// Acceptance suite: one pass/fail line per criterion, exit 0 only when all
// criteria hold. Invoke with the fixtures directory as the sole argument.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "vbs/checkpoint.hpp"
#include "vbs/gradcheck.hpp"
#include "vbs/loss.hpp"
#include "vbs/metrics.hpp"
#include "vbs/model.hpp"
#include "vbs/ppm.hpp"
#include "vbs/trainer.hpp"

using namespace vbs;
namespace o = vbs::ops;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
};

TensorPtr rand_tensor(const Shape& shape, SeededRng& rng, double lo = -1, double hi = 1) {
    auto t = make_tensor(shape);
    for (auto& v : t->values) v = rng.uniform(lo, hi);
    return t;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

double sample_ref(const TensorPtr& f, int ch, double r, double c) {
    const std::int64_t h = f->shape[1], w = f->shape[2];
    const int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(c));
    double acc = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const int rr = r0 + a, cc = c0 + b;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            acc += (a ? r - r0 : 1 - r + r0) * (b ? c - c0 : 1 - c + c0) *
                   f->values[(ch * h + rr) * w + cc];
        }
    return acc;
}

bool rect_contains(const Box3D& box, double x, double z) {
    const double cy = std::cos(box.yaw), sy = std::sin(box.yaw);
    const double rx = x - box.x, rz = z - box.z;
    const double lx = rx * cy + rz * sy;
    const double lz = -rx * sy + rz * cy;
    return std::fabs(lx) <= box.w / 2.0 && std::fabs(lz) <= box.l / 2.0;
}

// ---------------------------------------------------------------------------

Criterion check_a1() {
    Criterion c{"A1 gradient suite"};
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    bool ok = true;
    std::string bad_op;
    for (std::uint64_t seed : {11ull, 12ull}) {
        for (const auto& r : run_gradcheck_suite(seed)) {
            worst = std::max(worst, r.max_rel_err);
            if (!r.pass) {
                ok = false;
                bad_op = r.op;
            }
        }
    }

    // end-to-end image -> BEV loss path on the desk preset, spot-checking a
    // random selection of parameter and input elements
    auto cfg = model_preset("vit-desk");
    SeededRng rng(7);
    ParameterSet params;
    init_model_params(cfg, params, rng);
    auto image = rand_tensor({3, 128, 128}, rng);
    image->requires_grad = true;
    auto gt = make_tensor({6, 78, 80});
    for (auto& v : gt->values) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
    LossConfig loss_cfg;
    loss_cfg.lambda = 0.1;
    auto loss_fn = [&] {
        auto grid = model_forward(image, cfg, params);
        return bev_loss(grid.probs, gt, loss_cfg);
    };

    auto l0 = loss_fn();
    backward(l0);
    std::vector<std::pair<TensorPtr, std::size_t>> probes;
    std::vector<TensorPtr> pool;
    for (const auto& [name, t] : params) pool.push_back(t);
    for (int i = 0; i < 8; ++i) {
        auto t = pool[static_cast<std::size_t>(rng.uniform_int(0, pool.size() - 1))];
        probes.push_back({t, static_cast<std::size_t>(rng.uniform_int(0, t->values.size() - 1))});
    }
    for (int i = 0; i < 4; ++i)
        probes.push_back(
            {image, static_cast<std::size_t>(rng.uniform_int(0, image->values.size() - 1))});

    const double h = 1e-5;
    for (const auto& [t, idx] : probes) {
        const double analytic = t->grad[idx];
        const double keep = t->values[idx];
        t->values[idx] = keep + h;
        const double up = loss_fn()->values[0];
        t->values[idx] = keep - h;
        const double dn = loss_fn()->values[0];
        t->values[idx] = keep;
        const double numeric = (up - dn) / (2 * h);
        const double err = std::fabs(analytic - numeric) /
                           std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
        worst = std::max(worst, err);
        if (err >= 1e-4) ok = false;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 300.0) ok = false;
    std::ostringstream os;
    os << "max rel err " << worst << ", " << secs << " s";
    if (!bad_op.empty()) os << ", failed op " << bad_op;
    c.pass = ok;
    c.detail = os.str();
    return c;
}

Criterion check_a2() {
    Criterion c{"A2 shape fidelity"};
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::ostringstream os;
    struct Expect {
        const char* preset;
        std::int64_t d;
        std::array<int, 5> hooks;
        std::array<std::int64_t, 5> extents;
    };
    const Expect cases[] = {
        {"vit-b16", 768, {3, 5, 7, 9, 12}, {96, 48, 24, 12, 6}},
        {"vit-l16", 1024, {5, 10, 15, 20, 24}, {96, 48, 24, 12, 6}},
    };
    for (const auto& e : cases) {
        auto cfg = model_preset(e.preset);
        if (cfg.encoder.hooks != e.hooks) ok = false;
        int hooks_seen = 0, levels_seen = 0;
        for (const auto& [stage, shape] : shape_trace(cfg)) {
            if (stage.rfind("hook_block", 0) == 0) {
                if (shape != Shape{577, e.d}) ok = false;
                ++hooks_seen;
            }
            if (stage.rfind("pyramid_level", 0) == 0) {
                const int i = stage.back() - '0';
                if (shape != Shape{256, e.extents[i], e.extents[i]}) ok = false;
                ++levels_seen;
            }
            if (stage == "patch_tokens" && shape != Shape{577, e.d}) ok = false;
            if (stage == "occupancy" && shape != Shape{6, 78, 80}) ok = false;
        }
        if (hooks_seen != 5 || levels_seen != 5) ok = false;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 120.0) ok = false;
    os << "vit-b16 and vit-l16 traces, " << secs << " s";
    c.pass = ok;
    c.detail = os.str();
    return c;
}

Criterion check_a3() {
    Criterion c{"A3 geometric oracles"};
    bool ok = true;
    SeededRng rng(23);
    int configs = 0;

    for (int trial = 0; trial < 20; ++trial, ++configs) {
        CameraIntrinsics intr;
        intr.width = 64 + 8 * static_cast<int>(rng.uniform_int(0, 8));
        intr.height = intr.width;
        intr.fx = rng.uniform(0.4, 1.2) * intr.width;
        intr.fy = rng.uniform(0.4, 1.2) * intr.height;
        intr.cu = rng.uniform(0.3, 0.7) * intr.width;
        intr.cv = rng.uniform(0.3, 0.7) * intr.height;
        BevGridSpec spec;
        const double cam_h = rng.uniform(1.0, 2.0);

        // polar slice resampling
        const double lo = rng.uniform(1.0, 10.0);
        const double hi = lo + 0.5 * static_cast<double>(rng.uniform_int(4, 20));
        const int zi_bins = static_cast<int>((hi - lo) / spec.cell + 0.5);
        const int w = static_cast<int>(rng.uniform_int(6, 24));
        auto polar = rand_tensor({2, zi_bins, w}, rng);
        auto cart = polar_to_cartesian(polar, intr, spec, lo, hi);
        for (int zi = 0; zi < zi_bins && ok; ++zi) {
            const double z = lo + (zi + 0.5) * spec.cell;
            for (int xi = 0; xi < spec.lateral_bins() && ok; ++xi) {
                const double u = intr.fx * spec.bin_x(xi) / z + intr.cu;
                for (int ch = 0; ch < 2; ++ch) {
                    const double got =
                        cart->values[(ch * zi_bins + zi) * spec.lateral_bins() + xi];
                    double ref = 0.0;
                    if (u >= 0.0 && u < intr.width)
                        ref = sample_ref(polar, ch,
                                         static_cast<double>(zi),
                                         std::min(u * w / intr.width,
                                                  static_cast<double>(w - 1)));
                    if (std::fabs(got - ref) >= 1e-12) ok = false;
                }
            }
        }

        // flat-ground homography
        auto image = rand_tensor({3, intr.height, intr.width}, rng);
        auto ipm = ipm_baseline(image, intr, spec, cam_h);
        for (int zi = 0; zi < spec.depth_bins() && ok; ++zi) {
            const double z = spec.bin_z(zi);
            const double v = intr.fy * cam_h / z + intr.cv;
            for (int xi = 0; xi < spec.lateral_bins() && ok; ++xi) {
                const double u = intr.fx * spec.bin_x(xi) / z + intr.cu;
                double ref = 0.0;
                if (u >= 0 && u < intr.width && v >= 0 && v < intr.height)
                    ref = sample_ref(image, 0, std::min(v, intr.height - 1.0),
                                     std::min(u, intr.width - 1.0));
                const double got = ipm->values[zi * spec.lateral_bins() + xi];
                if (std::fabs(got - ref) >= 1e-12) ok = false;
            }
        }

        // label rasterization
        auto scene = generate_scene(rng, spec, intr, cam_h, trial);
        auto label = rasterize_bev(scene, spec);
        const int zb = spec.depth_bins(), xb = spec.lateral_bins();
        for (int cls = 1; cls <= 5 && ok; ++cls)
            for (int zi = 0; zi < zb && ok; ++zi)
                for (int xi = 0; xi < xb; ++xi) {
                    bool expect = false;
                    for (const auto& box : scene.boxes)
                        if (box.cls == cls && rect_contains(box, spec.bin_x(xi), spec.bin_z(zi)))
                            expect = true;
                    if ((label.masks->values[(cls * zb + zi) * xb + xi] != 0.0) != expect) {
                        ok = false;
                        break;
                    }
                }

        // raw sampler
        auto f = rand_tensor({2, 9, 9}, rng);
        auto coords = make_tensor({6, 5, 2});
        for (auto& v : coords->values) v = rng.uniform(-3.0, 12.0);
        auto out = o::resample_bilinear(f, coords);
        for (int ch = 0; ch < 2 && ok; ++ch)
            for (int i = 0; i < 30; ++i) {
                const double ref =
                    sample_ref(f, ch, coords->values[i * 2], coords->values[i * 2 + 1]);
                if (std::fabs(out->values[ch * 30 + i] - ref) >= 1e-12) {
                    ok = false;
                    break;
                }
            }
    }
    c.pass = ok;
    c.detail = std::to_string(configs) + " random configurations";
    return c;
}

Criterion check_a4() {
    Criterion c{"A4 loss/metric oracles"};
    bool ok = true;
    SeededRng rng(29);

    // lambda 0, w 0.5 reduces to half the class-summed BCE averaged over cells
    {
        auto probs = rand_tensor({3, 6, 7}, rng, 0.05, 0.95);
        auto gt = make_tensor({3, 6, 7});
        for (auto& v : gt->values) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        LossConfig cfg;
        double bce = 0;
        for (std::size_t i = 0; i < probs->values.size(); ++i) {
            const double p = probs->values[i], y = gt->values[i];
            bce += -(y * std::log(p) + (1 - y) * std::log(1 - p));
        }
        bce /= 42.0;  // cells in the 6x7 map; the class dimension stays summed
        if (std::fabs(bev_loss(probs, gt, cfg)->values[0] - 0.5 * bce) >= 1e-12) ok = false;
    }

    // scalar-loop reference across modes, weights, and visibility masks
    for (int trial = 0; trial < 8; ++trial) {
        auto probs = rand_tensor({4, 5, 6}, rng, 0.01, 0.99);
        auto gt = make_tensor({4, 5, 6});
        for (auto& v : gt->values) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
        auto vis = make_tensor({5, 6});
        for (auto& v : vis->values) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
        LossConfig cfg;
        cfg.class_weights = {0.6, 0.9, 0.5, 0.75};
        cfg.lambda = (trial % 2) ? 0.3 : 1.2;
        cfg.mode = (trial % 4 < 2) ? UncertaintyMode::kPrinted : UncertaintyMode::kEntropyBonus;

        const std::int64_t cc = 4, plane = 30;
        double total = 0.0;
        for (std::int64_t k = 0; k < cc; ++k)
            for (std::int64_t i = 0; i < plane; ++i) {
                const double praw = probs->values[k * plane + i];
                const double p = std::min(std::max(praw, cfg.eps), 1.0 - cfg.eps);
                const double y = gt->values[k * plane + i];
                const double w = cfg.class_weights[static_cast<std::size_t>(k)];
                total += -(w * y * std::log(p) + (1 - w) * (1 - y) * std::log(1 - p));
                if (vis->values[i] != 0.0) {
                    if (cfg.mode == UncertaintyMode::kPrinted)
                        total += cfg.lambda * (1.0 - p * std::log2(p));
                    else
                        total += cfg.lambda *
                                 (1.0 + p * std::log2(p) + (1 - p) * std::log2(1 - p));
                }
            }
        total /= static_cast<double>(plane);
        if (std::fabs(bev_loss(probs, gt, cfg, vis)->values[0] - total) >= 1e-12) ok = false;
    }

    // counting oracle for the IoU scores
    {
        auto probs = rand_tensor({3, 10, 10}, rng, 0.0, 1.0);
        auto gt = make_tensor({3, 10, 10});
        for (auto& v : gt->values) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        ConfusionAccumulator acc(3);
        confusion_update(acc, probs, gt, 0.5);
        auto report = iou_scores(acc, {0, 1});
        for (int k = 0; k < 3; ++k) {
            std::int64_t inter = 0, uni = 0;
            for (int i = 0; i < 100; ++i) {
                const bool pred = probs->values[k * 100 + i] >= 0.5;
                const bool truth = gt->values[k * 100 + i] != 0.0;
                inter += pred && truth;
                uni += pred || truth;
            }
            if (acc.intersection[static_cast<std::size_t>(k)] != inter ||
                acc.set_union[static_cast<std::size_t>(k)] != uni)
                ok = false;
            if (uni > 0 &&
                *report.per_class[static_cast<std::size_t>(k)] !=
                    static_cast<double>(inter) / static_cast<double>(uni))
                ok = false;
        }
    }

    // gradient sign sweep
    for (double p0 = 0.05; p0 < 0.99; p0 += 0.05)
        for (double y : {0.0, 1.0}) {
            auto probs = make_tensor({1, 1, 1}, {p0}, true);
            auto gt = make_tensor({1, 1, 1}, {y});
            LossConfig cfg;
            backward(bev_loss(probs, gt, cfg));
            if (y == 1.0 && probs->grad[0] >= 0.0) ok = false;
            if (y == 0.0 && probs->grad[0] <= 0.0) ok = false;
        }

    c.pass = ok;
    c.detail = "loss and metric references within tolerance";
    return c;
}

struct TrainedState {
    ModelConfig cfg;
    ParameterSet params;
    ParameterSet untrained;
    std::vector<Sample> train_samples;
    std::vector<Scene> train_scenes;
    bool trained = false;
};

Criterion check_a5(TrainedState& state) {
    Criterion c{"A5 desk overfit"};
    const auto t0 = std::chrono::steady_clock::now();
    state.cfg = model_preset("vit-desk");
    SeededRng init_rng(42);
    init_model_params(state.cfg, state.params, init_rng);
    SeededRng copy_rng(42);
    init_model_params(state.cfg, state.untrained, copy_rng);

    SeededRng scene_rng(42);
    for (int i = 0; i < 8; ++i) {
        state.train_scenes.push_back(generate_scene(scene_rng, state.cfg.grid,
                                                    state.cfg.intrinsics, state.cfg.cam_height, i));
        state.train_samples.push_back(prepare_sample(state.train_scenes.back(), state.cfg));
    }

    RunConfig run;
    run.lr = 0.05;
    run.weight_decay = 0.001;
    run.momentum = 0.9;
    run.loss_scale = 2.0;
    run.batch = 3;
    run.epochs = 1000;
    run.max_steps = 500;
    run.seed = 42;
    run.frequency_weights = true;
    run.out_dir.clear();
    auto result = train_model(run, state.cfg, state.params, state.train_samples);
    state.trained = true;

    auto acc = evaluate_model(state.cfg, state.params, state.train_samples, 0.5);
    auto report = iou_scores(acc, cityscapes_subset());
    const double drivable = report.per_class[0] ? *report.per_class[0] : 0.0;
    double best_dynamic = 0.0;
    for (int cls : {2, 3, 4})
        if (report.per_class[static_cast<std::size_t>(cls)])
            best_dynamic =
                std::max(best_dynamic, *report.per_class[static_cast<std::size_t>(cls)]);

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = result.steps == 500;
    if (!(result.final_loss <= 0.1 * result.initial_loss)) ok = false;
    if (!(drivable >= 0.80)) ok = false;
    if (!(best_dynamic >= 0.50)) ok = false;
    if (secs >= 900.0) ok = false;
    std::ostringstream os;
    os << "loss " << result.initial_loss << " -> " << result.final_loss << ", drivable IoU "
       << drivable << ", best dynamic IoU " << best_dynamic << ", " << secs << " s";
    c.pass = ok;
    c.detail = os.str();
    return c;
}

Criterion check_a6(TrainedState& state) {
    Criterion c{"A6 baseline ordering"};
    if (!state.trained) {
        c.detail = "skipped: training state unavailable";
        return c;
    }
    SeededRng scene_rng(4242);
    std::vector<Scene> scenes;
    std::vector<Sample> samples;
    for (int i = 0; i < 64; ++i) {
        scenes.push_back(generate_scene(scene_rng, state.cfg.grid, state.cfg.intrinsics,
                                        state.cfg.cam_height, 1000 + i));
        samples.push_back(prepare_sample(scenes.back(), state.cfg));
    }

    auto mean_of = [&](const ConfusionAccumulator& acc) {
        auto report = iou_scores(acc, cityscapes_subset());
        return report.mean ? *report.mean : 0.0;
    };
    const double trained = mean_of(evaluate_model(state.cfg, state.params, samples, 0.5));
    const double untrained = mean_of(evaluate_model(state.cfg, state.untrained, samples, 0.5));

    ConfusionAccumulator ipm_acc(state.cfg.classes);
    for (std::size_t i = 0; i < scenes.size(); ++i)
        confusion_update(ipm_acc, ipm_nearest_class(scenes[i], state.cfg.grid),
                         samples[i].label, 0.5);
    const double ipm = mean_of(ipm_acc);

    std::ostringstream os;
    os << "mean IoU trained " << trained << ", untrained " << untrained << ", ipm " << ipm;
    c.pass = trained > untrained && trained > ipm;
    c.detail = os.str();
    return c;
}

Criterion check_a7(const std::string& fixtures) {
    Criterion c{"A7 determinism & formats"};
    bool ok = true;
    std::ostringstream os;

    auto train_short = [] {
        auto cfg = model_preset("vit-desk");
        SeededRng rng(5);
        ParameterSet params;
        init_model_params(cfg, params, rng);
        SeededRng scene_rng(6);
        std::vector<Sample> data;
        for (int i = 0; i < 2; ++i)
            data.push_back(prepare_sample(
                generate_scene(scene_rng, cfg.grid, cfg.intrinsics, cfg.cam_height, i), cfg));
        RunConfig run;
        run.epochs = 1;
        run.batch = 2;
        run.seed = 77;
        run.out_dir.clear();
        return train_model(run, cfg, params, data);
    };
    auto log_a = train_short().loss_log;
    auto log_b = train_short().loss_log;
    if (log_a != log_b || log_a.empty()) {
        ok = false;
        os << "loss logs differ; ";
    }

    const auto tmp = fs::temp_directory_path() / "vbs_acceptance";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    // checkpoint round trip, byte-exact
    {
        SeededRng rng(9);
        ParameterSet params;
        params.add_trunc_normal("a.weight", {5, 4}, rng);
        params.add_trunc_normal("b.bias", {9}, rng);
        const auto p1 = (tmp / "one.vbsg").string();
        const auto p2 = (tmp / "two.vbsg").string();
        save_checkpoint(params, "seed=9\n", p1);
        SeededRng rng2(10);
        ParameterSet reload;
        reload.add_trunc_normal("a.weight", {5, 4}, rng2);
        reload.add_trunc_normal("b.bias", {9}, rng2);
        load_checkpoint(reload, p1);
        save_checkpoint(reload, "seed=9\n", p2);
        if (read_file(p1) != read_file(p2) || read_file(p1).empty()) {
            ok = false;
            os << "checkpoint round trip differs; ";
        }
    }

    // scene file round trip, byte-exact
    {
        BevGridSpec spec;
        CameraIntrinsics intr;
        intr.fx = intr.fy = 64;
        intr.cu = intr.cv = 64;
        intr.width = intr.height = 128;
        SeededRng rng(11);
        auto scene = generate_scene(rng, spec, intr, 1.5, 3);
        const auto p1 = (tmp / "one.scene").string();
        const auto p2 = (tmp / "two.scene").string();
        save_scene(scene, p1);
        save_scene(load_scene(p1), p2);
        if (read_file(p1) != read_file(p2) || read_file(p1).empty()) {
            ok = false;
            os << "scene round trip differs; ";
        }
    }

    // golden pixmap
    {
        auto scene = load_scene(fixtures + "/golden.scene");
        auto image = render_front_view(scene, 128, 128);
        const auto out = (tmp / "golden.ppm").string();
        write_ppm(image, out);
        const auto rendered = read_file(out);
        const auto golden = read_file(fixtures + "/golden.ppm");
        if (golden.empty() || rendered != golden) {
            ok = false;
            os << "golden pixmap mismatch; ";
        }
    }
    fs::remove_all(tmp);

    os << "seeded logs, checkpoint/scene round trips, golden pixmap";
    c.pass = ok;
    c.detail = os.str();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: acceptance <fixtures-dir>\n";
        return 1;
    }
    const std::string fixtures = argv[1];
    std::vector<Criterion> results;
    TrainedState state;

    results.push_back(check_a1());
    results.push_back(check_a2());
    results.push_back(check_a3());
    results.push_back(check_a4());
    results.push_back(check_a5(state));
    results.push_back(check_a6(state));
    results.push_back(check_a7(fixtures));

    bool all = true;
    for (const auto& r : results) {
        std::cout << r.name << ": " << (r.pass ? "PASS" : "FAIL") << " (" << r.detail << ")\n";
        all = all && r.pass;
    }
    return all ? 0 : 1;
}
