#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "vbs/checkpoint.hpp"
#include "vbs/gradcheck.hpp"
#include "vbs/ppm.hpp"
#include "vbs/trainer.hpp"

namespace fs = std::filesystem;
using namespace vbs;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

struct CommonFlags {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "key=value config file");
    cmd->add_option("--preset", flags.preset, "model preset (vit-b16, vit-l16, vit-desk)");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--seed", flags.seed, "random seed")->each([&](const std::string&) {
        flags.seed_set = true;
    });
}

// Config file first, then command-line flags on top.
RunConfig resolve_config(const CommonFlags& flags, const RunConfig& defaults = {}) {
    RunConfig cfg = defaults;
    if (!flags.config_path.empty()) cfg = parse_config_file(flags.config_path, cfg);
    if (!flags.preset.empty()) cfg.preset = flags.preset;
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (flags.seed_set) cfg.seed = flags.seed;
    return cfg;
}

ParameterSet make_params(const ModelConfig& model, std::uint64_t seed) {
    ParameterSet params;
    SeededRng rng(seed);
    init_model_params(model, params, rng);
    return params;
}

int cmd_generate(const CommonFlags& flags, int count, double val_fraction) {
    RunConfig cfg = resolve_config(flags);
    cfg.validate();
    ModelConfig model = model_preset(cfg.preset);
    SceneSet set;
    SeededRng rng(cfg.seed);
    const int n_val = static_cast<int>(count * val_fraction + 0.5);
    for (int i = 0; i < count; ++i) {
        set.scenes.push_back(
            generate_scene(rng, model.grid, model.intrinsics, model.cam_height, i));
        set.splits.push_back(i < count - n_val ? "train" : "val");
    }
    save_scene_set(set, cfg.out_dir);
    std::cout << "wrote " << count << " scenes (" << n_val << " val) to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_train(const CommonFlags& flags, const RunConfig& overrides, bool has_steps) {
    RunConfig cfg = resolve_config(flags, overrides);
    if (!has_steps) cfg.max_steps = overrides.max_steps;
    cfg.validate();
    if (cfg.data_dir.empty()) throw DataError("train: --data is required");
    ModelConfig model = model_preset(cfg.preset);
    ParameterSet params = make_params(model, cfg.seed);
    Dataset ds = load_dataset(cfg.data_dir, model);
    if (ds.train.empty()) throw DataError("train: no training split in " + cfg.data_dir);
    auto result = train_model(cfg, model, params, ds.train, [](int step, double loss) {
        if (step % 25 == 0) std::cout << "step " << step << " loss " << loss << "\n";
    });
    std::cout << "trained " << result.steps << " steps, loss " << result.initial_loss << " -> "
              << result.final_loss << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& flags, const RunConfig& overrides, const std::string& ckpt,
             bool use_gt) {
    RunConfig cfg = resolve_config(flags, overrides);
    cfg.validate();
    if (cfg.data_dir.empty()) throw DataError("eval: --data is required");
    ModelConfig model = model_preset(cfg.preset);
    ParameterSet params = make_params(model, cfg.seed);
    if (!ckpt.empty()) load_checkpoint(params, ckpt);
    Dataset ds = load_dataset(cfg.data_dir, model);
    const auto& split = ds.val.empty() ? ds.train : ds.val;
    auto acc = evaluate_model(model, params, split, cfg.threshold, use_gt);
    auto report = iou_scores(acc, cityscapes_subset());
    std::cout << format_iou_table(report, report_columns());
    std::cout << format_iou_kv(report, [] {
        std::vector<std::string> names;
        for (const auto& c : class_palette()) names.push_back(c.name);
        return names;
    }());
    return 0;
}

int cmd_predict(const CommonFlags& flags, const std::string& ckpt, const std::string& scene_path,
                double threshold) {
    RunConfig cfg = resolve_config(flags);
    cfg.validate();
    ModelConfig model = model_preset(cfg.preset);
    ParameterSet params = make_params(model, cfg.seed);
    if (!ckpt.empty()) load_checkpoint(params, ckpt);
    Scene scene = load_scene(scene_path);
    fs::create_directories(cfg.out_dir);
    auto rgb = render_front_view(scene, model.encoder.height, model.encoder.width);
    const std::string stem =
        (fs::path(cfg.out_dir) / (std::to_string(scene.id) + "_")).string();
    write_ppm(rgb, stem + "input.ppm");
    BevGrid pred = model_forward(normalize_image(rgb), model, params);
    const std::int64_t plane = pred.probs->shape[1] * pred.probs->shape[2];
    const auto& palette = class_palette();
    for (int c = 0; c < model.classes; ++c) {
        auto heat = make_tensor({pred.probs->shape[1], pred.probs->shape[2]});
        for (std::int64_t i = 0; i < plane; ++i) heat->values[i] = pred.probs->values[c * plane + i];
        write_ppm_gray(heat, stem + palette[static_cast<std::size_t>(c)].name + ".ppm");
    }
    // composite: argmax over classes where the winner clears the threshold
    auto composite = make_tensor({3, pred.probs->shape[1], pred.probs->shape[2]});
    for (std::int64_t i = 0; i < plane; ++i) {
        int best = -1;
        double best_p = threshold;
        for (int c = 0; c < model.classes; ++c)
            if (pred.probs->values[c * plane + i] >= best_p) {
                best_p = pred.probs->values[c * plane + i];
                best = c;
            }
        if (best >= 0)
            for (int ch = 0; ch < 3; ++ch)
                composite->values[ch * plane + i] = palette[static_cast<std::size_t>(best)].color[ch];
    }
    write_ppm(composite, stem + "composite.ppm");
    std::cout << "wrote pixmaps under " << cfg.out_dir << "\n";
    return 0;
}

int cmd_render(const CommonFlags& flags, const std::string& scene_path) {
    RunConfig cfg = resolve_config(flags);
    ModelConfig model = model_preset(cfg.preset);
    Scene scene = load_scene(scene_path);
    fs::create_directories(cfg.out_dir);
    const std::string stem =
        (fs::path(cfg.out_dir) / (std::to_string(scene.id) + "_")).string();
    write_ppm(render_front_view(scene, model.encoder.height, model.encoder.width),
              stem + "input.ppm");
    BevLabel label = rasterize_bev(scene, model.grid);
    const std::int64_t plane = model.grid.depth_bins() * model.grid.lateral_bins();
    auto composite = make_tensor({3, model.grid.depth_bins(), model.grid.lateral_bins()});
    const auto& palette = class_palette();
    for (std::int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < static_cast<int>(palette.size()); ++c)
            if (label.masks->values[c * plane + i] != 0.0)
                for (int ch = 0; ch < 3; ++ch)
                    composite->values[ch * plane + i] = palette[static_cast<std::size_t>(c)].color[ch];
    write_ppm(composite, stem + "label.ppm");
    std::cout << "wrote pixmaps under " << cfg.out_dir << "\n";
    return 0;
}

int cmd_gradcheck(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    const double tol = 1e-4;
    auto results = run_gradcheck_suite(cfg.seed == 0 ? 7 : cfg.seed, tol);
    bool all_pass = true;
    std::cout << std::left;
    for (const auto& r : results) {
        std::cout << std::setw(36) << r.op << std::scientific << std::setprecision(3)
                  << r.max_rel_err << (r.pass ? "  pass" : "  FAIL") << "\n"
                  << std::defaultfloat;
        all_pass = all_pass && r.pass;
    }
    // one end-to-end image -> loss path on the preset
    ModelConfig model = model_preset(cfg.preset.empty() ? "vit-desk" : cfg.preset);
    ParameterSet params = make_params(model, cfg.seed == 0 ? 7 : cfg.seed);
    SeededRng rng(99);
    auto image = make_tensor({model.encoder.channels, model.encoder.height, model.encoder.width});
    for (auto& v : image->values) v = rng.uniform(-1.0, 1.0);
    auto gt = make_tensor({model.classes, model.grid.depth_bins(), model.grid.lateral_bins()});
    for (auto& v : gt->values) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
    LossConfig loss_cfg;
    auto loss_fn = [&] { return bev_loss(model_forward(image, model, params).probs, gt, loss_cfg); };
    std::vector<const TensorPtr*> all;
    for (const auto& [name, t] : params) all.push_back(&t);
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        const TensorPtr& p = *all[static_cast<std::size_t>(rng.uniform_int(
            0, static_cast<std::int64_t>(all.size()) - 1))];
        // single randomly chosen element per sampled parameter
        const auto elem = static_cast<std::size_t>(rng.uniform_int(0, p->size() - 1));
        auto probe = [&] {
            auto loss = loss_fn();
            p->zero_grad();
            backward(loss);
            const double analytic = p->grad.empty() ? 0.0 : p->grad[elem];
            p->zero_grad();
            const double h = 1e-5;
            const double keep = p->values[elem];
            p->values[elem] = keep + h;
            const double fp = loss_fn()->scalar();
            p->values[elem] = keep - h;
            const double fm = loss_fn()->scalar();
            p->values[elem] = keep;
            const double numeric = (fp - fm) / (2.0 * h);
            return std::fabs(analytic - numeric) /
                   std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
        };
        worst = std::max(worst, probe());
    }
    const bool e2e_pass = worst < tol;
    std::cout << std::setw(36) << "end_to_end" << std::scientific << std::setprecision(3) << worst
              << (e2e_pass ? "  pass" : "  FAIL") << "\n";
    if (!all_pass || !e2e_pass) return kExitVerification;
    return 0;
}

int cmd_shapes(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    ModelConfig model = model_preset(cfg.preset.empty() ? "vit-desk" : cfg.preset);
    for (const auto& [name, shape] : shape_trace(model))
        std::cout << std::left << std::setw(24) << name << shape_str(shape) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"birds-eye-view semantic occupancy toolkit"};
    app.require_subcommand(1);

    CommonFlags flags;
    RunConfig overrides;
    int gen_count = 72;
    double val_fraction = 0.25;
    std::string ckpt, scene_path, data_dir;
    bool use_gt = false;
    double predict_threshold = 0.5;
    bool has_steps = false;

    auto* generate = app.add_subcommand("generate", "generate a synthetic scene dataset");
    add_common(generate, flags);
    generate->add_option("--count", gen_count, "number of scenes");
    generate->add_option("--val-fraction", val_fraction, "fraction held out for validation");

    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, flags);
    train->add_option("--data", data_dir, "dataset directory");
    train->add_option("--lr", overrides.lr, "learning rate");
    train->add_option("--weight-decay", overrides.weight_decay, "weight decay");
    train->add_option("--momentum", overrides.momentum, "SGD momentum coefficient");
    train->add_option("--loss-scale", overrides.loss_scale,
                      "multiply the loss before backward (logged losses stay unscaled)");
    train->add_option("--batch", overrides.batch, "batch size");
    train->add_option("--epochs", overrides.epochs, "epoch count");
    train->add_option("--steps", overrides.max_steps, "cap on total optimizer steps")
        ->each([&](const std::string&) { has_steps = true; });
    train->add_option("--lambda", overrides.lambda, "uncertainty term coefficient");
    train->add_flag("--entropy-bonus", overrides.entropy_bonus,
                    "use the entropy-bonus uncertainty term");
    train->add_flag("--frequency-weights", overrides.frequency_weights,
                    "derive class weights from training label frequencies");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, flags);
    eval->add_option("--data", data_dir, "dataset directory");
    eval->add_option("--checkpoint", ckpt, "checkpoint file");
    eval->add_flag("--use-gt", use_gt, "score ground truth against itself (debug)");

    auto* predict = app.add_subcommand("predict", "render predictions for a scene");
    add_common(predict, flags);
    predict->add_option("--checkpoint", ckpt, "checkpoint file");
    predict->add_option("--scene", scene_path, "scene file")->required();
    predict->add_option("--threshold", predict_threshold, "composite threshold");

    auto* render = app.add_subcommand("render", "render a scene and its labels");
    add_common(render, flags);
    render->add_option("--scene", scene_path, "scene file")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common(gradcheck, flags);

    auto* shapes = app.add_subcommand("shapes", "print the forward shape trace");
    add_common(shapes, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        overrides.data_dir = data_dir;
        if (generate->parsed()) return cmd_generate(flags, gen_count, val_fraction);
        if (train->parsed()) return cmd_train(flags, overrides, has_steps);
        if (eval->parsed()) return cmd_eval(flags, overrides, ckpt, use_gt);
        if (predict->parsed()) return cmd_predict(flags, ckpt, scene_path, predict_threshold);
        if (render->parsed()) return cmd_render(flags, scene_path);
        if (gradcheck->parsed()) return cmd_gradcheck(flags);
        if (shapes->parsed()) return cmd_shapes(flags);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitVerification;
    }
    return kExitUsage;
}
