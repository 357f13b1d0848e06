#include "vbs/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vbs/checkpoint.hpp"
#include "vbs/loss.hpp"
#include "vbs/ops.hpp"

namespace vbs {

namespace fs = std::filesystem;

TensorPtr normalize_image(const TensorPtr& rgb) {
    auto out = make_tensor(rgb->shape);
    for (std::size_t i = 0; i < rgb->values.size(); ++i)
        out->values[i] = rgb->values[i] * 2.0 - 1.0;
    return out;
}

Sample prepare_sample(const Scene& scene, const ModelConfig& cfg) {
    Sample s;
    s.image = normalize_image(render_front_view(scene, cfg.encoder.height, cfg.encoder.width));
    s.label = rasterize_bev(scene, cfg.grid).masks;
    s.visibility = visibility_mask(scene, cfg.grid);
    s.scene_id = scene.id;
    return s;
}

Dataset load_dataset(const std::string& dir, const ModelConfig& cfg) {
    SceneSet set = load_scene_set(dir);
    if (set.scenes.empty()) throw DataError("dataset is empty: " + dir);
    Dataset ds;
    for (std::size_t i = 0; i < set.scenes.size(); ++i) {
        auto sample = prepare_sample(set.scenes[i], cfg);
        (set.splits[i] == "train" ? ds.train : ds.val).push_back(std::move(sample));
    }
    return ds;
}

namespace {
// Fisher-Yates on the sample order, driven by the run seed.
std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    return idx;
}
}  // namespace

TrainResult train_model(const RunConfig& run, const ModelConfig& cfg, ParameterSet& params,
                        const std::vector<Sample>& data,
                        const std::function<void(int, double)>& on_step) {
    run.validate();
    if (data.empty()) throw DataError("train: no training samples");
    LossConfig loss_cfg;
    loss_cfg.lambda = run.lambda;
    loss_cfg.mode = run.entropy_bonus ? UncertaintyMode::kEntropyBonus : UncertaintyMode::kPrinted;
    if (run.frequency_weights) {
        std::vector<TensorPtr> labels;
        for (const auto& s : data) labels.push_back(s.label);
        loss_cfg.class_weights = frequency_class_weights(labels, cfg.classes);
    }
    SeededRng shuffle_rng(run.seed);
    SgdState sgd_state;
    std::ostringstream log;
    log << "step,epoch,loss\n";
    log.precision(17);
    TrainResult result;
    const bool write_files = !run.out_dir.empty();
    if (write_files) fs::create_directories(run.out_dir);
    int step = 0;
    bool done = false;
    for (int epoch = 0; epoch < run.epochs && !done; ++epoch) {
        auto order = shuffled_indices(data.size(), shuffle_rng);
        for (std::size_t at = 0; at < order.size() && !done; at += run.batch) {
            std::vector<TensorPtr> losses;
            for (std::size_t b = at; b < std::min(at + run.batch, order.size()); ++b) {
                const Sample& s = data[order[b]];
                BevGrid pred = model_forward(s.image, cfg, params);
                losses.push_back(bev_loss(pred.probs, s.label, loss_cfg, s.visibility));
            }
            TensorPtr loss = losses[0];
            for (std::size_t i = 1; i < losses.size(); ++i) loss = ops::add(loss, losses[i]);
            loss = ops::scale(loss, 1.0 / static_cast<double>(losses.size()));
            const double value = loss->scalar();
            if (!std::isfinite(value))
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
            if (run.loss_scale != 1.0) loss = ops::scale(loss, run.loss_scale);
            backward(loss);
            sgd_step(params, run.lr, run.weight_decay, run.momentum, sgd_state);
            if (step == 0) result.initial_loss = value;
            result.final_loss = value;
            log << step << "," << epoch << "," << value << "\n";
            if (on_step) on_step(step, value);
            ++step;
            if (run.max_steps > 0 && step >= run.max_steps) done = true;
        }
        if (write_files) {
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_%04d.vbsg", epoch);
            save_checkpoint(params, run.echo(), (fs::path(run.out_dir) / name).string());
        }
    }
    result.steps = step;
    result.loss_log = log.str();
    if (write_files) {
        std::ofstream log_file(fs::path(run.out_dir) / "loss_log.csv");
        log_file << result.loss_log;
        save_checkpoint(params, run.echo(), (fs::path(run.out_dir) / "checkpoint_final.vbsg").string());
        std::ofstream echo(fs::path(run.out_dir) / "config_echo.txt");
        echo << run.echo();
    }
    return result;
}

ConfusionAccumulator evaluate_model(const ModelConfig& cfg, const ParameterSet& params,
                                    const std::vector<Sample>& data, double threshold,
                                    bool use_gt) {
    ConfusionAccumulator acc(cfg.classes);
    for (const auto& s : data) {
        if (use_gt) {
            confusion_update(acc, s.label, s.label, threshold);
        } else {
            BevGrid pred = model_forward(s.image, cfg, params);
            confusion_update(acc, pred.probs, s.label, threshold);
        }
    }
    return acc;
}

TensorPtr ipm_nearest_class(const Scene& scene, const BevGridSpec& spec) {
    auto rgb = render_front_view(scene, scene.intrinsics.height, scene.intrinsics.width);
    auto ground = ipm_baseline(rgb, scene.intrinsics, spec, scene.cam_height);
    const auto& palette = class_palette();
    const int classes = static_cast<int>(palette.size());
    const std::int64_t zb = spec.depth_bins(), xb = spec.lateral_bins();
    auto masks = make_tensor({classes, zb, xb});
    const std::int64_t plane = zb * xb;
    for (std::int64_t i = 0; i < plane; ++i) {
        const double r = ground->values[i];
        const double g = ground->values[plane + i];
        const double b = ground->values[2 * plane + i];
        if (r == 0.0 && g == 0.0 && b == 0.0) continue;  // outside the image
        int best = -1;
        double best_d = 0.03;  // only claim cells close to a palette color
        for (int c = 0; c < classes; ++c) {
            const auto& col = palette[static_cast<std::size_t>(c)].color;
            const double d = (r - col[0]) * (r - col[0]) + (g - col[1]) * (g - col[1]) +
                             (b - col[2]) * (b - col[2]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best >= 0) masks->values[best * plane + i] = 1.0;
    }
    return masks;
}

}  // namespace vbs
