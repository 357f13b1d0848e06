#include "vbs/loss.hpp"

#include <algorithm>
#include <cmath>

namespace vbs {

namespace {
constexpr double kInvLn2 = 1.4426950408889634;  // 1/ln 2

double clampp(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }
}  // namespace

TensorPtr bev_loss(const TensorPtr& probs, const TensorPtr& gt, const LossConfig& cfg,
                   const TensorPtr& visibility) {
    if (probs->shape.size() != 3)
        throw ConfigError("bev_loss: probs must be [c x Z x X], got " + shape_str(probs->shape));
    if (gt->shape != probs->shape)
        throw DataError("bev_loss: ground truth shape " + shape_str(gt->shape) +
                        " does not match probs " + shape_str(probs->shape));
    const std::int64_t c = probs->shape[0];
    const std::int64_t plane = probs->shape[1] * probs->shape[2];
    if (visibility && visibility->size() != plane)
        throw DataError("bev_loss: visibility mask size mismatch");
    for (double v : gt->values)
        if (v != 0.0 && v != 1.0) throw DataError("bev_loss: ground truth is not binary");
    std::vector<double> weights = cfg.class_weights;
    if (weights.empty()) weights.assign(static_cast<std::size_t>(c), 0.5);
    if (static_cast<std::int64_t>(weights.size()) != c)
        throw ConfigError("bev_loss: class weight count mismatch");
    for (double w : weights)
        if (w <= 0.0 || w >= 1.0) throw ConfigError("bev_loss: class weights must be in (0,1)");
    if (cfg.eps <= 0.0 || cfg.eps > 1e-3) throw ConfigError("bev_loss: eps out of range");

    const double eps = cfg.eps;
    const double lambda = cfg.lambda;
    // Per-cell loss is the sum over classes; the map aggregate is the mean
    // over cells, so the gradient scale is independent of the grid size.
    const double inv_n = 1.0 / static_cast<double>(plane);
    double total = 0.0;
    std::vector<double> dp(probs->values.size(), 0.0);
    for (std::int64_t ci = 0; ci < c; ++ci) {
        const double w = weights[static_cast<std::size_t>(ci)];
        for (std::int64_t i = 0; i < plane; ++i) {
            const std::int64_t idx = ci * plane + i;
            const double praw = probs->values[idx];
            const double p = clampp(praw, eps);
            const double phat = gt->values[idx];
            // The gradient is evaluated at the clamped probability rather
            // than zeroed past the rails: upstream the probability comes
            // from a sigmoid whose derivative vanishes at saturation, so the
            // product stays bounded while saturated-wrong cells keep a
            // restoring signal instead of dying permanently.
            total += -(w * phat * std::log(p) + (1.0 - w) * (1.0 - phat) * std::log(1.0 - p));
            dp[idx] += -w * phat / p + (1.0 - w) * (1.0 - phat) / (1.0 - p);
            const bool ambiguous = !visibility || visibility->values[i] != 0.0;
            if (lambda != 0.0 && ambiguous) {
                switch (cfg.mode) {
                    case UncertaintyMode::kPrinted:
                        total += lambda * (1.0 - p * std::log2(p));
                        dp[idx] += -lambda * (std::log(p) + 1.0) * kInvLn2;
                        break;
                    case UncertaintyMode::kEntropyBonus: {
                        const double ent = -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
                        total += lambda * (1.0 - ent);
                        dp[idx] += lambda * std::log2(p / (1.0 - p));
                        break;
                    }
                }
            }
        }
    }
    auto out = std::make_shared<Tensor>(Shape{1}, std::vector<double>{total * inv_n}, false);
    out->op_name = "bev_loss";
    if (probs->requires_grad) {
        out->requires_grad = true;
        out->parents = {probs};
        Tensor* pp = probs.get();
        out->backward_fn = [pp, dp = std::move(dp), inv_n](Tensor& self) {
            auto& g = pp->ensure_grad();
            const double go = self.grad[0] * inv_n;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * dp[i];
        };
    }
    return out;
}

std::vector<double> frequency_class_weights(const std::vector<TensorPtr>& labels, int classes) {
    std::vector<double> weights(static_cast<std::size_t>(classes), 0.5);
    if (labels.empty()) return weights;
    std::vector<double> pos(static_cast<std::size_t>(classes), 0.0);
    double cells = 0.0;
    for (const auto& label : labels) {
        const std::int64_t plane = label->shape[1] * label->shape[2];
        cells += static_cast<double>(plane);
        for (int ci = 0; ci < classes; ++ci)
            for (std::int64_t i = 0; i < plane; ++i) pos[ci] += label->values[ci * plane + i];
    }
    for (int ci = 0; ci < classes; ++ci) {
        const double freq = pos[ci] / cells;
        // The upper clamp caps the positive:negative gradient ratio at roughly 32:1;
        // anything steeper drives every logit into deep saturation before
        // the features can learn to discriminate.
        weights[ci] = std::clamp(1.0 - freq, 0.5, 0.97);
    }
    return weights;
}

}  // namespace vbs
