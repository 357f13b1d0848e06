#include "vbs/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vbs/loss.hpp"
#include "vbs/ops.hpp"
#include "vbs/rng.hpp"

namespace vbs {

namespace {

double rel_err(double a, double n) {
    return std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
}

TensorPtr random_tensor(const Shape& shape, SeededRng& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = true) {
    auto t = make_tensor(shape, 0.0, requires_grad);
    for (auto& v : t->values) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

double finite_diff_param(const std::function<TensorPtr()>& loss_fn, const TensorPtr& param,
                         double h) {
    if (h <= 0) throw UsageError("finite_diff_param: h must be positive");
    auto loss = loss_fn();
    if (!loss->is_scalar()) throw UsageError("finite_diff_param: loss must be scalar");
    param->zero_grad();
    backward(loss);
    std::vector<double> analytic = param->grad.empty()
                                       ? std::vector<double>(param->values.size(), 0.0)
                                       : param->grad;
    param->zero_grad();
    double worst = 0.0;
    for (std::size_t i = 0; i < param->values.size(); ++i) {
        const double keep = param->values[i];
        param->values[i] = keep + h;
        const double fp = loss_fn()->scalar();
        param->values[i] = keep - h;
        const double fm = loss_fn()->scalar();
        param->values[i] = keep;
        const double numeric = (fp - fm) / (2.0 * h);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

double finite_diff_check(const std::function<TensorPtr(const TensorPtr&)>& fn,
                         const TensorPtr& input, double h) {
    input->requires_grad = true;
    return finite_diff_param([&] { return fn(input); }, input, h);
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, double tolerance, double h) {
    namespace o = ops;
    SeededRng rng(seed);
    std::vector<GradCheckResult> results;
    auto check = [&](const char* name, double err) {
        results.push_back({name, err, err < tolerance});
    };

    {
        auto a = random_tensor({3, 4}, rng);
        auto b = random_tensor({4, 5}, rng);
        double e = finite_diff_check([&](const TensorPtr& x) { return o::sum(o::matmul(x, b)); },
                                     a, h);
        e = std::max(e, finite_diff_check(
                            [&](const TensorPtr& x) { return o::sum(o::matmul(a, x)); }, b, h));
        check("matmul", e);
    }
    {
        auto t = random_tensor({4, 5}, rng, -3.0, 3.0);
        auto v = random_tensor({4, 5}, rng, false);
        // project onto a fixed vector so every Jacobian entry is exercised
        check("softmax", finite_diff_check(
                             [&](const TensorPtr& x) { return o::sum(o::mul(o::softmax(x, 1), v)); },
                             t, h));
    }
    {
        auto t = random_tensor({3, 6}, rng);
        auto gain = random_tensor({6}, rng, 0.5, 1.5);
        auto bias = random_tensor({6}, rng);
        auto v = random_tensor({3, 6}, rng, false);
        auto ln_out = [&] { return o::sum(o::mul(o::layer_norm(t, gain, bias, 1e-6), v)); };
        double e = finite_diff_param(ln_out, t, h);
        e = std::max(e, finite_diff_param(ln_out, gain, h));
        e = std::max(e, finite_diff_param(ln_out, bias, h));
        check("layer_norm", e);
    }
    {
        auto t = make_tensor({7}, {-3, -2, -1, 0, 1, 2, 3}, true);
        check("gelu",
              finite_diff_check([&](const TensorPtr& x) { return o::sum(o::gelu(x)); }, t, h));
    }
    {
        auto t = random_tensor({3, 4}, rng);
        check("sigmoid",
              finite_diff_check([&](const TensorPtr& x) { return o::sum(o::sigmoid(x)); }, t, h));
    }
    {
        auto input = random_tensor({2, 5, 5}, rng);
        auto kern = random_tensor({3, 2, 3, 3}, rng);
        auto bias = random_tensor({3}, rng);
        auto out = [&] { return o::sum(o::conv2d(input, kern, bias, 2, 1)); };
        double e = finite_diff_param(out, input, h);
        e = std::max(e, finite_diff_param(out, kern, h));
        e = std::max(e, finite_diff_param(out, bias, h));
        check("conv2d", e);
    }
    {
        auto input = random_tensor({2, 3, 3}, rng);
        auto kern = random_tensor({3, 2, 2, 2}, rng);
        auto bias = random_tensor({3}, rng);
        auto out = [&] { return o::sum(o::conv_transpose2d(input, kern, bias, 2)); };
        double e = finite_diff_param(out, input, h);
        e = std::max(e, finite_diff_param(out, kern, h));
        e = std::max(e, finite_diff_param(out, bias, h));
        check("conv_transpose2d", e);
    }
    {
        auto feature = random_tensor({3, 6, 6}, rng);
        // keep sample points off the interpolation kinks
        auto coords = make_tensor({4, 4, 2});
        for (std::int64_t i = 0; i < 16; ++i) {
            coords->values[i * 2] = rng.uniform_int(0, 4) + 0.25;
            coords->values[i * 2 + 1] = rng.uniform_int(0, 4) + 0.25;
        }
        check("resample_bilinear",
              finite_diff_check(
                  [&](const TensorPtr& x) { return o::sum(o::resample_bilinear(x, coords)); },
                  feature, h));
    }
    {
        auto a = random_tensor({3, 4}, rng);
        auto b = random_tensor({3, 4}, rng);
        auto out = [&] { return o::sum(o::mul(o::add(a, b), b)); };
        double e = finite_diff_param(out, a, h);
        e = std::max(e, finite_diff_param(out, b, h));
        check("add_mul", e);
    }
    {
        auto a = random_tensor({3, 4}, rng);
        auto rv = random_tensor({4}, rng);
        auto cv = random_tensor({3}, rng);
        auto out = [&] { return o::sum(o::add_colvec(o::add_rowvec(a, rv), cv)); };
        double e = finite_diff_param(out, rv, h);
        e = std::max(e, finite_diff_param(out, cv, h));
        check("broadcast_add", e);
    }
    {
        auto a3 = random_tensor({2, 3, 3}, rng);
        auto cb = random_tensor({2}, rng);
        check("add_chan_bias",
              finite_diff_param([&] { return o::sum(o::add_chan_bias(a3, cb)); }, cb, h));
    }
    {
        auto a = random_tensor({4, 3}, rng);
        auto b = random_tensor({2, 3}, rng);
        auto out = [&] {
            auto cat = o::concat({a, b}, 0);
            auto sl = o::slice(cat, 0, 1, 4);
            return o::sum(o::transpose2d(o::reshape(sl, {3, 4})));
        };
        double e = finite_diff_param(out, a, h);
        e = std::max(e, finite_diff_param(out, b, h));
        check("concat_slice_reshape_transpose", e);
    }
    {
        auto v = random_tensor({1, 5}, rng);
        auto w = random_tensor({4, 5}, rng, false);
        check("repeat_row",
              finite_diff_param([&] { return o::sum(o::mul(o::repeat_row(v, 4), w)); }, v, h));
    }
    {
        auto t = random_tensor({3, 4}, rng);
        double e = finite_diff_param([&] { return o::scale(o::sum(t), 0.7); }, t, h);
        e = std::max(e, finite_diff_param([&] { return o::mean(t); }, t, h));
        check("sum_mean_scale", e);
    }
    {
        auto patches = random_tensor({1, 4, 4}, rng);
        check("image_to_patches",
              finite_diff_check(
                  [&](const TensorPtr& x) { return o::sum(o::image_to_patches(x, 2)); }, patches,
                  h));
    }
    {
        auto probs = random_tensor({2, 3, 4}, rng, 0.05, 0.95);
        auto gt = make_tensor({2, 3, 4});
        for (auto& v : gt->values) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        LossConfig cfg;
        cfg.class_weights = {0.3, 0.8};
        cfg.lambda = 0.2;
        check("bev_loss",
              finite_diff_param([&] { return bev_loss(probs, gt, cfg); }, probs, h));
    }
    return results;
}

}  // namespace vbs
