#include "vbs/encoder.hpp"

#include <cmath>

namespace vbs {

void EncoderConfig::validate() const {
    if (height % patch != 0 || width % patch != 0)
        throw ConfigError("encoder: image extents must be divisible by patch size");
    if (embed_dim % heads != 0)
        throw ConfigError("encoder: embed dim must be divisible by head count");
    for (int i = 1; i < 5; ++i)
        if (hooks[i] <= hooks[i - 1])
            throw ConfigError("encoder: hook blocks must be strictly increasing");
    if (hooks[0] < 1 || hooks[4] > blocks)
        throw ConfigError("encoder: hook blocks must lie in [1, K]");
}

EncoderConfig encoder_preset(const std::string& name) {
    EncoderConfig cfg;
    if (name == "vit-b16") {
        // defaults above
    } else if (name == "vit-l16") {
        cfg.embed_dim = 1024;
        cfg.blocks = 24;
        cfg.heads = 16;
        cfg.hooks = {5, 10, 15, 20, 24};
    } else if (name == "vit-desk") {
        cfg.height = cfg.width = 128;
        cfg.patch = 8;
        cfg.embed_dim = 64;
        cfg.blocks = 6;
        cfg.heads = 4;
        cfg.hooks = {1, 2, 3, 4, 6};
    } else {
        throw ConfigError("unknown encoder preset: " + name);
    }
    cfg.validate();
    return cfg;
}

void init_encoder_params(const EncoderConfig& cfg, ParameterSet& params, SeededRng& rng) {
    const int d = cfg.embed_dim;
    const int pd = cfg.patch * cfg.patch * cfg.channels;
    // Fan-in scaled so the residual stream enters at the pixel scale; the
    // fixed 0.02 stddev stays for the in-block projections, whose layer
    // norms make them scale-free.
    params.add_trunc_normal("encoder.patch_proj.weight", {pd, d}, rng, fan_in_std(pd));
    params.add_constant("encoder.patch_proj.bias", {d}, 0.0);
    params.add_trunc_normal("encoder.pos_embed", {cfg.tokens() + 1, d}, rng);
    params.add_trunc_normal("encoder.cls_token", {1, d}, rng);
    const int hidden = static_cast<int>(cfg.mlp_ratio * d);
    for (int b = 1; b <= cfg.blocks; ++b) {
        const std::string p = "encoder.block" + std::to_string(b) + ".";
        params.add_constant(p + "ln1.gain", {d}, 1.0);
        params.add_constant(p + "ln1.bias", {d}, 0.0);
        params.add_constant(p + "ln2.gain", {d}, 1.0);
        params.add_constant(p + "ln2.bias", {d}, 0.0);
        for (const char* m : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
            params.add_trunc_normal(p + m + ".weight", {d, d}, rng);
            params.add_constant(p + m + ".bias", {d}, 0.0);
        }
        params.add_trunc_normal(p + "mlp.fc1.weight", {d, hidden}, rng);
        params.add_constant(p + "mlp.fc1.bias", {hidden}, 0.0);
        params.add_trunc_normal(p + "mlp.fc2.weight", {hidden, d}, rng);
        params.add_constant(p + "mlp.fc2.bias", {d}, 0.0);
    }
}

TensorPtr patch_embed(const TensorPtr& image, const EncoderConfig& cfg,
                      const ParameterSet& params) {
    if (image->shape != Shape{cfg.channels, cfg.height, cfg.width})
        throw ConfigError("patch_embed: image shape " + shape_str(image->shape) +
                          " does not match configured " +
                          shape_str({cfg.channels, cfg.height, cfg.width}));
    auto patches = ops::image_to_patches(image, cfg.patch);
    auto projected = ops::add_rowvec(ops::matmul(patches, params.at("encoder.patch_proj.weight")),
                                     params.at("encoder.patch_proj.bias"));
    auto tokens = ops::concat({params.at("encoder.cls_token"), projected}, 0);
    return ops::add(tokens, params.at("encoder.pos_embed"));
}

namespace {
TensorPtr linear(const TensorPtr& x, const ParameterSet& params, const std::string& prefix) {
    return ops::add_rowvec(ops::matmul(x, params.at(prefix + ".weight")),
                           params.at(prefix + ".bias"));
}
}  // namespace

TensorPtr mhsa(const TensorPtr& tokens, const EncoderConfig& cfg, const ParameterSet& params,
               const std::string& prefix) {
    const int d = cfg.embed_dim;
    const int dk = d / cfg.heads;
    auto q = linear(tokens, params, prefix + ".wq");
    auto k = linear(tokens, params, prefix + ".wk");
    auto v = linear(tokens, params, prefix + ".wv");
    std::vector<TensorPtr> head_outs;
    for (int hIdx = 0; hIdx < cfg.heads; ++hIdx) {
        auto qh = ops::slice(q, 1, hIdx * dk, dk);
        auto kh = ops::slice(k, 1, hIdx * dk, dk);
        auto vh = ops::slice(v, 1, hIdx * dk, dk);
        auto scores = ops::scale(ops::matmul(qh, ops::transpose2d(kh)),
                                 1.0 / std::sqrt(static_cast<double>(dk)));
        auto attn = ops::softmax(scores, 1);
        head_outs.push_back(ops::matmul(attn, vh));
    }
    return linear(ops::concat(head_outs, 1), params, prefix + ".wo");
}

TensorPtr transformer_block(const TensorPtr& tokens, const EncoderConfig& cfg,
                            const ParameterSet& params, const std::string& prefix) {
    const double eps = 1e-6;
    auto n1 = ops::layer_norm(tokens, params.at(prefix + ".ln1.gain"),
                              params.at(prefix + ".ln1.bias"), eps);
    auto t1 = ops::add(tokens, mhsa(n1, cfg, params, prefix + ".attn"));
    auto n2 = ops::layer_norm(t1, params.at(prefix + ".ln2.gain"),
                              params.at(prefix + ".ln2.bias"), eps);
    auto h = ops::gelu(linear(n2, params, prefix + ".mlp.fc1"));
    return ops::add(t1, linear(h, params, prefix + ".mlp.fc2"));
}

std::vector<TensorPtr> encode_with_hooks(const TensorPtr& image, const EncoderConfig& cfg,
                                         const ParameterSet& params) {
    cfg.validate();
    auto tokens = patch_embed(image, cfg, params);
    std::vector<TensorPtr> hooked;
    int next_hook = 0;
    for (int b = 1; b <= cfg.blocks; ++b) {
        tokens = transformer_block(tokens, cfg, params, "encoder.block" + std::to_string(b));
        if (next_hook < 5 && cfg.hooks[next_hook] == b) {
            hooked.push_back(tokens);
            ++next_hook;
        }
    }
    return hooked;
}

}  // namespace vbs
