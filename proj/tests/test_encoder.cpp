#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "vbs/encoder.hpp"
#include "vbs/gradcheck.hpp"
#include "vbs/model.hpp"
#include "vbs/ops.hpp"
#include "vbs/rng.hpp"

using namespace vbs;
namespace o = vbs::ops;

namespace {

TensorPtr rand_tensor(const Shape& shape, SeededRng& rng, double lo = -1, double hi = 1) {
    auto t = make_tensor(shape);
    for (auto& v : t->values) v = rng.uniform(lo, hi);
    return t;
}

EncoderConfig tiny_config() {
    EncoderConfig cfg;
    cfg.channels = 1;
    cfg.height = 8;
    cfg.width = 8;
    cfg.patch = 4;
    cfg.embed_dim = 4;
    cfg.blocks = 6;
    cfg.heads = 2;
    cfg.hooks = {1, 2, 3, 4, 6};
    return cfg;
}

void fill_params(ParameterSet& params, SeededRng& rng) {
    for (const auto& [name, t] : params)
        for (auto& v : t->values) v = rng.uniform(-0.3, 0.3);
}

}  // namespace

TEST_CASE("preset token and hook geometry") {
    auto b16 = encoder_preset("vit-b16");
    CHECK(b16.tokens() == 576);
    CHECK(b16.embed_dim == 768);
    CHECK(b16.hooks == std::array<int, 5>{3, 5, 7, 9, 12});

    auto l16 = encoder_preset("vit-l16");
    CHECK(l16.tokens() == 576);
    CHECK(l16.embed_dim == 1024);
    CHECK(l16.blocks == 24);
    CHECK(l16.heads == 16);
    CHECK(l16.hooks == std::array<int, 5>{5, 10, 15, 20, 24});

    auto desk = encoder_preset("vit-desk");
    CHECK(desk.tokens() == 256);
    CHECK(desk.embed_dim == 64);
    CHECK(desk.hooks == std::array<int, 5>{1, 2, 3, 4, 6});

    CHECK_THROWS_AS(encoder_preset("vit-h14"), ConfigError);
}

TEST_CASE("hook list must be strictly increasing and in range") {
    auto cfg = tiny_config();
    cfg.hooks = {1, 2, 2, 4, 6};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.hooks = {1, 2, 3, 4, 7};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.hooks = {0, 2, 3, 4, 6};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("patch embedding shape and ordering") {
    auto cfg = tiny_config();
    SeededRng rng(1);
    ParameterSet params;
    init_encoder_params(cfg, params, rng);

    // make the projection copy the first pixel of each patch and kill the
    // positional table so row content identifies the source patch
    auto proj = params.at("encoder.patch_proj.weight");
    std::fill(proj->values.begin(), proj->values.end(), 0.0);
    for (int d = 0; d < cfg.embed_dim; ++d) proj->values[d] = 1.0;  // row 0 of the patch vector
    std::fill(params.at("encoder.patch_proj.bias")->values.begin(),
              params.at("encoder.patch_proj.bias")->values.end(), 0.0);
    auto pos = params.at("encoder.pos_embed");
    std::fill(pos->values.begin(), pos->values.end(), 0.0);
    auto cls = params.at("encoder.cls_token");
    std::fill(cls->values.begin(), cls->values.end(), 0.0);

    auto image = make_tensor({1, 8, 8}, 0.0);
    // patch (row r, col c) gets top-left pixel value 10r + c
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) image->values[(r * 4) * 8 + c * 4] = 10 * r + c;

    auto tokens = patch_embed(image, cfg, params);
    REQUIRE(tokens->shape == Shape{5, 4});
    CHECK(tokens->values[0] == 0.0);  // class token row
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            CHECK(tokens->values[(1 + r * 2 + c) * 4] == doctest::Approx(10 * r + c));
}

TEST_CASE("single token attends only to itself") {
    EncoderConfig cfg = tiny_config();
    SeededRng rng(2);
    ParameterSet params;
    init_encoder_params(cfg, params, rng);
    fill_params(params, rng);

    auto x = rand_tensor({1, 4}, rng);
    auto out = mhsa(x, cfg, params, "encoder.block1.attn");

    // softmax over one score is 1, so out = (x Wv + bv) Wo + bo per head slice
    auto v = o::add_rowvec(o::matmul(x, params.at("encoder.block1.attn.wv.weight")),
                           params.at("encoder.block1.attn.wv.bias"));
    auto expect = o::add_rowvec(o::matmul(v, params.at("encoder.block1.attn.wo.weight")),
                                params.at("encoder.block1.attn.wo.bias"));
    REQUIRE(out->shape == expect->shape);
    for (std::size_t i = 0; i < out->values.size(); ++i)
        CHECK(out->values[i] == doctest::Approx(expect->values[i]).epsilon(1e-12));
}

TEST_CASE("zero query weights give uniform attention") {
    EncoderConfig cfg = tiny_config();
    SeededRng rng(3);
    ParameterSet params;
    init_encoder_params(cfg, params, rng);
    fill_params(params, rng);
    auto wq = params.at("encoder.block1.attn.wq.weight");
    std::fill(wq->values.begin(), wq->values.end(), 0.0);
    auto bq = params.at("encoder.block1.attn.wq.bias");
    std::fill(bq->values.begin(), bq->values.end(), 0.0);

    const int n = 5;
    auto x = rand_tensor({n, 4}, rng);
    auto out = mhsa(x, cfg, params, "encoder.block1.attn");

    // uniform weights average the value rows, so every output row is equal
    for (int r = 1; r < n; ++r)
        for (int d = 0; d < 4; ++d)
            CHECK(out->values[r * 4 + d] == doctest::Approx(out->values[d]).epsilon(1e-12));
}

TEST_CASE("attention matches a brute-force reference") {
    EncoderConfig cfg = tiny_config();  // embed 4, two heads of width 2
    SeededRng rng(4);
    ParameterSet params;
    init_encoder_params(cfg, params, rng);
    fill_params(params, rng);

    const int n = 3, d = 4, heads = 2, dk = 2;
    auto x = rand_tensor({n, d}, rng);
    auto out = mhsa(x, cfg, params, "encoder.block1.attn");

    auto lin = [&](const char* name, int row, int col) {
        return params.at(std::string("encoder.block1.attn.") + name + ".weight")
            ->values[row * d + col];
    };
    auto bias = [&](const char* name, int col) {
        return params.at(std::string("encoder.block1.attn.") + name + ".bias")->values[col];
    };
    std::vector<double> q(n * d), k(n * d), v(n * d), concat(n * d, 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) {
            double sq = bias("wq", c), sk = bias("wk", c), sv = bias("wv", c);
            for (int i = 0; i < d; ++i) {
                sq += x->values[r * d + i] * lin("wq", i, c);
                sk += x->values[r * d + i] * lin("wk", i, c);
                sv += x->values[r * d + i] * lin("wv", i, c);
            }
            q[r * d + c] = sq;
            k[r * d + c] = sk;
            v[r * d + c] = sv;
        }
    for (int h = 0; h < heads; ++h)
        for (int r = 0; r < n; ++r) {
            std::vector<double> score(n);
            double mx = -1e300;
            for (int s = 0; s < n; ++s) {
                double dot = 0;
                for (int j = 0; j < dk; ++j)
                    dot += q[r * d + h * dk + j] * k[s * d + h * dk + j];
                score[s] = dot / std::sqrt(static_cast<double>(dk));
                mx = std::max(mx, score[s]);
            }
            double denom = 0;
            for (int s = 0; s < n; ++s) denom += std::exp(score[s] - mx);
            for (int s = 0; s < n; ++s) {
                const double w = std::exp(score[s] - mx) / denom;
                for (int j = 0; j < dk; ++j)
                    concat[r * d + h * dk + j] += w * v[s * d + h * dk + j];
            }
        }
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) {
            double s = bias("wo", c);
            for (int i = 0; i < d; ++i) s += concat[r * d + i] * lin("wo", i, c);
            CHECK(out->values[r * d + c] == doctest::Approx(s).epsilon(1e-10));
        }
}

TEST_CASE("zero-weight block is the identity") {
    EncoderConfig cfg = tiny_config();
    SeededRng rng(5);
    ParameterSet params;
    init_encoder_params(cfg, params, rng);
    for (const auto& [name, t] : params) {
        const bool gain = name.find(".gain") != std::string::npos;
        std::fill(t->values.begin(), t->values.end(), gain ? 1.0 : 0.0);
    }
    auto x = rand_tensor({5, 4}, rng);
    auto out = transformer_block(x, cfg, params, "encoder.block1");
    for (std::size_t i = 0; i < x->values.size(); ++i)
        CHECK(out->values[i] == doctest::Approx(x->values[i]).epsilon(1e-12));
}

TEST_CASE("hook snapshots have the contract shapes") {
    // run the small preset for real, verify the big presets arithmetically
    auto cfg = encoder_preset("vit-desk");
    SeededRng rng(6);
    ParameterSet params;
    init_encoder_params(cfg, params, rng);
    auto image = rand_tensor({3, 128, 128}, rng);
    auto hooks = encode_with_hooks(image, cfg, params);
    REQUIRE(hooks.size() == 5);
    for (const auto& h : hooks) CHECK(h->shape == Shape{257, 64});

    for (const char* name : {"vit-b16", "vit-l16"}) {
        auto big = model_preset(name);
        int seen = 0;
        for (const auto& [stage, shape] : shape_trace(big))
            if (stage.rfind("hook_block", 0) == 0) {
                CHECK(shape == Shape{577, big.encoder.embed_dim});
                ++seen;
            }
        CHECK(seen == 5);
    }
}

TEST_CASE("encoder is deterministic for a fixed seed") {
    auto run = [] {
        auto cfg = tiny_config();
        SeededRng rng(7);
        ParameterSet params;
        init_encoder_params(cfg, params, rng);
        auto image = rand_tensor({1, 8, 8}, rng);
        return encode_with_hooks(image, cfg, params).back()->values;
    };
    CHECK(run() == run());
}

TEST_CASE("block gradients survive a finite-difference probe") {
    EncoderConfig cfg = tiny_config();
    SeededRng rng(8);
    ParameterSet params;
    init_encoder_params(cfg, params, rng);
    fill_params(params, rng);
    auto x = rand_tensor({4, 4}, rng);
    x->requires_grad = true;

    auto loss = [&] { return o::sum(transformer_block(x, cfg, params, "encoder.block2")); };
    CHECK(finite_diff_param(loss, x, 1e-5) < 1e-4);
    CHECK(finite_diff_param(loss, params.at("encoder.block2.attn.wq.weight"), 1e-5) < 1e-4);
    CHECK(finite_diff_param(loss, params.at("encoder.block2.mlp.fc1.weight"), 1e-5) < 1e-4);
    CHECK(finite_diff_param(loss, params.at("encoder.block2.ln1.gain"), 1e-5) < 1e-4);
}
