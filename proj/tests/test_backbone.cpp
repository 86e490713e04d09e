#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "genrec/backbone.hpp"
#include "genrec/common.hpp"
#include "genrec/model.hpp"
#include "genrec/nn.hpp"
#include "genrec/semantic.hpp"

using namespace genrec;
using namespace genrec::backbone;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.width = 16;
    cfg.heads = 2;
    cfg.seq_len = 8;
    cfg.vocab = 12;
    cfg.graph_dim = 3;
    cfg.lang_dim = 3;
    cfg.ann_dim = 2;
    cfg.ctx_cards = {3, 2, 2};
    cfg.precision = Precision::f64;
    return cfg;
}

semantic::FeatureTable make_features(const ModelConfig& cfg, int rows, std::uint64_t seed) {
    semantic::FeatureTable feats;
    feats.rows = rows;
    feats.dim = cfg.feat_dim();
    feats.data.resize(static_cast<size_t>(rows) * static_cast<size_t>(feats.dim));
    Rng rng(seed);
    for (double& x : feats.data) x = 0.3 * rng.normal();
    return feats;
}

EventWindow random_window(const ModelConfig& cfg, int len, std::uint64_t seed) {
    Rng rng(seed);
    EventWindow window;
    for (int t = 0; t < len; ++t) {
        const int item = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab)));
        std::array<int, 3> ctx;
        for (int f = 0; f < 3; ++f)
            ctx[static_cast<size_t>(f)] = static_cast<int>(
                rng.below(static_cast<std::uint64_t>(cfg.ctx_cards[static_cast<size_t>(f)])));
        window.push(item, false, ctx);
    }
    return window;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

// Test-local layer norm so the oracle does not lean on the implementation.
std::vector<double> ln_ref(const std::vector<double>& x, const Tensor& g, const Tensor& b) {
    const int d = static_cast<int>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= d;
    const double rstd = 1.0 / std::sqrt(var + 1e-5);
    std::vector<double> y(x.size());
    for (int i = 0; i < d; ++i) y[static_cast<size_t>(i)] = g.v[static_cast<size_t>(i)] * ((x[static_cast<size_t>(i)] - mean) * rstd) + b.v[static_cast<size_t>(i)];
    return y;
}

std::vector<double> affine_ref(const std::vector<double>& x, const Tensor& w, const Tensor& b) {
    const int in = w.shape[0], out = w.shape[1];
    std::vector<double> y(static_cast<size_t>(out));
    for (int o = 0; o < out; ++o) {
        double acc = b.v.empty() ? 0.0 : b.v[static_cast<size_t>(o)];
        for (int i = 0; i < in; ++i) acc += x[static_cast<size_t>(i)] * w.v[static_cast<size_t>(i * out + o)];
        y[static_cast<size_t>(o)] = acc;
    }
    return y;
}

}  // namespace

TEST_CASE("parameter accounting matches the closed forms") {
    // Backbone-only count at the reference shape: L(12 d^2 + 13 d) + 2 d.
    ModelConfig big;
    big.layers = 6;
    big.width = 1024;
    big.heads = 16;
    big.seq_len = 512;
    big.vocab = 1000;
    CHECK(param_count(big, Scope::backbone) == 75'579'392);
    const std::int64_t closed =
        6LL * (12LL * 1024 * 1024 + 13LL * 1024) + 2LL * 1024;
    CHECK(param_count(big, Scope::backbone) == closed);

    // The ID table alone: V x E.
    ModelConfig med;
    med.vocab = 1000;
    med.width = 32;
    med.heads = 2;
    for (const auto& spec : tensor_layout(med)) {
        if (spec.name == "embed.id") {
            CHECK(spec.size() == 32'000);
            CHECK(spec.shape == std::vector<int>{1000, 32});
        }
    }

    // Scopes partition the tensor set exactly.
    for (const ModelConfig& cfg : {small_config(), med, big}) {
        const auto total = param_count_total(cfg);
        CHECK(total == param_count(cfg, Scope::backbone) + param_count(cfg, Scope::embeddings) +
                           param_count(cfg, Scope::decoding));
        std::int64_t by_layout = 0;
        for (const auto& spec : tensor_layout(cfg)) by_layout += spec.size();
        CHECK(total == by_layout);
        ParamSet params = ParamSet::zeros(cfg);
        std::int64_t stored = 0;
        for (const auto& t : params.tensors()) stored += t.size();
        CHECK(stored == total);
    }

    // The adapter appears exactly when the embed dim differs from the width.
    ModelConfig pinned = small_config();
    pinned.embed_dim = 8;
    CHECK(ParamSet::zeros(pinned).has("embed.adapter"));
    CHECK(!ParamSet::zeros(small_config()).has("embed.adapter"));

    ModelConfig bad = small_config();
    bad.layers = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.width = 12;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_config();
    bad.heads = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("embedding is the sum of id, semantic, and context rows") {
    ModelConfig cfg = small_config();
    cfg.layers = 1;
    const int e = cfg.emb();
    ParamSet params = ParamSet::zeros(cfg);
    const semantic::FeatureTable feats = make_features(cfg, cfg.vocab + 2, 4);

    auto& id_table = params.at("embed.id");
    for (std::int64_t i = 0; i < id_table.size(); ++i)
        id_table.v[static_cast<size_t>(i)] = static_cast<double>(i) * 0.01;

    EventWindow window;
    window.push(3, false, {0, 0, 0});
    std::vector<double> tokens;

    // Zero semantic and context tensors: the token is exactly the ID row.
    embed_events(cfg, params, window, feats, tokens);
    REQUIRE(static_cast<int>(tokens.size()) == cfg.width);
    for (int i = 0; i < e; ++i)
        CHECK(tokens[static_cast<size_t>(i)] == id_table.v[static_cast<size_t>(3 * e + i)]);

    // OOV routing replaces the ID row with the shared OOV vector.
    auto& oov = params.at("embed.oov");
    for (int i = 0; i < e; ++i) oov.v[static_cast<size_t>(i)] = 5.0 + i;
    EventWindow masked;
    masked.push(3, true, {0, 0, 0});
    embed_events(cfg, params, masked, feats, tokens);
    for (int i = 0; i < e; ++i) CHECK(tokens[static_cast<size_t>(i)] == 5.0 + i);

    // Cold ids (>= vocab) must be explicitly routed.
    EventWindow cold;
    cold.push(cfg.vocab + 1, false, {0, 0, 0});
    CHECK_THROWS_AS(embed_events(cfg, params, cold, feats, tokens), DataError);
    cold.oov[0] = 1;
    embed_events(cfg, params, cold, feats, tokens);
    for (int i = 0; i < e; ++i) CHECK(tokens[static_cast<size_t>(i)] == 5.0 + i);

    // Context rows add on top; field offsets are cumulative.
    auto& ctx = params.at("embed.ctx");
    const int field1_offset = cfg.ctx_cards[0];  // first row of field 1
    ctx.v[static_cast<size_t>(field1_offset * e)] = 2.5;
    EventWindow with_ctx;
    with_ctx.push(3, false, {0, 0, 0});
    embed_events(cfg, params, with_ctx, feats, tokens);
    CHECK(tokens[0] == id_table.v[static_cast<size_t>(3 * e)] + 2.5);

    // Semantic projection feeds every token through embed.sem.
    auto& sem_b = params.at("embed.sem.b");
    sem_b.v[1] = -1.25;
    embed_events(cfg, params, with_ctx, feats, tokens);
    CHECK(tokens[1] == id_table.v[static_cast<size_t>(3 * e + 1)] - 1.25);

    // Swapping two events swaps their token rows.
    EventWindow ab = random_window(cfg, 2, 8);
    EventWindow ba;
    ba.push(ab.items[1], ab.oov[1] != 0, ab.ctx[1]);
    ba.push(ab.items[0], ab.oov[0] != 0, ab.ctx[0]);
    ParamSet rich = ParamSet::build(cfg, 17);
    std::vector<double> t_ab, t_ba;
    embed_events(cfg, rich, ab, feats, t_ab);
    embed_events(cfg, rich, ba, feats, t_ba);
    const int d = cfg.width;
    for (int i = 0; i < d; ++i) {
        CHECK(t_ab[static_cast<size_t>(i)] == t_ba[static_cast<size_t>(d + i)]);
        CHECK(t_ab[static_cast<size_t>(d + i)] == t_ba[static_cast<size_t>(i)]);
    }

    // Window length is bounded by seq_len.
    EventWindow too_long = random_window(cfg, cfg.seq_len + 1, 9);
    CHECK_THROWS_AS(embed_events(cfg, params, too_long, feats, tokens), DataError);
}

TEST_CASE("hidden states are causal") {
    ModelConfig cfg = small_config();
    ParamSet params = ParamSet::build(cfg, 5);
    const semantic::FeatureTable feats = make_features(cfg, cfg.vocab, 6);
    const EventWindow window = random_window(cfg, 6, 7);

    std::vector<double> tokens;
    embed_events(cfg, params, window, feats, tokens);

    Cache full_cache, prefix_cache;
    std::vector<double> full, prefix;
    forward(cfg, params, tokens, 6, full_cache, full);

    for (int len = 1; len < 6; ++len) {
        std::vector<double> head(tokens.begin(), tokens.begin() + len * cfg.width);
        forward(cfg, params, head, len, prefix_cache, prefix);
        // Bitwise: position t never reads tokens after t.
        for (int i = 0; i < len * cfg.width; ++i)
            CHECK(prefix[static_cast<size_t>(i)] == full[static_cast<size_t>(i)]);
    }

    // Perturbing a later token leaves earlier positions untouched.
    std::vector<double> bumped = tokens;
    bumped[static_cast<size_t>(4 * cfg.width + 3)] += 1.0;
    Cache cache2;
    std::vector<double> hidden2;
    forward(cfg, params, bumped, 6, cache2, hidden2);
    for (int i = 0; i < 4 * cfg.width; ++i)
        CHECK(hidden2[static_cast<size_t>(i)] == full[static_cast<size_t>(i)]);
    bool changed = false;
    for (int i = 4 * cfg.width; i < 5 * cfg.width; ++i)
        changed = changed || hidden2[static_cast<size_t>(i)] != full[static_cast<size_t>(i)];
    CHECK(changed);
}

TEST_CASE("single-position forward matches a hand-rolled oracle") {
    // With one token, attention weights collapse to 1 and the block reduces
    // to x + Wo v(LN1 x) + FF(LN2 (.)), all checkable with plain loops.
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.seq_len = 4;
    cfg.vocab = 4;
    cfg.ctx_cards = {2, 2, 2};
    cfg.precision = Precision::f64;
    ParamSet params = ParamSet::build(cfg, 23);

    Rng rng(29);
    std::vector<double> tokens(8);
    for (double& x : tokens) x = rng.normal();

    Cache cache;
    std::vector<double> hidden;
    forward(cfg, params, tokens, 1, cache, hidden);
    REQUIRE(hidden.size() == 8);

    std::vector<double> x(8);
    for (int i = 0; i < 8; ++i)
        x[static_cast<size_t>(i)] = tokens[static_cast<size_t>(i)] + params.at("embed.pos").v[static_cast<size_t>(i)];

    const auto n1 = ln_ref(x, params.at("layer.0.ln1.g"), params.at("layer.0.ln1.b"));
    // One position: softmax over {self} is 1, so attention output is v.
    const auto v = affine_ref(n1, params.at("layer.0.attn.wv"), params.at("layer.0.attn.bv"));
    const auto proj = affine_ref(v, params.at("layer.0.attn.wo"), params.at("layer.0.attn.bo"));
    std::vector<double> in2(8);
    for (int i = 0; i < 8; ++i) in2[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + proj[static_cast<size_t>(i)];

    const auto n2 = ln_ref(in2, params.at("layer.0.ln2.g"), params.at("layer.0.ln2.b"));
    auto u1 = affine_ref(n2, params.at("layer.0.ff.w1"), params.at("layer.0.ff.b1"));
    for (double& u : u1) u = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
    const auto ff = affine_ref(u1, params.at("layer.0.ff.w2"), params.at("layer.0.ff.b2"));
    std::vector<double> out(8);
    for (int i = 0; i < 8; ++i) out[static_cast<size_t>(i)] = in2[static_cast<size_t>(i)] + ff[static_cast<size_t>(i)];
    const auto expect = ln_ref(out, params.at("final_ln.g"), params.at("final_ln.b"));

    for (int i = 0; i < 8; ++i)
        CHECK(hidden[static_cast<size_t>(i)] == doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("backward routes nothing from zero upstream and respects causality") {
    ModelConfig cfg = small_config();
    ParamSet params = ParamSet::build(cfg, 31);
    const semantic::FeatureTable feats = make_features(cfg, cfg.vocab, 32);
    const EventWindow window = random_window(cfg, 5, 33);

    std::vector<double> tokens;
    embed_events(cfg, params, window, feats, tokens);
    Cache cache;
    std::vector<double> hidden;
    forward(cfg, params, tokens, 5, cache, hidden);

    ParamSet grads = ParamSet::zeros(cfg);
    std::vector<double> d_tokens(tokens.size(), 0.0);
    std::vector<double> d_hidden(hidden.size(), 0.0);
    backward(cfg, params, cache, d_hidden, grads, d_tokens);
    for (const auto& t : grads.tensors()) CHECK(max_abs(t.v) == 0.0);
    CHECK(max_abs(d_tokens) == 0.0);

    // Upstream only at position 1: tokens after 1 receive no gradient.
    d_hidden[static_cast<size_t>(1 * cfg.width + 2)] = 1.0;
    backward(cfg, params, cache, d_hidden, grads, d_tokens);
    double later = 0.0, earlier = 0.0;
    for (int t = 0; t < 5; ++t) {
        double row = 0.0;
        for (int i = 0; i < cfg.width; ++i)
            row = std::max(row, std::fabs(d_tokens[static_cast<size_t>(t * cfg.width + i)]));
        if (t <= 1)
            earlier = std::max(earlier, row);
        else
            later = std::max(later, row);
    }
    CHECK(later == 0.0);
    CHECK(earlier > 0.0);
}

TEST_CASE("analytic gradients match finite differences") {
    ModelConfig cfg = small_config();
    cfg.embed_dim = 8;  // exercise the adapter path
    ParamSet params = ParamSet::build(cfg, 41);
    const semantic::FeatureTable feats = make_features(cfg, cfg.vocab, 42);
    const EventWindow window = random_window(cfg, 4, 43);

    Rng crng(44);
    std::vector<double> c(static_cast<size_t>(4 * cfg.width));
    for (double& x : c) x = crng.normal();

    // loss(theta) = c . hidden(theta), through embedding and backbone.
    auto loss_at = [&](const ParamSet& p) {
        std::vector<double> tokens, hidden;
        embed_events(cfg, p, window, feats, tokens);
        Cache cache;
        forward(cfg, p, tokens, 4, cache, hidden);
        double acc = 0.0;
        for (size_t i = 0; i < hidden.size(); ++i) acc += c[i] * hidden[i];
        return acc;
    };

    std::vector<double> tokens, hidden;
    embed_events(cfg, params, window, feats, tokens);
    Cache cache;
    forward(cfg, params, tokens, 4, cache, hidden);
    ParamSet grads = ParamSet::zeros(cfg);
    std::vector<double> d_tokens(tokens.size(), 0.0);
    backward(cfg, params, cache, c, grads, d_tokens);
    embed_backward(cfg, params, window, feats, d_tokens, grads);

    const double h = 1e-5;
    Rng pick(45);
    int checked = 0;
    for (auto& tensor : params.tensors()) {
        ParamSet& mutable_params = params;
        Tensor& g = grads.at(tensor.name);
        const int probes = tensor.size() < 6 ? static_cast<int>(tensor.size()) : 6;
        for (int probe = 0; probe < probes; ++probe) {
            const auto idx = static_cast<size_t>(pick.below(static_cast<std::uint64_t>(tensor.size())));
            const double saved = tensor.v[idx];
            mutable_params.at(tensor.name).v[idx] = saved + h;
            const double up = loss_at(mutable_params);
            mutable_params.at(tensor.name).v[idx] = saved - h;
            const double down = loss_at(mutable_params);
            mutable_params.at(tensor.name).v[idx] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = g.v[idx];
            // Absolute slack absorbs FD cancellation noise on parameters with
            // an exactly-zero gradient (e.g. key biases, which softmax cancels).
            CHECK(std::fabs(fd - an) <= 1e-4 * std::max(std::fabs(fd), std::fabs(an)) + 1e-6);
            ++checked;
        }
    }
    CHECK(checked > 100);

    // Unused rows get no gradient: every window item leaves the rest of the
    // ID table untouched.
    const Tensor& id_grad = grads.at("embed.id");
    const int e = cfg.emb();
    for (int id = 0; id < cfg.vocab; ++id) {
        bool used = false;
        for (int t = 0; t < window.len(); ++t) used = used || window.items[static_cast<size_t>(t)] == id;
        if (used) continue;
        double row = 0.0;
        for (int i = 0; i < e; ++i)
            row = std::max(row, std::fabs(id_grad.v[static_cast<size_t>(id * e + i)]));
        CHECK(row == 0.0);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    ModelConfig cfg = small_config();
    cfg.precision = Precision::f32;
    ParamSet params = ParamSet::build(cfg, 51);
    params.snap_to_precision();

    const std::string path = "/tmp/genrec_backbone_ckpt_" + std::to_string(::getpid());
    save_checkpoint(params, "{\"note\":\"rt\"}", path);
    std::string extra;
    const ParamSet back = load_checkpoint(path, &extra);
    CHECK(extra == "{\"note\":\"rt\"}");

    CHECK(model_config_to_json(back.config()) == model_config_to_json(cfg));
    REQUIRE(back.tensors().size() == params.tensors().size());
    for (size_t i = 0; i < params.tensors().size(); ++i) {
        const Tensor& a = params.tensors()[i];
        const Tensor& b = back.tensors()[i];
        CHECK(a.name == b.name);
        CHECK(a.shape == b.shape);
        REQUIRE(a.v.size() == b.v.size());
        for (size_t j = 0; j < a.v.size(); ++j) CHECK(a.v[j] == b.v[j]);
    }

    // f64 checkpoints preserve doubles without snapping.
    ModelConfig cfg64 = small_config();
    ParamSet p64 = ParamSet::build(cfg64, 52);
    save_checkpoint(p64, "", path);
    const ParamSet back64 = load_checkpoint(path);
    for (size_t i = 0; i < p64.tensors().size(); ++i)
        for (size_t j = 0; j < p64.tensors()[i].v.size(); ++j)
            CHECK(p64.tensors()[i].v[j] == back64.tensors()[i].v[j]);

    // Corrupt magic is rejected.
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    CHECK_THROWS_AS(load_checkpoint(path + ".missing"), DataError);
    std::remove(path.c_str());

    // Precision snapping is idempotent and a no-op for f64.
    ParamSet snap64 = ParamSet::build(cfg64, 53);
    const double before = snap64.at("layer.0.attn.wq").v[0];
    snap64.snap_to_precision();
    CHECK(snap64.at("layer.0.attn.wq").v[0] == before);

    ParamSet snap32 = ParamSet::build(cfg, 54);
    snap32.snap_to_precision();
    for (const auto& t : snap32.tensors())
        for (double v : t.v)
            CHECK(static_cast<double>(static_cast<float>(v)) == v);
}
