#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "umr/common.hpp"
#include "umr/encoder.hpp"

using namespace umr;

namespace {

FeatureVector random_fv(Rng& rng, int64_t feature_dim, int nnz) {
    FeatureVector fv;
    fv.feature_dim = feature_dim;
    std::vector<std::pair<uint32_t, uint32_t>> raw;
    for (int i = 0; i < nnz; ++i)
        raw.emplace_back(uint32_t(rng.below(uint64_t(feature_dim))), 1 + uint32_t(rng.below(4)));
    std::sort(raw.begin(), raw.end());
    for (auto& [idx, c] : raw) {
        if (!fv.entries.empty() && fv.entries.back().first == idx)
            fv.entries.back().second += c;
        else
            fv.entries.emplace_back(idx, c);
    }
    return fv;
}

FeatureVector merge(const FeatureVector& a, const FeatureVector& b) {
    FeatureVector out;
    out.feature_dim = a.feature_dim;
    out.entries = a.entries;
    for (auto& [idx, c] : b.entries) out.entries.emplace_back(idx, c);
    std::sort(out.entries.begin(), out.entries.end());
    FeatureVector dedup;
    dedup.feature_dim = out.feature_dim;
    for (auto& [idx, c] : out.entries) {
        if (!dedup.entries.empty() && dedup.entries.back().first == idx)
            dedup.entries.back().second += c;
        else
            dedup.entries.emplace_back(idx, c);
    }
    return dedup;
}

}  // namespace

TEST_CASE("encode of empty vector is zero") {
    EncoderParams p = init_params(16, 256, 1);
    FeatureVector fv;
    fv.feature_dim = 256;
    Embedding e = encode(p, Side::kQuery, fv);
    REQUIRE(e.size() == 16);
    for (float v : e) CHECK(v == 0.f);
}

TEST_CASE("single entry with count 2 selects twice column i") {
    EncoderParams p = init_params(8, 64, 2);
    FeatureVector fv;
    fv.feature_dim = 64;
    fv.entries = {{5, 2}};
    Embedding e = encode(p, Side::kDocument, fv);
    for (int r = 0; r < 8; ++r)
        CHECK(e[r] == doctest::Approx(2.f * p.w_doc[size_t(r) * 64 + 5]).epsilon(1e-6));
}

TEST_CASE("encode is additive over feature-vector union") {
    Rng rng(7);
    EncoderParams p = init_params(32, 1024, 3);
    for (int trial = 0; trial < 20; ++trial) {
        FeatureVector a = random_fv(rng, 1024, 30);
        FeatureVector b = random_fv(rng, 1024, 30);
        Embedding ea = encode(p, Side::kQuery, a);
        Embedding eb = encode(p, Side::kQuery, b);
        Embedding eboth = encode(p, Side::kQuery, merge(a, b));
        for (int r = 0; r < 32; ++r) {
            double want = double(ea[r]) + double(eb[r]);
            double scale = std::max(1.0, std::abs(want));
            CHECK(std::abs(eboth[r] - want) / scale < 1e-4);
        }
    }
}

TEST_CASE("out-of-range feature index is fatal") {
    EncoderParams p = init_params(4, 16, 4);
    FeatureVector fv;
    fv.feature_dim = 32;
    fv.entries = {{20, 1}};
    CHECK_THROWS_AS(encode(p, Side::kQuery, fv), FatalError);
}

TEST_CASE("score equals independently recomputed dot of embeddings") {
    Rng rng(11);
    EncoderParams p = init_params(16, 512, 5);
    for (int trial = 0; trial < 10; ++trial) {
        FeatureVector q = random_fv(rng, 512, 12);
        FeatureVector d = random_fv(rng, 512, 40);
        double s = score(p, q, d);
        CHECK(s == dot(encode(p, Side::kQuery, q), encode(p, Side::kDocument, d)));
    }
}

TEST_CASE("zero query embedding scores zero") {
    EncoderParams p = init_params(8, 64, 6);
    FeatureVector q;
    q.feature_dim = 64;
    Rng rng(13);
    FeatureVector d = random_fv(rng, 64, 10);
    CHECK(score(p, q, d) == 0.0);
}

TEST_CASE("scaling W_q scales scores and preserves ranking") {
    Rng rng(17);
    EncoderParams p = init_params(8, 128, 7);
    FeatureVector q = random_fv(rng, 128, 8);
    std::vector<FeatureVector> ds;
    for (int i = 0; i < 5; ++i) ds.push_back(random_fv(rng, 128, 15));
    EncoderParams scaled = p;
    for (auto& w : scaled.w_query) w *= 3.f;
    size_t best = 0, best_scaled = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
        double s = score(p, q, ds[i]);
        double s3 = score(scaled, q, ds[i]);
        CHECK(s3 == doctest::Approx(3.0 * s).epsilon(1e-5));
        if (s > score(p, q, ds[best])) best = i;
        if (s3 > score(scaled, q, ds[best_scaled])) best_scaled = i;
    }
    CHECK(best == best_scaled);
}

TEST_CASE("zero gradients with zero weight decay leave params unchanged") {
    EncoderParams p = init_params(4, 32, 8);
    Config cfg;
    cfg.encoder.weight_decay = 0.0;
    OptimizerState opt = init_optimizer(p, cfg);
    EncoderParams before = p;
    EncoderGrads g;
    g.resize_like(p);
    apply_gradients(p, opt, g);
    CHECK(opt.step == 1);
    CHECK(p.w_query == before.w_query);
    CHECK(p.w_doc == before.w_doc);
}

TEST_CASE("one AdamW step matches a hand-computed update") {
    // Single effective parameter: w=0.5, g=0.2, lr=0.01, betas (0.9, 0.999),
    // eps=1e-8, wd=0.1. m=0.02, v=4e-5; bias-corrected mhat=0.2, vhat=0.04;
    // w' = w - lr*wd*w - lr*mhat/(sqrt(vhat)+eps)
    //    = 0.5 - 0.0005 - 0.01*0.2/(0.2+1e-8) = 0.4895 (minus ~5e-10 eps term).
    EncoderParams p;
    p.dim = 1;
    p.feature_dim = 1;
    p.w_query = {0.5f};
    p.w_doc = {0.0f};
    Config cfg;
    cfg.encoder.lr = 0.01;
    cfg.encoder.weight_decay = 0.1;
    OptimizerState opt = init_optimizer(p, cfg);
    EncoderGrads g;
    g.resize_like(p);
    g.w_query[0] = 0.2;
    apply_gradients(p, opt, g);
    CHECK(p.w_query[0] == doctest::Approx(0.48950000005).epsilon(1e-7));
    CHECK(p.w_doc[0] == 0.0f);
}

TEST_CASE("weight decay alone shrinks params by (1 - lr*wd)") {
    EncoderParams p = init_params(4, 16, 9);
    Config cfg;
    cfg.encoder.lr = 0.1;
    cfg.encoder.weight_decay = 0.5;
    OptimizerState opt = init_optimizer(p, cfg);
    EncoderParams before = p;
    EncoderGrads g;
    g.resize_like(p);
    apply_gradients(p, opt, g);
    for (size_t i = 0; i < p.w_query.size(); ++i)
        CHECK(p.w_query[i] == doctest::Approx(before.w_query[i] * 0.95f).epsilon(1e-6));
}

TEST_CASE("non-finite gradients are fatal and name the block") {
    EncoderParams p = init_params(2, 8, 10);
    Config cfg;
    OptimizerState opt = init_optimizer(p, cfg);
    EncoderGrads g;
    g.resize_like(p);
    g.w_doc[3] = std::numeric_limits<double>::quiet_NaN();
    try {
        apply_gradients(p, opt, g);
        FAIL("expected FatalError");
    } catch (const FatalError& e) {
        CHECK(std::string(e.what()).find("W_d") != std::string::npos);
    }
}

TEST_CASE("updates are deterministic") {
    Rng rng(21);
    EncoderParams p1 = init_params(8, 64, 11);
    EncoderParams p2 = p1;
    Config cfg;
    OptimizerState o1 = init_optimizer(p1, cfg), o2 = init_optimizer(p2, cfg);
    EncoderGrads g;
    g.resize_like(p1);
    for (auto& v : g.w_query) v = rng.uniform() - 0.5;
    for (auto& v : g.w_doc) v = rng.uniform() - 0.5;
    apply_gradients(p1, o1, g);
    apply_gradients(p2, o2, g);
    CHECK(p1.w_query == p2.w_query);
    CHECK(p1.w_doc == p2.w_doc);
}

TEST_CASE("init_params is seed-reproducible and seed-sensitive") {
    EncoderParams a = init_params(16, 256, 42);
    EncoderParams b = init_params(16, 256, 42);
    EncoderParams c = init_params(16, 256, 43);
    CHECK(a.w_query == b.w_query);
    CHECK(a.w_doc == b.w_doc);
    CHECK(a.w_query != c.w_query);
}

TEST_CASE("init entries are bounded and centered") {
    int d = 64;
    int64_t F = 2048;  // d*F > 1e5
    EncoderParams p = init_params(d, F, 12);
    double a = std::sqrt(6.0 / (d + 1));
    double sum = 0;
    size_t n = 0;
    for (auto* block : {&p.w_query, &p.w_doc}) {
        for (float v : *block) {
            CHECK(std::abs(v) <= a);
            sum += v;
            ++n;
        }
    }
    double mean = sum / double(n);
    double se = (a / std::sqrt(3.0)) / std::sqrt(double(n));
    CHECK(std::abs(mean) < 3 * se);
}

TEST_CASE("checkpoint round-trips bit-identically") {
    EncoderParams p = init_params(8, 128, 13);
    Config cfg;
    OptimizerState opt = init_optimizer(p, cfg);
    EncoderGrads g;
    g.resize_like(p);
    Rng rng(5);
    for (auto& v : g.w_query) v = rng.uniform() - 0.5;
    apply_gradients(p, opt, g);

    std::string path = (std::filesystem::temp_directory_path() / "umr_ckpt.bin").string();
    save_checkpoint(p, opt, path);
    EncoderParams p2;
    OptimizerState opt2;
    load_checkpoint(path, p2, opt2);
    CHECK(p2.dim == p.dim);
    CHECK(p2.feature_dim == p.feature_dim);
    CHECK(p2.init_seed == p.init_seed);
    CHECK(p2.w_query == p.w_query);
    CHECK(p2.w_doc == p.w_doc);
    CHECK(opt2.step == opt.step);
    CHECK(opt2.m_query == opt.m_query);
    CHECK(opt2.v_doc == opt.v_doc);
    CHECK(params_fingerprint(p2) == params_fingerprint(p));
}

TEST_CASE("loading a corrupt checkpoint is fatal") {
    std::string path = (std::filesystem::temp_directory_path() / "umr_bad_ckpt.bin").string();
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fwrite("NOPE", 1, 4, f);
        std::fclose(f);
    }
    EncoderParams p;
    OptimizerState opt;
    CHECK_THROWS_AS(load_checkpoint(path, p, opt), FatalError);
}
