#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "vlg/distill.hpp"
#include "vlg/synth.hpp"

using namespace vlg;

namespace {

struct SuiteFixture {
    SynthSpec spec;
    SynthSuite suite;
    std::vector<FusedEmbeddings> fused;
    std::vector<DistillScene> scenes;

    explicit SuiteFixture(std::uint64_t seed, int n_scenes = 3, int points = 700) {
        spec.seed = seed;
        spec.train_scenes = n_scenes;
        spec.test_scenes = 0;
        spec.points_per_scene = points;
        spec.cameras = 3;
        suite = generate_suite(spec);
        for (auto& s : suite.train) fused.push_back(fuse(s.scene.cloud, s.scene.views, 0.05));
        for (std::size_t s = 0; s < suite.train.size(); ++s)
            scenes.push_back({&suite.train[s].scene.cloud, &fused[s],
                              &suite.train[s].scene.scene_labels});
    }
};

DistillConfig fast_config(std::uint64_t seed, int iters = 12) {
    DistillConfig cfg;
    cfg.iters = iters;
    cfg.lr = 0.01;
    cfg.seed = seed;
    cfg.pre_widths = {12};
    cfg.post_widths = {12};
    cfg.k = 8;
    return cfg;
}

}  // namespace

TEST_CASE("soft guidance loss hits the cosine extremes") {
    const std::vector<float> f = {1, 0, 0, 1, -2, 0};
    const std::vector<std::uint8_t> valid = {1, 1, 1};

    SUBCASE("identical rows give zero loss") {
        const auto res = soft_guidance_loss<float>(f, f, valid, 3, 2);
        CHECK(res.loss == doctest::Approx(0.0));
        CHECK(res.counted == 3);
    }
    SUBCASE("orthogonal rows give one") {
        const std::vector<float> t = {0, 1, 1, 0, 0, -2};
        const auto res = soft_guidance_loss<float>(f, t, valid, 3, 2);
        CHECK(res.loss == doctest::Approx(1.0));
    }
    SUBCASE("antiparallel rows give two") {
        std::vector<float> t(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) t[i] = -f[i];
        const auto res = soft_guidance_loss<float>(f, t, valid, 3, 2);
        CHECK(res.loss == doctest::Approx(2.0));
    }
    SUBCASE("positive scaling is free") {
        std::vector<float> t(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) t[i] = 3.0f * f[i];
        const auto res = soft_guidance_loss<float>(f, t, valid, 3, 2);
        CHECK(res.loss <= 1e-6);
    }
}

TEST_CASE("soft guidance loss stays in [0, 2] on fuzzed input") {
    Rng rng(55);
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t n = rng.uniform_int(1, 32);
        const int d = rng.uniform_int(2, 12);
        std::vector<float> f(static_cast<std::size_t>(n) * d), t(static_cast<std::size_t>(n) * d);
        for (auto& v : f) v = static_cast<float>(rng.normal(0, 10));
        for (auto& v : t) v = static_cast<float>(rng.normal(0, 10));
        std::vector<std::uint8_t> valid(static_cast<std::size_t>(n));
        for (auto& v : valid) v = rng.uniform() < 0.8 ? 1 : 0;
        const auto res = soft_guidance_loss<float>(f, t, valid, n, d);
        CHECK(res.loss >= 0.0);
        CHECK(res.loss <= 2.0);
    }
}

TEST_CASE("zero-norm rows are skipped and counted") {
    const std::vector<float> f = {0, 0, 1, 0};
    const std::vector<float> t = {1, 0, 1, 0};
    const std::vector<std::uint8_t> valid = {1, 1};
    const auto res = soft_guidance_loss<float>(f, t, valid, 2, 2);
    CHECK(res.skipped == 1);
    CHECK(res.counted == 1);
    CHECK(res.loss == doctest::Approx(0.0));
}

TEST_CASE("invalid points contribute nothing") {
    const std::vector<float> f = {1, 0, -1, 0};
    const std::vector<float> t = {1, 0, 1, 0};
    const std::vector<std::uint8_t> valid = {1, 0};
    const auto res = soft_guidance_loss<float>(f, t, valid, 2, 2);
    CHECK(res.counted == 1);
    CHECK(res.loss == doctest::Approx(0.0));
}

TEST_CASE("every train mode runs and reduces its loss") {
    SuiteFixture fx(91);
    Rng arng(3);
    AdapterParams adapter = init_adapter(fx.spec.dim, fx.spec.dim, 0.5, arng);

    for (const TrainMode mode :
         {TrainMode::SoftGuidanceAdapter, TrainMode::SoftGuidanceRaw,
          TrainMode::DirectCeFiltered, TrainMode::DirectCeUnfiltered}) {
        CAPTURE(train_mode_name(mode));
        const auto result = train_3d(fx.scenes, fx.suite.bank, &adapter, fast_config(4, 30), mode);
        REQUIRE(result.loss_curve.size() == 30);
        CHECK(result.loss_curve.back() < result.loss_curve.front());
        CHECK(std::isfinite(result.loss_curve.back()));
    }
}

TEST_CASE("adapter-guided mode demands a checkpoint") {
    SuiteFixture fx(92, 1);
    CHECK_THROWS_AS(
        train_3d(fx.scenes, fx.suite.bank, nullptr, fast_config(1), TrainMode::SoftGuidanceAdapter),
        MissingArtifactError);
    // raw soft guidance runs without one
    CHECK_NOTHROW(
        train_3d(fx.scenes, fx.suite.bank, nullptr, fast_config(1, 2), TrainMode::SoftGuidanceRaw));
}

TEST_CASE("the adapter checkpoint is bit-identical before and after train_3d") {
    SuiteFixture fx(93, 2);
    Rng arng(5);
    AdapterParams adapter = init_adapter(fx.spec.dim, fx.spec.dim, 0.5, arng);
    const auto dir = test::temp_dir("frozen_adapter");
    save_adapter(adapter, dir / "ckpt");
    std::vector<std::vector<std::uint8_t>> before;
    for (const char* f : {"w1.tnsr", "b1.tnsr", "w2.tnsr", "b2.tnsr", "meta.json"})
        before.push_back(test::read_file_bytes(dir / "ckpt" / f));

    const AdapterParams loaded = load_adapter(dir / "ckpt");
    (void)train_3d(fx.scenes, fx.suite.bank, &loaded, fast_config(2, 4),
                   TrainMode::SoftGuidanceAdapter);

    std::size_t idx = 0;
    for (const char* f : {"w1.tnsr", "b1.tnsr", "w2.tnsr", "b2.tnsr", "meta.json"})
        CHECK(test::read_file_bytes(dir / "ckpt" / f) == before[idx++]);
}

TEST_CASE("train_3d is deterministic per seed and across worker counts") {
    SuiteFixture fx(94, 4, 400);
    DistillConfig cfg = fast_config(6, 6);
    cfg.batch_scenes = 4;
    const auto a = train_3d(fx.scenes, fx.suite.bank, nullptr, cfg, TrainMode::SoftGuidanceRaw);
    const auto b = train_3d(fx.scenes, fx.suite.bank, nullptr, cfg, TrainMode::SoftGuidanceRaw);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.params.weights == b.params.weights);

    DistillConfig par = cfg;
    par.workers = 2;
    const auto c = train_3d(fx.scenes, fx.suite.bank, nullptr, par, TrainMode::SoftGuidanceRaw);
    CHECK(a.loss_curve == c.loss_curve);
    CHECK(a.params.weights == c.params.weights);
    CHECK(a.params.biases == c.params.biases);
}

TEST_CASE("rigid translation of a scene changes neither supervision nor embeddings") {
    SuiteFixture fx(95, 1, 600);
    const Scene& scene = fx.suite.train[0].scene;

    // translate points and camera poses together; offsets are exactly
    // representable so float rounding cannot leak in
    const Vec3 offset{2.5, -1.25, 3.75};
    Scene moved = scene;
    for (std::int64_t i = 0; i < moved.cloud.size; ++i) {
        moved.cloud.positions[static_cast<std::size_t>(3 * i) + 0] += static_cast<float>(offset.x);
        moved.cloud.positions[static_cast<std::size_t>(3 * i) + 1] += static_cast<float>(offset.y);
        moved.cloud.positions[static_cast<std::size_t>(3 * i) + 2] += static_cast<float>(offset.z);
    }
    Mat4 shift_back;  // world' -> world
    shift_back(0, 3) = -offset.x;
    shift_back(1, 3) = -offset.y;
    shift_back(2, 3) = -offset.z;
    for (View& view : moved.views)
        view.pose.world_to_camera = mat4_mul(view.pose.world_to_camera, shift_back);

    const FusedEmbeddings f0 = fuse(scene.cloud, scene.views, 0.05);
    const FusedEmbeddings f1 = fuse(moved.cloud, moved.views, 0.05);
    REQUIRE(f0.valid == f1.valid);
    for (std::size_t i = 0; i < f0.embeddings.size(); ++i)
        CHECK(std::abs(f0.embeddings[i] - f1.embeddings[i]) <= 1e-6);

    // pseudo labels identical
    const SceneMask mask = make_scene_mask(scene.scene_labels, fx.suite.bank.class_names);
    const auto l0 = pseudo_labels(apply_scene_mask(class_logits(f0, fx.suite.bank),
                                                   fx.suite.bank.num_classes(), mask),
                                  f0.valid, fx.suite.bank.num_classes());
    const auto l1 = pseudo_labels(apply_scene_mask(class_logits(f1, fx.suite.bank),
                                                   fx.suite.bank.num_classes(), mask),
                                  f1.valid, fx.suite.bank.num_classes());
    CHECK(l0.labels == l1.labels);

    // adapter targets identical within float tolerance
    Rng arng(8);
    const AdapterParams adapter = init_adapter(fx.spec.dim, fx.spec.dim, 0.5, arng);
    const std::vector<double> p0(f0.embeddings.begin(), f0.embeddings.end());
    const std::vector<double> p1(f1.embeddings.begin(), f1.embeddings.end());
    const auto a0 = adapter_forward(p0, f0.size, f0.valid, adapter);
    const auto a1 = adapter_forward(p1, f1.size, f1.valid, adapter);
    for (std::size_t i = 0; i < a0.size(); ++i) CHECK(std::abs(a0[i] - a1[i]) <= 1e-6);

    // encoder features are bounding-box relative, so embeddings match too
    Rng erng(9);
    EncoderConfig ecfg;
    ecfg.out_dim = fx.spec.dim;
    const auto net = init_encoder<float>(ecfg, erng);
    const auto e0 = encode_points(scene.cloud, net);
    const auto e1 = encode_points(moved.cloud, net);
    for (std::size_t i = 0; i < e0.size(); ++i) CHECK(std::abs(e0[i] - e1[i]) <= 1e-5);
}

TEST_CASE("mode names round-trip") {
    for (const TrainMode mode :
         {TrainMode::SoftGuidanceAdapter, TrainMode::SoftGuidanceRaw,
          TrainMode::DirectCeFiltered, TrainMode::DirectCeUnfiltered})
        CHECK(parse_train_mode(train_mode_name(mode)) == mode);
    CHECK_THROWS_AS(parse_train_mode("nope"), ConfigError);
}
