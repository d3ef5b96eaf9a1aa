#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "test_helpers.hpp"
#include "vlg/fusion.hpp"
#include "vlg/synth.hpp"

using namespace vlg;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.train_scenes = 2;
    spec.test_scenes = 1;
    spec.points_per_scene = 400;
    spec.cameras = 3;
    spec.width = 48;
    spec.height = 48;
    return spec;
}

void compare_trees(const std::filesystem::path& a, const std::filesystem::path& b) {
    std::vector<std::filesystem::path> rel_a;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(a))
        if (entry.is_regular_file()) rel_a.push_back(std::filesystem::relative(entry.path(), a));
    std::sort(rel_a.begin(), rel_a.end());
    REQUIRE_FALSE(rel_a.empty());
    for (const auto& rel : rel_a) {
        REQUIRE(std::filesystem::exists(b / rel));
        CHECK_MESSAGE(test::read_file_bytes(a / rel) == test::read_file_bytes(b / rel),
                      rel.string());
    }
}

}  // namespace

TEST_CASE("prototypes are near-orthogonal and unit norm") {
    const SynthSpec spec = small_spec(1);
    const TextEmbeddingBank bank = make_prototype_bank(spec);
    REQUIRE(bank.num_classes() == static_cast<int>(spec.classes.size()));
    for (int a = 0; a < bank.num_classes(); ++a) {
        double na = 0;
        for (int c = 0; c < bank.dim; ++c) na += static_cast<double>(bank.row(a)[c]) * bank.row(a)[c];
        CHECK(std::sqrt(na) == doctest::Approx(1.0).epsilon(1e-5));
        for (int b = a + 1; b < bank.num_classes(); ++b) {
            double cosv = 0;
            for (int c = 0; c < bank.dim; ++c)
                cosv += static_cast<double>(bank.row(a)[c]) * bank.row(b)[c];
            CHECK(std::abs(cosv) <= 0.3);
        }
    }
}

TEST_CASE("generation is deterministic: same seed, byte-identical trees") {
    const SynthSpec spec = small_spec(77);
    const auto dir = test::temp_dir("synth_det");
    generate(spec, dir / "a");
    generate(spec, dir / "b");
    compare_trees(dir / "a", dir / "b");
    std::filesystem::remove_all(dir);
}

TEST_CASE("generated scenes load back through the manifest") {
    const SynthSpec spec = small_spec(78);
    const auto dir = test::temp_dir("synth_load");
    const auto suite_path = generate(spec, dir);
    const EvalSuite suite = load_suite(suite_path);
    REQUIRE(suite.train.size() == 2);
    REQUIRE(suite.test.size() == 1);
    CHECK(suite.bank.num_classes() == static_cast<int>(spec.classes.size()));
    const Scene& scene = suite.train[0];
    CHECK(scene.cloud.size == spec.points_per_scene);
    CHECK(scene.views.size() == static_cast<std::size_t>(spec.cameras));
    CHECK(scene.dim == spec.dim);
    CHECK(scene.cloud.has_gt());

    // in-memory generation matches the files
    const SynthSuite mem = generate_suite(spec);
    CHECK(mem.train[0].scene.cloud.positions == scene.cloud.positions);
    CHECK(mem.train[0].scene.views[0].embeddings == scene.views[0].embeddings);
    std::filesystem::remove_all(dir);
}

TEST_CASE("ground truth stays consistent with scene labels; distractors stay out") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const SynthSpec spec = small_spec(seed);
        const SynthSuite suite = generate_suite(spec);
        for (const auto& bundle : {suite.train, suite.test})
            for (const SynthScene& synth : bundle) {
                const Scene& scene = synth.scene;
                for (std::int64_t i = 0; i < scene.cloud.size; ++i) {
                    const std::int32_t gt = scene.cloud.gt_labels[static_cast<std::size_t>(i)];
                    REQUIRE(gt >= 0);
                    REQUIRE(gt < static_cast<std::int32_t>(spec.classes.size()));
                    const std::string& name = spec.classes[static_cast<std::size_t>(gt)];
                    // GT class is in scene_labels
                    CHECK(std::find(scene.scene_labels.begin(), scene.scene_labels.end(), name) !=
                          scene.scene_labels.end());
                    // distractor classes never appear in GT
                    CHECK(std::find(spec.distractors.begin(), spec.distractors.end(), name) ==
                          spec.distractors.end());
                }
            }
    }
}

TEST_CASE("noiseless single-surface scenes give perfect pseudo labels") {
    SynthSpec spec = small_spec(11);
    spec.sigma = 0.0;
    spec.corrupt_rate = 0.0;
    spec.objects_min = 0;
    spec.objects_max = 0;
    spec.wall_probability = 0.0;  // floor only: nothing occludes anything
    const TextEmbeddingBank bank = make_prototype_bank(spec);
    const SynthScene synth = generate_scene(spec, 0, bank);
    const FusedEmbeddings fused = fuse(synth.scene.cloud, synth.scene.views, 0.05);
    const SceneMask mask = make_scene_mask(synth.scene.scene_labels, bank.class_names);
    const auto pl = pseudo_labels(apply_scene_mask(class_logits(fused, bank),
                                                   bank.num_classes(), mask),
                                  fused.valid, bank.num_classes());
    std::int64_t valid = 0;
    for (std::int64_t i = 0; i < fused.size; ++i) {
        if (!fused.valid[static_cast<std::size_t>(i)]) continue;
        ++valid;
        CHECK(pl.labels[static_cast<std::size_t>(i)] ==
              synth.scene.cloud.gt_labels[static_cast<std::size_t>(i)]);
    }
    CHECK(valid > 0);
}

TEST_CASE("oracle_visibility agrees with the fusion pipeline") {
    const SynthSpec spec = small_spec(21);
    const TextEmbeddingBank bank = make_prototype_bank(spec);
    const SynthScene synth = generate_scene(spec, 0, bank);
    const double tau = 0.05;

    std::int64_t agree = 0, total = 0;
    for (std::int64_t i = 0; i < synth.scene.cloud.size; ++i) {
        const Vec3 p = synth.scene.cloud.position(i);
        for (const View& view : synth.scene.views) {
            const Projection proj = project_point(p, view.pose);
            bool pipeline = false;
            if (proj.visible)
                pipeline = occlusion_check(proj, view.depth.data(), view.pose.height,
                                           view.pose.width, tau);
            const bool oracle = oracle_visibility(synth.geometry, view.pose, p, tau);
            agree += pipeline == oracle;
            ++total;
        }
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.999);
}

TEST_CASE("unobstructed frustum points pass the oracle; behind-camera points fail") {
    SynthSceneGeometry geo;
    geo.boxes.push_back({{0, 0, -0.1}, {4, 4, 0}, 0});
    const CameraPose cam = look_at_camera({2, 2, 2}, {2, 2, 0}, 64, 64, 57.6);
    CHECK(oracle_visibility(geo, cam, {2, 2, 0}, 0.05));
    CHECK_FALSE(oracle_visibility(geo, cam, {2, 2, 4}, 0.05));  // behind the camera
}

TEST_CASE("degenerate specs are rejected") {
    SynthSpec spec = small_spec(1);
    spec.cameras = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = small_spec(1);
    spec.distractors = spec.classes;  // nothing left to instantiate
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = small_spec(1);
    spec.dim = 2;  // fewer dims than classes
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    CHECK_THROWS_AS(synth_spec_from_json("{"), ConfigError);
}

TEST_CASE("spec JSON round-trips") {
    SynthSpec spec = small_spec(9);
    spec.sigma = 0.07;
    spec.corrupt_rate = 0.2;
    const SynthSpec back = synth_spec_from_json(synth_spec_to_json(spec));
    CHECK(back.seed == spec.seed);
    CHECK(back.sigma == doctest::Approx(spec.sigma));
    CHECK(back.corrupt_rate == doctest::Approx(spec.corrupt_rate));
    CHECK(back.classes == spec.classes);
    CHECK(back.room[1] == doctest::Approx(spec.room[1]));
}
