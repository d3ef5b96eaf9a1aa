#include <doctest.h>

#include "test_helpers.hpp"
#include "vlg/config.hpp"
#include "vlg/scene.hpp"

using namespace vlg;

TEST_CASE("defaults mirror the published schedule") {
    const PipelineConfig c = config_from_json("{}");
    CHECK(c.adapter.lr == doctest::Approx(0.003));
    CHECK(c.adapter.batch == 16);
    CHECK(c.adapter.decay == doctest::Approx(0.7));
    CHECK(c.adapter.decay_every == 20);
    CHECK(c.adapter.epochs == 80);
    CHECK(c.distill.lr == doctest::Approx(0.0001));
    CHECK(c.distill.batch == 8);
    CHECK(c.distill.poly_power == doctest::Approx(0.9));
    CHECK(c.geometry.tau == doctest::Approx(0.05));
}

TEST_CASE("config JSON round-trips and hashes deterministically") {
    PipelineConfig c;
    c.adapter.alpha = 0.25;
    c.seed = 99;
    c.distill.mode = "direct_ce_filtered";
    const std::string json = config_to_json(c);
    const PipelineConfig back = config_from_json(json);
    CHECK(back.adapter.alpha == doctest::Approx(0.25));
    CHECK(back.seed == 99);
    CHECK(back.distill.mode == "direct_ce_filtered");
    CHECK(config_hash_hex(c) == config_hash_hex(back));

    PipelineConfig other = c;
    other.seed = 100;
    CHECK(config_hash_hex(c) != config_hash_hex(other));
}

TEST_CASE("bad config JSON raises ConfigError") {
    CHECK_THROWS_AS(config_from_json("{invalid"), ConfigError);
    CHECK_THROWS_AS(config_from_json(R"({"workers": 0})"), ConfigError);
}

TEST_CASE("run manifests carry no clock-dependent values") {
    const auto dir = test::temp_dir("manifest");
    PipelineConfig c;
    write_run_manifest(dir / "run.json", "fuse", c, {{"fused", "fused/scene_000.tnsr"}});
    const auto a = test::read_file_bytes(dir / "run.json");
    write_run_manifest(dir / "run.json", "fuse", c, {{"fused", "fused/scene_000.tnsr"}});
    const auto b = test::read_file_bytes(dir / "run.json");
    CHECK(a == b);
}

TEST_CASE("scene manifest validation catches schema violations") {
    const auto dir = test::temp_dir("scene_schema");
    // minimal scene: two points, one 1x1 view
    write_tensor(dir / "points.tnsr",
                 Tensor::from_f32({2, 6}, {0, 0, 1, 0.5f, 0.5f, 0.5f, 0, 0, 2, 1, 1, 1}));
    const std::string manifest = R"({
      "points_file": "points.tnsr",
      "class_names": ["a", "b"],
      "scene_labels": ["a"],
      "views": [{
        "embedding_file": "emb.tnsr",
        "intrinsics": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "extrinsics": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]
      }]
    })";
    write_tensor(dir / "emb.tnsr", Tensor::from_f32({1, 1, 4}, {1, 2, 3, 4}));
    {
        std::ofstream out(dir / "manifest.json");
        out << manifest;
    }
    const Scene scene = load_scene(dir / "manifest.json");
    CHECK(scene.cloud.size == 2);
    CHECK(scene.dim == 4);
    CHECK_FALSE(scene.cloud.has_gt());

    // unknown scene label
    {
        std::ofstream out(dir / "manifest.json");
        std::string bad = manifest;
        const auto pos = bad.find("\"scene_labels\": [\"a\"]");
        bad.replace(pos, std::string("\"scene_labels\": [\"a\"]").size(),
                    "\"scene_labels\": [\"zzz\"]");
        out << bad;
    }
    CHECK_THROWS_AS(load_scene(dir / "manifest.json"), ConfigError);

    // missing tensor file
    {
        std::ofstream out(dir / "manifest.json");
        std::string bad = manifest;
        const auto pos = bad.find("points.tnsr");
        bad.replace(pos, std::string("points.tnsr").size(), "absent.tnsr");
        out << bad;
    }
    CHECK_THROWS_AS(load_scene(dir / "manifest.json"), IoError);

    // views disagreeing on embedding dimension
    write_tensor(dir / "emb8.tnsr", Tensor::from_f32({1, 1, 8}, std::vector<float>(8, 1.0f)));
    {
        std::ofstream out(dir / "manifest.json");
        std::string two_views = manifest;
        const std::string view_block = R"({
        "embedding_file": "emb.tnsr",
        "intrinsics": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "extrinsics": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]
      }])";
        const auto pos = two_views.find(view_block);
        REQUIRE(pos != std::string::npos);
        std::string replacement = view_block;
        replacement.pop_back();  // drop ]
        replacement += R"(, {
        "embedding_file": "emb8.tnsr",
        "intrinsics": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "extrinsics": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]
      }])";
        two_views.replace(pos, view_block.size(), replacement);
        out << two_views;
    }
    CHECK_THROWS_AS(load_scene(dir / "manifest.json"), ConfigError);
}
