#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "vlg/evalkit.hpp"
#include "vlg/synth.hpp"

using namespace vlg;

namespace {

TextEmbeddingBank orthonormal_bank(int k, int d) {
    TextEmbeddingBank bank;
    bank.dim = d;
    bank.embeddings.assign(static_cast<std::size_t>(k) * d, 0.0f);
    for (int j = 0; j < k; ++j) {
        bank.class_names.push_back("class_" + std::to_string(j));
        bank.embeddings[static_cast<std::size_t>(j * d + j)] = 1.0f;
    }
    return bank;
}

}  // namespace

TEST_CASE("hand-enumerated confusion matrix") {
    // pred [0,0,1,1] vs gt [0,1,1,1]: IoU = (1/2, 2/3), mIoU = 7/12
    const std::vector<std::int32_t> pred = {0, 0, 1, 1};
    const std::vector<std::int32_t> gt = {0, 1, 1, 1};
    const MetricsReport report = compute_metrics(pred, gt, 2);
    CHECK(report.iou[0] == doctest::Approx(0.5));
    CHECK(report.iou[1] == doctest::Approx(2.0 / 3.0));
    CHECK(report.miou == doctest::Approx(7.0 / 12.0));
    CHECK(report.scored_points == 4);
    // mAcc: recall 1/1 for class 0, 2/3 for class 1
    CHECK(report.macc == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
}

TEST_CASE("perfect prediction scores 1.0") {
    const std::vector<std::int32_t> labels = {0, 1, 2, 1, 0};
    const MetricsReport report = compute_metrics(labels, labels, 3);
    CHECK(report.miou == doctest::Approx(1.0));
    CHECK(report.macc == doctest::Approx(1.0));
}

TEST_CASE("IGNORE ground truth is excluded; all-IGNORE errors") {
    const std::vector<std::int32_t> pred = {0, 1};
    const std::vector<std::int32_t> gt = {0, kIgnoreLabel};
    const MetricsReport report = compute_metrics(pred, gt, 2);
    CHECK(report.scored_points == 1);
    CHECK(report.miou == doctest::Approx(1.0));

    const std::vector<std::int32_t> all_ignored = {kIgnoreLabel, kIgnoreLabel};
    CHECK_THROWS_AS(compute_metrics(pred, all_ignored, 2), NumericError);
}

TEST_CASE("classes absent from gt and pred are excluded from the mean") {
    const std::vector<std::int32_t> pred = {0, 0};
    const std::vector<std::int32_t> gt = {0, 0};
    const MetricsReport report = compute_metrics(pred, gt, 5);
    CHECK(report.scored[0] == 1);
    for (int k = 1; k < 5; ++k) CHECK(report.scored[static_cast<std::size_t>(k)] == 0);
    CHECK(report.miou == doctest::Approx(1.0));
}

TEST_CASE("metric invariances") {
    Rng rng(44);
    const int n = 500, k = 6;
    std::vector<std::int32_t> pred(n), gt(n);
    for (int i = 0; i < n; ++i) {
        pred[static_cast<std::size_t>(i)] = rng.uniform_int(0, k - 1);
        gt[static_cast<std::size_t>(i)] =
            rng.uniform() < 0.1 ? kIgnoreLabel : rng.uniform_int(0, k - 1);
    }
    const MetricsReport base = compute_metrics(pred, gt, k);

    // confusion conservation
    std::int64_t sum = 0;
    for (std::int64_t v : base.confusion) sum += v;
    CHECK(sum == base.scored_points);

    // point-order permutation invariance
    const auto perm = rng.permutation(n);
    std::vector<std::int32_t> pred2(n), gt2(n);
    for (int i = 0; i < n; ++i) {
        pred2[static_cast<std::size_t>(i)] = pred[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        gt2[static_cast<std::size_t>(i)] = gt[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const MetricsReport shuffled = compute_metrics(pred2, gt2, k);
    CHECK(shuffled.miou == doctest::Approx(base.miou));
    CHECK(shuffled.macc == doctest::Approx(base.macc));
    CHECK(shuffled.confusion == base.confusion);
}

TEST_CASE("metrics_json carries the class names") {
    const MetricsReport report = compute_metrics({0, 1}, {0, 1}, 2);
    const std::string json = metrics_json(report, {"chair", "table"});
    CHECK(json.find("\"chair\"") != std::string::npos);
    CHECK(json.find("miou_excludes_absent_classes") != std::string::npos);
}

namespace {

// Encoder stub built by hand: zero pre/post stacks are impossible (widths are
// validated), so craft a single-box scene and rely on infer()'s contract via
// a trained-free net with known outputs instead. For the trivial cases below
// it is enough that logits are cosine of F3D rows vs the bank, so we drive
// infer() indirectly through synthetic embeddings by checking invariances.

}  // namespace

TEST_CASE("infer labels every point with the only class of a 1-class bank") {
    PointCloud cloud;
    cloud.size = 8;
    Rng rng(5);
    for (int i = 0; i < 8; ++i) {
        for (int c = 0; c < 3; ++c) cloud.positions.push_back(static_cast<float>(rng.uniform(0, 1)));
        for (int c = 0; c < 3; ++c) cloud.colors.push_back(static_cast<float>(rng.uniform(0, 1)));
    }
    EncoderConfig cfg;
    cfg.out_dim = 4;
    const auto net = init_encoder<float>(cfg, rng);
    const auto bank = orthonormal_bank(1, 4);
    const SegmentationResult seg = infer(cloud, net, bank);
    for (const std::int32_t label : seg.labels) CHECK(label == 0);
}

TEST_CASE("swapping bank rows permutes predictions consistently") {
    PointCloud cloud;
    cloud.size = 32;
    Rng rng(6);
    for (int i = 0; i < 32; ++i) {
        for (int c = 0; c < 3; ++c) cloud.positions.push_back(static_cast<float>(rng.uniform(0, 2)));
        for (int c = 0; c < 3; ++c) cloud.colors.push_back(static_cast<float>(rng.uniform(0, 1)));
    }
    EncoderConfig cfg;
    cfg.out_dim = 6;
    const auto net = init_encoder<float>(cfg, rng);

    TextEmbeddingBank bank;
    bank.dim = 6;
    for (int j = 0; j < 3; ++j) {
        bank.class_names.push_back("c" + std::to_string(j));
        for (int c = 0; c < 6; ++c) bank.embeddings.push_back(static_cast<float>(rng.normal()));
    }
    const SegmentationResult base = infer(cloud, net, bank);

    TextEmbeddingBank swapped = bank;  // swap rows 0 and 2
    for (int c = 0; c < 6; ++c)
        std::swap(swapped.embeddings[static_cast<std::size_t>(c)],
                  swapped.embeddings[static_cast<std::size_t>(2 * 6 + c)]);
    std::swap(swapped.class_names[0], swapped.class_names[2]);
    const SegmentationResult perm = infer(cloud, net, swapped);
    for (std::int64_t i = 0; i < cloud.size; ++i) {
        const std::int32_t expected = base.labels[static_cast<std::size_t>(i)] == 0   ? 2
                                      : base.labels[static_cast<std::size_t>(i)] == 2 ? 0
                                      : 1;
        CHECK(perm.labels[static_cast<std::size_t>(i)] == expected);
    }

    // positive scaling of bank rows never changes labels
    TextEmbeddingBank scaled = bank;
    for (auto& v : scaled.embeddings) v *= 37.5f;
    const SegmentationResult sc = infer(cloud, net, scaled);
    CHECK(sc.labels == base.labels);
}

TEST_CASE("every mode saturates on a trivial suite with perfect embeddings") {
    // noiseless, uncorrupted, unshifted pixels: all four configurations must
    // reach essentially perfect segmentation
    SynthSpec spec;
    spec.seed = 606;
    spec.train_scenes = 3;
    spec.test_scenes = 1;
    spec.points_per_scene = 900;
    spec.cameras = 4;
    spec.sigma = 0.0;
    spec.corrupt_rate = 0.0;
    spec.visual_shift = 0.0;

    AblationConfig cfg;
    cfg.seeds = {1};
    cfg.adapter.epochs = 80;
    cfg.adapter.temperature = 0.1;
    cfg.distill.iters = 120;
    cfg.distill.batch_scenes = 3;
    cfg.distill.lr = 0.01;
    cfg.distill.temperature = 0.1;
    cfg.distill.workers = 2;

    const AblationReport report = run_ablation(
        [&spec](std::uint64_t seed) {
            SynthSpec seeded = spec;
            seeded.seed = seed;
            SynthSuite synth = generate_suite(seeded);
            EvalSuite suite;
            for (auto& s : synth.train) suite.train.push_back(std::move(s.scene));
            for (auto& s : synth.test) suite.test.push_back(std::move(s.scene));
            suite.bank = std::move(synth.bank);
            return suite;
        },
        cfg);
    REQUIRE(report.rows.size() == 1);
    for (std::size_t m = 0; m < report.modes.size(); ++m) {
        CAPTURE(train_mode_name(report.modes[m]));
        CHECK(report.rows[0][m].miou >= 0.99);
    }

    const std::string md = ablation_markdown(report);
    CHECK(md.find("| seed |") != std::string::npos);
    CHECK(md.find("soft_guidance_adapter") != std::string::npos);
    const std::string js = ablation_json(report);
    CHECK(js.find("\"rows\"") != std::string::npos);
}

TEST_CASE("cross_domain_eval scores against a foreign bank") {
    SynthSpec spec_a;
    spec_a.seed = 301;
    spec_a.train_scenes = 2;
    spec_a.test_scenes = 1;
    spec_a.points_per_scene = 500;
    spec_a.cameras = 3;
    const SynthSuite suite_a = generate_suite(spec_a);

    Rng rng(7);
    EncoderConfig cfg;
    cfg.out_dim = spec_a.dim;
    const auto net = init_encoder<float>(cfg, rng);

    // same-domain call equals plain evaluation
    std::vector<Scene> test_scenes;
    for (const auto& s : suite_a.test) test_scenes.push_back(s.scene);
    const MetricsReport plain = evaluate_encoder(net, test_scenes, suite_a.bank);
    const MetricsReport cross = cross_domain_eval(net, test_scenes, suite_a.bank);
    CHECK(plain.miou == doctest::Approx(cross.miou));
    CHECK(plain.confusion == cross.confusion);

    // foreign domain: fewer classes, different names; only d must match
    SynthSpec spec_b = spec_a;
    spec_b.seed = 302;
    spec_b.classes = {"floor", "table", "chair"};
    spec_b.distractors = {};
    const SynthSuite suite_b = generate_suite(spec_b);
    std::vector<Scene> scenes_b;
    for (const auto& s : suite_b.test) scenes_b.push_back(s.scene);
    const MetricsReport foreign = cross_domain_eval(net, scenes_b, suite_b.bank);
    CHECK(foreign.num_classes == 3);
    CHECK(foreign.scored_points > 0);
}
