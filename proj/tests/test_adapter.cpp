#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "vlg/adapter.hpp"

using namespace vlg;

namespace {

TextEmbeddingBank random_bank(int k, int d, Rng& rng) {
    TextEmbeddingBank bank;
    bank.dim = d;
    for (int j = 0; j < k; ++j) {
        bank.class_names.push_back("class_" + std::to_string(j));
        for (int c = 0; c < d; ++c) bank.embeddings.push_back(static_cast<float>(rng.normal()));
    }
    bank.validate();
    return bank;
}

TextEmbeddingBank orthonormal_bank(int k, int d) {
    TextEmbeddingBank bank;
    bank.dim = d;
    bank.embeddings.assign(static_cast<std::size_t>(k) * d, 0.0f);
    for (int j = 0; j < k; ++j) {
        bank.class_names.push_back("class_" + std::to_string(j));
        bank.embeddings[static_cast<std::size_t>(j * d + j)] = 1.0f;
    }
    bank.validate();
    return bank;
}

// Independent plain-loop evaluation of the residual adapter for one row.
std::vector<double> adapter_row_oracle(const std::vector<double>& x, const AdapterParams& p) {
    std::vector<double> z1(static_cast<std::size_t>(p.hidden));
    for (int j = 0; j < p.hidden; ++j) {
        double s = p.b1[static_cast<std::size_t>(j)];
        for (int c = 0; c < p.dim; ++c)
            s += p.w1[static_cast<std::size_t>(j * p.dim + c)] * x[static_cast<std::size_t>(c)];
        z1[static_cast<std::size_t>(j)] = std::max(0.0, s);
    }
    std::vector<double> out(static_cast<std::size_t>(p.dim));
    for (int c = 0; c < p.dim; ++c) {
        double s = p.b2[static_cast<std::size_t>(c)];
        for (int j = 0; j < p.hidden; ++j)
            s += p.w2[static_cast<std::size_t>(c * p.hidden + j)] * z1[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(c)] =
            p.alpha * s + (1.0 - p.alpha) * x[static_cast<std::size_t>(c)];
    }
    return out;
}

// Element-by-element softmax cross-entropy oracle over cosine logits.
double ce_oracle(const std::vector<double>& adapted, std::int64_t n,
                 const TextEmbeddingBank& bank, const std::vector<std::int32_t>& labels,
                 double temperature) {
    const int d = bank.dim, k = bank.num_classes();
    double loss = 0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] == kIgnoreLabel) continue;
        double na = 0;
        for (int c = 0; c < d; ++c)
            na += adapted[static_cast<std::size_t>(i * d + c)] *
                  adapted[static_cast<std::size_t>(i * d + c)];
        na = std::sqrt(na);
        std::vector<double> logits(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) {
            double nb = 0, dot = 0;
            for (int c = 0; c < d; ++c) {
                nb += static_cast<double>(bank.row(j)[c]) * bank.row(j)[c];
                dot += adapted[static_cast<std::size_t>(i * d + c)] * bank.row(j)[c];
            }
            logits[static_cast<std::size_t>(j)] = dot / (na * std::sqrt(nb)) / temperature;
        }
        double z = 0;
        for (int j = 0; j < k; ++j) z += std::exp(logits[static_cast<std::size_t>(j)]);
        loss += std::log(z) - logits[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        ++count;
    }
    return loss / static_cast<double>(count);
}

}  // namespace

TEST_CASE("alpha = 0 makes the adapter the identity") {
    Rng rng(1);
    AdapterParams p = init_adapter(4, 8, 0.0, rng);
    const std::vector<double> x = {1.5, -2.0, 0.25, 7.0, 0.0, 1.0, -1.0, 3.0};
    const auto out = adapter_forward(x, 2, {}, p);
    CHECK(out == x);
}

TEST_CASE("alpha = 0.5 with zero weights halves the input") {
    Rng rng(1);
    AdapterParams p = init_adapter(3, 3, 0.5, rng);
    std::fill(p.w1.begin(), p.w1.end(), 0.0);
    std::fill(p.w2.begin(), p.w2.end(), 0.0);
    const std::vector<double> x = {2.0, -4.0, 6.0};
    const auto out = adapter_forward(x, 1, {}, p);
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[1] == doctest::Approx(-2.0));
    CHECK(out[2] == doctest::Approx(3.0));
}

TEST_CASE("invalid rows pass through as zeros") {
    Rng rng(2);
    AdapterParams p = init_adapter(2, 4, 0.7, rng);
    p.b2 = {5.0, 5.0};  // would leak into invalid rows without the mask
    const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    const std::vector<std::uint8_t> valid = {0, 1};
    const auto out = adapter_forward(x, 2, valid, p);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] != 0.0);
}

TEST_CASE("adapter_forward matches the scalar-loop oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = rng.uniform_int(2, 8);
        const int h = rng.uniform_int(2, 16);
        AdapterParams p = init_adapter(d, h, rng.uniform(0.0, 1.0), rng);
        for (auto& b : p.b1) b = rng.normal();
        for (auto& b : p.b2) b = rng.normal();
        std::vector<double> x(static_cast<std::size_t>(d));
        for (auto& v : x) v = rng.normal();
        const auto got = adapter_forward(x, 1, {}, p);
        const auto expected = adapter_row_oracle(x, p);
        for (int c = 0; c < d; ++c)
            CHECK(got[static_cast<std::size_t>(c)] ==
                  doctest::Approx(expected[static_cast<std::size_t>(c)]).epsilon(1e-9));
    }
}

TEST_CASE("uniform logits give ln K loss") {
    const auto bank = orthonormal_bank(2, 3);
    // adapted row orthogonal to both bank rows -> cosine logits (0, 0)
    const std::vector<double> adapted = {0.0, 0.0, 1.0};
    const std::vector<std::int32_t> labels = {0};
    const auto res = specialization_loss(adapted, 1, bank, labels, 1.0);
    CHECK(res.loss == doctest::Approx(std::log(2.0)));
    CHECK(res.logits[0] == doctest::Approx(0.0));
    CHECK(res.logits[1] == doctest::Approx(0.0));
}

TEST_CASE("saturated logits give near-zero loss") {
    const auto bank = orthonormal_bank(2, 3);
    const std::vector<double> adapted = {1.0, 0.0, 0.0};  // cosine (1, 0)
    const std::vector<std::int32_t> labels = {0};
    const auto res = specialization_loss(adapted, 1, bank, labels, 0.01);
    CHECK(res.loss < 1e-10);
}

TEST_CASE("specialization loss matches the independent CE oracle") {
    Rng rng(5);
    const int n = 12, k = 4, d = 6;
    const auto bank = random_bank(k, d, rng);
    std::vector<double> adapted(static_cast<std::size_t>(n) * d);
    for (auto& v : adapted) v = rng.normal();
    std::vector<std::int32_t> labels(n);
    for (auto& l : labels) l = rng.uniform_int(0, k - 1);
    labels[3] = kIgnoreLabel;

    const auto res = specialization_loss(adapted, n, bank, labels, 0.25);
    const double expected = ce_oracle(adapted, n, bank, labels, 0.25);
    CHECK(res.loss == doctest::Approx(expected).epsilon(1e-9));
    CHECK(res.loss >= 0.0);
}

TEST_CASE("loss errors when every point is ignored") {
    const auto bank = orthonormal_bank(2, 2);
    const std::vector<double> adapted = {1.0, 0.0};
    const std::vector<std::int32_t> labels = {kIgnoreLabel};
    CHECK_THROWS_AS(specialization_loss(adapted, 1, bank, labels, 1.0), NumericError);
}

TEST_CASE("gradients vanish at a saturated optimum") {
    const int d = 3;
    const auto bank = orthonormal_bank(2, d);
    Rng rng(6);
    AdapterParams p = init_adapter(d, d, 1.0, rng);
    std::fill(p.w1.begin(), p.w1.end(), 0.0);
    std::fill(p.w2.begin(), p.w2.end(), 0.0);
    p.b2 = {1.0, 0.0, 0.0};  // adapter output sits exactly on the label's embedding
    const std::vector<double> x = {0.2, 0.1, 0.4};
    const std::vector<std::int32_t> labels = {0};
    const auto g = adapter_backward(x, 1, {}, labels, bank, p, 0.01);
    double norm_sq = 0;
    for (const auto* block : {&g.w1, &g.b1, &g.w2, &g.b2})
        for (double v : *block) norm_sq += v * v;
    CHECK(std::sqrt(norm_sq) < 1e-6);
}

TEST_CASE("alpha = 0 blocks every MLP gradient") {
    Rng rng(7);
    AdapterParams p = init_adapter(4, 6, 0.0, rng);
    const auto bank = random_bank(3, 4, rng);
    std::vector<double> x(8);
    for (auto& v : x) v = rng.normal();
    const std::vector<std::int32_t> labels = {0, 2};
    const auto g = adapter_backward(x, 2, {}, labels, bank, p, 0.1);
    for (const auto* block : {&g.w1, &g.b1, &g.w2, &g.b2})
        for (double v : *block) CHECK(v == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(8);
    for (const int d : {4, 8, 16}) {
        for (const int h : {8, 32}) {
            AdapterParams p = init_adapter(d, h, 0.6, rng);
            for (auto& b : p.b1) b = 0.1 * rng.normal();
            for (auto& b : p.b2) b = 0.1 * rng.normal();
            const auto bank = random_bank(5, d, rng);
            const std::int64_t n = 6;
            std::vector<double> x(static_cast<std::size_t>(n) * d);
            for (auto& v : x) v = rng.normal();
            std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
            for (auto& l : labels) l = rng.uniform_int(0, 4);
            const double temperature = 0.05;

            const auto analytic = adapter_backward(x, n, {}, labels, bank, p, temperature);

            const double step = 1e-4;
            auto check_block = [&](std::vector<double>& param, const std::vector<double>& grad) {
                for (std::size_t i = 0; i < param.size(); ++i) {
                    const double orig = param[i];
                    param[i] = orig + step;
                    const double lp =
                        specialization_loss(adapter_forward(x, n, {}, p), n, bank, labels,
                                            temperature)
                            .loss;
                    param[i] = orig - step;
                    const double lm =
                        specialization_loss(adapter_forward(x, n, {}, p), n, bank, labels,
                                            temperature)
                            .loss;
                    param[i] = orig;
                    const double fd = (lp - lm) / (2 * step);
                    const double rel =
                        std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
                    CHECK(rel < 1e-4);
                }
            };
            check_block(p.w1, analytic.w1);
            check_block(p.b1, analytic.b1);
            check_block(p.w2, analytic.w2);
            check_block(p.b2, analytic.b2);
        }
    }
}

namespace {

struct TrainFixture {
    std::vector<FusedEmbeddings> fused;
    std::vector<std::vector<std::int32_t>> labels;
    TextEmbeddingBank bank;
    std::vector<AdapterScene> scenes;
};

// Linearly separable toy set: rows are noisy prototypes.
TrainFixture separable_fixture(std::uint64_t seed) {
    TrainFixture fx;
    const int k = 3, d = 8;
    fx.bank = orthonormal_bank(k, d);
    Rng rng(seed);
    fx.fused.resize(4);
    fx.labels.resize(4);
    for (int s = 0; s < 4; ++s) {
        FusedEmbeddings& f = fx.fused[static_cast<std::size_t>(s)];
        f.size = 120;
        f.dim = d;
        f.embeddings.resize(static_cast<std::size_t>(f.size) * d);
        f.valid.assign(static_cast<std::size_t>(f.size), 1);
        f.view_counts.assign(static_cast<std::size_t>(f.size), 1);
        auto& labels = fx.labels[static_cast<std::size_t>(s)];
        labels.resize(static_cast<std::size_t>(f.size));
        for (std::int64_t i = 0; i < f.size; ++i) {
            const int cls = rng.uniform_int(0, k - 1);
            labels[static_cast<std::size_t>(i)] = cls;
            for (int c = 0; c < d; ++c)
                f.embeddings[static_cast<std::size_t>(i * d + c)] =
                    static_cast<float>((c == cls ? 1.0 : 0.0) + 0.1 * rng.normal());
        }
    }
    for (int s = 0; s < 4; ++s)
        fx.scenes.push_back({&fx.fused[static_cast<std::size_t>(s)],
                             &fx.labels[static_cast<std::size_t>(s)]});
    return fx;
}

}  // namespace

TEST_CASE("training reaches 0.99 accuracy on a separable set") {
    TrainFixture fx = separable_fixture(404);
    AdapterTrainConfig cfg;
    cfg.epochs = 120;
    cfg.seed = 9;
    const auto result = train_adapter(fx.scenes, fx.bank, cfg);
    REQUIRE(result.loss_curve.size() == 120);
    CHECK(result.loss_curve.back() < result.loss_curve.front());

    std::int64_t correct = 0, total = 0;
    for (std::size_t s = 0; s < fx.scenes.size(); ++s) {
        const FusedEmbeddings& f = fx.fused[s];
        std::vector<double> rows(f.embeddings.begin(), f.embeddings.end());
        const auto adapted = adapter_forward(rows, f.size, f.valid, result.params);
        const auto res = specialization_loss(adapted, f.size, fx.bank, fx.labels[s], 0.01);
        for (std::int64_t i = 0; i < f.size; ++i) {
            std::int32_t best = 0;
            for (int j = 1; j < fx.bank.num_classes(); ++j)
                if (res.logits[static_cast<std::size_t>(i * fx.bank.num_classes() + j)] >
                    res.logits[static_cast<std::size_t>(i * fx.bank.num_classes() + best)])
                    best = j;
            correct += best == fx.labels[s][static_cast<std::size_t>(i)];
            ++total;
        }
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("same seed gives bit-identical trajectories; bank stays frozen") {
    TrainFixture fx = separable_fixture(505);
    const std::vector<float> bank_before = fx.bank.embeddings;
    AdapterTrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 11;
    const auto a = train_adapter(fx.scenes, fx.bank, cfg);
    const auto b = train_adapter(fx.scenes, fx.bank, cfg);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.params.w1 == b.params.w1);
    CHECK(a.params.b1 == b.params.b1);
    CHECK(a.params.w2 == b.params.w2);
    CHECK(a.params.b2 == b.params.b2);
    CHECK(fx.bank.embeddings == bank_before);
}

TEST_CASE("adapter checkpoints round-trip through disk") {
    Rng rng(12);
    AdapterParams p = init_adapter(4, 8, 0.3, rng);
    const auto dir = test::temp_dir("adapter_ckpt");
    save_adapter(p, dir / "ckpt", R"({"seed": 3})");
    const AdapterParams back = load_adapter(dir / "ckpt");
    CHECK(back.dim == p.dim);
    CHECK(back.hidden == p.hidden);
    CHECK(back.alpha == doctest::Approx(p.alpha));
    for (std::size_t i = 0; i < p.w1.size(); ++i)
        CHECK(back.w1[i] == doctest::Approx(p.w1[i]).epsilon(1e-6));
    CHECK_THROWS_AS(load_adapter(dir / "missing"), MissingArtifactError);
}
