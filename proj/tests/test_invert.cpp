#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "xgap/corpus.hpp"
#include "xgap/error.hpp"
#include "xgap/invert.hpp"
#include "xgap/rng.hpp"

using namespace xgap;

namespace {

ModelConfig small_config(std::uint64_t seed = 0) {
    ModelConfig cfg;
    cfg.d = 16;
    cfg.vocab_size = 24;
    cfg.text_context_len = 12;
    cfg.num_patches = 16;
    cfg.patch_dim = 48;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.hidden_dim = 32;
    cfg.seed = seed;
    return cfg;
}

Tensor test_image(std::uint64_t seed) {
    Scene s;
    s.shape_id = static_cast<int>(seed % 4);
    s.color_id = static_cast<int>(seed % 3);
    return render_image(s, 16, seed);
}

bool bits_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("nn_repeat_map hand cases") {
    RepeatMap m = nn_repeat_map(2, 4);
    CHECK(m.slot_to_patch == std::vector<int>{0, 0, 1, 1});
    CHECK(m.counts == std::vector<int>{2, 2});

    m = nn_repeat_map(1, 5);
    CHECK(m.slot_to_patch == std::vector<int>{0, 0, 0, 0, 0});
    CHECK(m.counts == std::vector<int>{5});

    m = nn_repeat_map(3, 4);
    CHECK(m.slot_to_patch == std::vector<int>{0, 0, 1, 2});
    CHECK(m.counts == std::vector<int>{2, 1, 1});

    CHECK_THROWS_AS(nn_repeat_map(5, 4), InvalidArgument);
    CHECK_THROWS_AS(nn_repeat_map(0, 4), InvalidArgument);
}

TEST_CASE("nn_repeat_map properties hold exhaustively up to U=64") {
    for (int u = 1; u <= 64; ++u) {
        for (int p = 1; p <= u; ++p) {
            const RepeatMap m = nn_repeat_map(p, u);
            REQUIRE(static_cast<int>(m.slot_to_patch.size()) == u);
            REQUIRE(static_cast<int>(m.counts.size()) == p);
            int sum = 0;
            for (int c : m.counts) {
                sum += c;
                REQUIRE(c >= 1);  // surjective
            }
            REQUIRE(sum == u);
            for (std::size_t j = 1; j < m.slot_to_patch.size(); ++j)
                REQUIRE(m.slot_to_patch[j] >= m.slot_to_patch[j - 1]);  // monotone
            REQUIRE(m.slot_to_patch.front() == 0);
            REQUIRE(m.slot_to_patch.back() == p - 1);
        }
    }
}

TEST_CASE("oti reduces the cosine loss and freezes the encoder") {
    VLModel m = VLModel::init(small_config(1));
    const std::uint64_t digest = m.digest();
    InversionSpec spec;
    spec.count = 1;
    spec.steps = 60;
    spec.template_tokens = {1, 2, 3};
    spec.seed = 0;

    InversionResult r = oti(m, test_image(3), spec);
    REQUIRE(static_cast<int>(r.trajectory.size()) == spec.steps);
    CHECK(r.trajectory.back() < r.trajectory.front());
    for (double v : r.trajectory) {
        CHECK(v >= 0.0);
        CHECK(v <= 2.0);
    }
    CHECK(r.digest_before == digest);
    CHECK(r.digest_after == digest);
    CHECK(m.digest() == digest);
    CHECK(std::fabs(norm(r.feature) - 1.0) < 1e-9);
    CHECK(r.learned.rows() == 1);
    CHECK(r.learned.cols() == 16);
}

TEST_CASE("oti is deterministic and seed-sensitive") {
    VLModel m = VLModel::init(small_config(2));
    InversionSpec spec;
    spec.steps = 20;
    spec.template_tokens = {0, 1};
    InversionResult a = oti(m, test_image(1), spec);
    InversionResult b = oti(m, test_image(1), spec);
    CHECK(bits_equal(a.feature, b.feature));
    CHECK(bits_equal(a.learned, b.learned));
    CHECK(a.trajectory == b.trajectory);

    spec.seed = 99;
    InversionResult c = oti(m, test_image(1), spec);
    CHECK_FALSE(bits_equal(a.learned, c.learned));
}

TEST_CASE("oti rejects an overlong template") {
    VLModel m = VLModel::init(small_config(2));
    InversionSpec spec;
    spec.count = 4;
    spec.template_tokens.assign(10, 1);  // 10 + 4 > 12
    CHECK_THROWS_AS(oti(m, test_image(1), spec), InvalidArgument);
}

TEST_CASE("oti with more pseudo-tokens fits at least as well") {
    VLModel m = VLModel::init(small_config(5));
    InversionSpec spec;
    spec.steps = 120;
    spec.template_tokens = {1, 2, 3};
    spec.count = 1;
    InversionResult r1 = oti(m, test_image(7), spec);
    spec.count = 6;
    InversionResult r6 = oti(m, test_image(7), spec);
    CHECK(r6.trajectory.back() < r1.trajectory.back());
}

TEST_CASE("snapshots are taken at the period and at the end") {
    VLModel m = VLModel::init(small_config(2));
    InversionSpec spec;
    spec.steps = 25;
    spec.snapshot_period = 10;
    spec.template_tokens = {1};
    InversionResult r = oti(m, test_image(2), spec);
    REQUIRE(r.snapshots.size() == 4);  // steps 0, 10, 20, 25
    CHECK(r.snapshots[0].first == 0);
    CHECK(r.snapshots[1].first == 10);
    CHECK(r.snapshots[2].first == 20);
    CHECK(r.snapshots[3].first == 25);
    CHECK(bits_equal(r.snapshots[3].second, r.feature));
}

TEST_CASE("ovi reduces the cosine loss with the encoder frozen") {
    VLModel m = VLModel::init(small_config(3));
    const std::uint64_t digest = m.digest();
    InversionSpec spec;
    spec.count = 1;
    spec.steps = 80;
    InversionResult r = ovi(m, {4, 9, 2}, spec);
    CHECK(r.trajectory.back() < r.trajectory.front());
    CHECK(r.digest_after == digest);
    CHECK(m.digest() == digest);
    for (double v : r.trajectory) {
        CHECK(v >= 0.0);
        CHECK(v <= 2.0);
    }
}

TEST_CASE("ovi with P=U fits at least as well as P=1") {
    VLModel m = VLModel::init(small_config(4));
    InversionSpec spec;
    spec.steps = 150;
    spec.count = 1;
    InversionResult r1 = ovi(m, {3, 5}, spec);
    spec.count = 16;  // P = U
    InversionResult rU = ovi(m, {3, 5}, spec);
    CHECK(rU.trajectory.back() <= r1.trajectory.back());
}

TEST_CASE("ovi rejects P greater than U") {
    VLModel m = VLModel::init(small_config(4));
    InversionSpec spec;
    spec.count = 17;
    CHECK_THROWS_AS(ovi(m, {1}, spec), InvalidArgument);
}

TEST_CASE("parallel inversion drivers match the serial path") {
    VLModel m = VLModel::init(small_config(6));
    InversionSpec spec;
    spec.steps = 15;
    spec.template_tokens = {1, 2};
    std::vector<Tensor> images = {test_image(1), test_image(2), test_image(3)};
    auto many = oti_many(m, images, spec);
    REQUIRE(many.size() == 3);
    for (std::size_t i = 0; i < images.size(); ++i) {
        InversionSpec item = spec;
        item.seed = substream(spec.seed, "q" + std::to_string(i));
        InversionResult solo = oti(m, images[i], item);
        CHECK(bits_equal(solo.feature, many[i].feature));
    }
}

TEST_CASE("adapter learns the identity task") {
    Rng rng(3);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (int i = 0; i < 32; ++i) {
        Tensor x({16});
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng.gaussian();
        x = l2_normalize(x);
        pairs.emplace_back(x, x);
    }
    AdapterHyper hyper;
    hyper.steps = 600;
    hyper.seed = 1;
    Adapter a = train_adapter(pairs, Adapter::Direction::image_to_text, hyper);
    double mean_cos = 0.0;
    for (const auto& [x, y] : pairs) mean_cos += cosine_similarity(apply_adapter(a, x), y);
    mean_cos /= static_cast<double>(pairs.size());
    CHECK(mean_cos > 0.99);
}

TEST_CASE("adapter learns a fixed rotation") {
    Rng rng(5);
    // Givens rotations on a few planes
    auto rotate = [](const Tensor& x) {
        Tensor y = x;
        auto rot = [&y](int i, int j, double th) {
            const double a = y[static_cast<std::size_t>(i)], b = y[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = std::cos(th) * a - std::sin(th) * b;
            y[static_cast<std::size_t>(j)] = std::sin(th) * a + std::cos(th) * b;
        };
        rot(0, 3, 0.7);
        rot(1, 2, -1.1);
        rot(4, 7, 2.0);
        rot(9, 14, 1.3);
        return y;
    };
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (int i = 0; i < 40; ++i) {
        Tensor x({16});
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng.gaussian();
        x = l2_normalize(x);
        pairs.emplace_back(x, rotate(x));
    }
    AdapterHyper hyper;
    hyper.steps = 800;
    hyper.seed = 2;
    Adapter a = train_adapter(pairs, Adapter::Direction::text_to_image, hyper);
    double mean_cos = 0.0;
    for (const auto& [x, y] : pairs) mean_cos += cosine_similarity(apply_adapter(a, x), y);
    mean_cos /= static_cast<double>(pairs.size());
    CHECK(mean_cos > 0.99);
}

TEST_CASE("zero-step adapter stays at initialization") {
    Rng rng(7);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (int i = 0; i < 4; ++i) {
        Tensor x({4});
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng.gaussian();
        pairs.emplace_back(l2_normalize(x), l2_normalize(x));
    }
    AdapterHyper hyper;
    hyper.steps = 0;
    hyper.seed = 9;
    Adapter a = train_adapter(pairs, Adapter::Direction::image_to_text, hyper);
    Rng ref(substream(9, "adapter"));
    Tensor w = Tensor::gaussian({4, 4}, ref, hyper.init_scale);
    CHECK(bits_equal(a.weight, w));
    for (std::size_t k = 0; k < a.bias.size(); ++k) CHECK(a.bias[k] == 0.0);
}

TEST_CASE("apply_adapter output properties") {
    Adapter a;
    a.weight = Tensor({2, 2}, {2, 0, 0, 3});
    a.bias = Tensor({2});
    Tensor x({2}, {1, 0});
    Tensor y = apply_adapter(a, x);
    CHECK(std::fabs(norm(y) - 1.0) < 1e-12);
    // with zero bias the output direction is scale-invariant
    Tensor x2({2}, {0.5, 0.0});
    Tensor y2 = apply_adapter(a, x2);
    CHECK(cosine_similarity(y, y2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(apply_adapter(a, Tensor({3}, {1, 2, 3})), InvalidArgument);
    CHECK_THROWS_AS(train_adapter({{x, x}}, Adapter::Direction::image_to_text, AdapterHyper{}),
                    InvalidArgument);
}

TEST_CASE("combine_features endpoints, midpoint and errors") {
    Tensor i({2}, {1, 0}), t({2}, {0, 1});
    CHECK(bits_equal(combine_features(i, t, 0.0), i));
    CHECK(bits_equal(combine_features(i, t, 1.0), t));
    Tensor mid = combine_features(i, t, 0.5);
    CHECK(mid[0] == doctest::Approx(0.70710678118654746));
    CHECK(mid[1] == doctest::Approx(0.70710678118654746));
    CHECK_THROWS_AS(combine_features(i, t, 1.5), InvalidArgument);
    CHECK_THROWS_AS(combine_features(i, t, -0.1), InvalidArgument);
    Tensor anti({2}, {-1, 0});
    CHECK_THROWS_AS(combine_features(i, anti, 0.5), InvalidArgument);
    Tensor not_unit({2}, {2, 0});
    CHECK_THROWS_AS(combine_features(not_unit, t, 0.5), InvalidArgument);
}
