#include "s3kit/numeric.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>

#include "s3kit/rng.hpp"

namespace s3kit {
namespace {

namespace fs = std::filesystem;

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

BinaryMask random_mask(Rng& rng, int h, int w, double density = 0.4) {
    BinaryMask m = BinaryMask::zeros({h, w});
    for (auto& b : m.bits) b = rng.bernoulli(density) ? 1 : 0;
    return m;
}

TEST(ResizeMaskTest, IdentityAndCheckerboard) {
    Rng rng(1);
    const BinaryMask m = random_mask(rng, 7, 5);
    const Tensor same = resize_mask_nearest(m, 7, 5);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 5; ++x) EXPECT_EQ(same.at(0, y, x), m.at(y, x) ? 1.0 : 0.0);

    BinaryMask checker = BinaryMask::zeros({2, 2});
    checker.set(0, 0, true);
    checker.set(1, 1, true);
    const Tensor up = resize_mask_nearest(checker, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            EXPECT_EQ(up.at(0, y, x), checker.at(y / 2, x / 2) ? 1.0 : 0.0);
}

TEST(ResizeMaskTest, HalvingFollowsCenterFormula) {
    Rng rng(2);
    const BinaryMask m = random_mask(rng, 112, 112);
    const Tensor half = resize_mask_nearest(m, 56, 56);
    for (int y = 0; y < 56; ++y)
        for (int x = 0; x < 56; ++x) {
            const int sy = static_cast<int>((y + 0.5) * 112.0 / 56.0);  // = 2y + 1
            const int sx = static_cast<int>((x + 0.5) * 112.0 / 56.0);
            EXPECT_EQ(sy, 2 * y + 1);
            EXPECT_EQ(half.at(0, y, x), m.at(sy, sx) ? 1.0 : 0.0);
        }
}

TEST(MaskAttendTest, IdentityZeroAndElementwise) {
    Rng rng(3);
    const Tensor feat = random_tensor(rng, {3, 4, 5});
    Tensor ones = Tensor::zeros({1, 4, 5});
    for (auto& v : ones.data) v = 1.0;
    EXPECT_EQ(mask_attend(feat, ones), feat);

    const Tensor zeros_mask = Tensor::zeros({1, 4, 5});
    const Tensor zeroed = mask_attend(feat, zeros_mask);
    for (const double v : zeroed.data) EXPECT_EQ(v, 0.0);

    Tensor mask = Tensor::zeros({1, 4, 5});
    for (auto& v : mask.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const Tensor out = mask_attend(feat, mask);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 5; ++x)
                EXPECT_EQ(out.at(c, y, x), feat.at(c, y, x) * mask.at(0, y, x));

    // Idempotence in the mask.
    EXPECT_EQ(mask_attend(out, mask), out);
    EXPECT_THROW(mask_attend(feat, Tensor::zeros({1, 3, 5})), ShapeMismatch);
}

TEST(Conv1x1Test, IdentityDoublingAndOracle) {
    Rng rng(4);
    const Tensor x = random_tensor(rng, {3, 4, 4});
    const std::vector<double> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    const std::vector<double> zero3(3, 0.0);
    EXPECT_EQ(conv1x1(x, eye, zero3, 3), x);

    const Tensor single = random_tensor(rng, {1, 3, 3});
    const Tensor doubled = conv1x1(single, {2.0}, {0.0}, 1);
    for (std::size_t i = 0; i < single.data.size(); ++i)
        EXPECT_DOUBLE_EQ(doubled.data[i], 2.0 * single.data[i]);

    // Per-pixel matrix-vector reference.
    const Tensor inp = random_tensor(rng, {4, 3, 2});
    std::vector<double> w(2 * 4);
    std::vector<double> b(2);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const Tensor out = conv1x1(inp, w, b, 2);
    for (int o = 0; o < 2; ++o)
        for (int y = 0; y < 3; ++y)
            for (int x2 = 0; x2 < 2; ++x2) {
                double ref = b[o];
                for (int c = 0; c < 4; ++c) ref += w[o * 4 + c] * inp.at(c, y, x2);
                EXPECT_DOUBLE_EQ(out.at(o, y, x2), ref);
            }
}

TEST(Conv1x1Test, LinearityWithZeroBias) {
    Rng rng(5);
    const Tensor x = random_tensor(rng, {3, 4, 4});
    const Tensor y = random_tensor(rng, {3, 4, 4});
    std::vector<double> w(2 * 3);
    for (auto& v : w) v = rng.uniform(-1, 1);
    const std::vector<double> zero(2, 0.0);
    const double a = 1.25, b = -0.5;
    Tensor combo = Tensor::zeros({3, 4, 4});
    for (std::size_t i = 0; i < combo.data.size(); ++i)
        combo.data[i] = a * x.data[i] + b * y.data[i];
    const Tensor lhs = conv1x1(combo, w, zero, 2);
    const Tensor rx = conv1x1(x, w, zero, 2);
    const Tensor ry = conv1x1(y, w, zero, 2);
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        EXPECT_NEAR(lhs.data[i], a * rx.data[i] + b * ry.data[i], 1e-12);
}

TEST(PoolNormalizeAffineTest, Basics) {
    Tensor constant = Tensor::zeros({2, 3, 3});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            constant.at(0, y, x) = 2.5;
            constant.at(1, y, x) = -1.0;
        }
    const auto pooled = global_avg_pool(constant);
    EXPECT_DOUBLE_EQ(pooled[0], 2.5);
    EXPECT_DOUBLE_EQ(pooled[1], -1.0);

    const std::vector<double> unit = {1.0, 0.0, 0.0};
    EXPECT_EQ(l2_normalize(unit), unit);
    Rng rng(6);
    std::vector<double> v = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), 1.0};
    EXPECT_NEAR(norm2(l2_normalize(v)), 1.0, 1e-12);
    EXPECT_THROW(l2_normalize(std::vector<double>(4, 0.0)), ZeroVector);

    // Random affine against a dot-product reference.
    std::vector<double> w(3 * 4), b(3), x(4);
    for (auto& q : w) q = rng.uniform(-1, 1);
    for (auto& q : b) q = rng.uniform(-1, 1);
    for (auto& q : x) q = rng.uniform(-1, 1);
    const auto out = affine(x, w, b);
    for (int o = 0; o < 3; ++o) {
        double ref = b[o];
        for (int i = 0; i < 4; ++i) ref += w[o * 4 + i] * x[i];
        EXPECT_DOUBLE_EQ(out[o], ref);
    }
}

TEST(AdaptivePoolTest, BlockMeansAndIdentity) {
    Rng rng(7);
    const Tensor x = random_tensor(rng, {2, 4, 6});
    const Tensor same = adaptive_avg_pool(x, 4, 6);
    EXPECT_EQ(same, x);

    const Tensor down = adaptive_avg_pool(x, 2, 3);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 2; ++y)
            for (int xx = 0; xx < 3; ++xx) {
                double ref = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) ref += x.at(c, 2 * y + dy, 2 * xx + dx);
                EXPECT_DOUBLE_EQ(down.at(c, y, xx), ref / 4.0);
            }
}

TEST(FiniteDiffTest, SumAndQuadraticGradients) {
    Rng rng(8);
    const Tensor x = random_tensor(rng, {2, 3, 2});

    const auto sum = [](const Tensor& t) {
        double acc = 0.0;
        for (const double v : t.data) acc += v;
        return acc;
    };
    const Tensor g1 = finite_diff_grad(sum, x);
    for (const double v : g1.data) EXPECT_NEAR(v, 1.0, 1e-8);

    const auto half_sq = [](const Tensor& t) {
        double acc = 0.0;
        for (const double v : t.data) acc += 0.5 * v * v;
        return acc;
    };
    const Tensor g2 = finite_diff_grad(half_sq, x);
    for (std::size_t i = 0; i < x.data.size(); ++i) EXPECT_NEAR(g2.data[i], x.data[i], 1e-8);

    const auto bad = [](const Tensor&) { return std::numeric_limits<double>::quiet_NaN(); };
    EXPECT_THROW(finite_diff_grad(bad, x), NonFiniteValue);
}

TEST(DeterminismTest, ForwardOpsAreBitStable) {
    Rng rng(9);
    const Tensor x = random_tensor(rng, {3, 5, 4});
    std::vector<double> w(2 * 3), b(2);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    EXPECT_EQ(conv1x1(x, w, b, 2), conv1x1(x, w, b, 2));
    EXPECT_EQ(global_avg_pool(x), global_avg_pool(x));
    const BinaryMask m = random_mask(rng, 5, 4);
    EXPECT_EQ(resize_mask_nearest(m, 3, 3), resize_mask_nearest(m, 3, 3));
}

TEST(PyramidIoTest, RoundTripAndLayout) {
    Rng rng(10);
    FeaturePyramid p;
    p.levels.push_back(random_tensor(rng, {2, 8, 8}));
    p.levels.push_back(random_tensor(rng, {3, 4, 4}));
    // float32 payloads: round values so the f64 -> f32 -> f64 trip is exact
    for (auto& level : p.levels)
        for (auto& v : level.data) v = static_cast<double>(static_cast<float>(v));

    const std::string path =
        (fs::temp_directory_path() / ("s3kit_pyr_" + std::to_string(::getpid()) + ".s3t")).string();
    save_pyramid(p, path);
    const FeaturePyramid back = load_pyramid(path);
    EXPECT_EQ(back, p);

    // Hand-decoded header: magic, level count, then rank/dims per level.
    std::ifstream in(path, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    EXPECT_EQ(std::string(magic, 4), "S3T1");
    std::uint32_t level_count, rank, d0, d1, d2;
    in.read(reinterpret_cast<char*>(&level_count), 4);
    EXPECT_EQ(level_count, 2u);
    in.read(reinterpret_cast<char*>(&rank), 4);
    EXPECT_EQ(rank, 3u);
    in.read(reinterpret_cast<char*>(&d0), 4);
    in.read(reinterpret_cast<char*>(&d1), 4);
    in.read(reinterpret_cast<char*>(&d2), 4);
    EXPECT_EQ(d0, 2u);
    EXPECT_EQ(d1, 8u);
    EXPECT_EQ(d2, 8u);
    fs::remove(path);

    EXPECT_THROW(load_pyramid(path), IoError);
}

TEST(PyramidTest, LevelOrderValidation) {
    Rng rng(11);
    FeaturePyramid bad;
    bad.levels.push_back(random_tensor(rng, {2, 4, 4}));
    bad.levels.push_back(random_tensor(rng, {2, 8, 8}));  // heights must decrease
    EXPECT_THROW(validate(bad), ShapeMismatch);
}

}  // namespace
}  // namespace s3kit
