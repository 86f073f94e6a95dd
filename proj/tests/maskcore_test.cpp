#include "s3kit/maskcore.hpp"

#include <gtest/gtest.h>

#include "s3kit/rng.hpp"

namespace s3kit {
namespace {

BinaryMask random_mask(Rng& rng, int h, int w, double density = 0.4) {
    BinaryMask m = BinaryMask::zeros({h, w});
    for (auto& b : m.bits) b = rng.bernoulli(density) ? 1 : 0;
    return m;
}

TEST(RleTest, EmptyAndFull) {
    BinaryMask empty = BinaryMask::zeros({2, 2});
    EXPECT_EQ(rle_encode(empty).counts, (std::vector<std::uint32_t>{4}));

    BinaryMask full = BinaryMask::zeros({2, 2});
    for (auto& b : full.bits) b = 1;
    EXPECT_EQ(rle_encode(full).counts, (std::vector<std::uint32_t>{0, 4}));

    EXPECT_EQ(rle_decode({{2, 2}, {4}}), empty);
    EXPECT_EQ(rle_decode({{2, 2}, {0, 4}}), full);
}

TEST(RleTest, ColumnMajorScanOrder) {
    // counts [1,2,1] on 2x2: scan positions (r0,c0),(r1,c0),(r0,c1),(r1,c1)
    // -> exactly (row1,col0) and (row0,col1) set.
    const BinaryMask m = rle_decode({{2, 2}, {1, 2, 1}});
    EXPECT_EQ(m.at(0, 0), 0);
    EXPECT_EQ(m.at(1, 0), 1);
    EXPECT_EQ(m.at(0, 1), 1);
    EXPECT_EQ(m.at(1, 1), 0);
}

TEST(RleTest, RoundTripSeededSamples) {
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        const BinaryMask m = random_mask(rng, 16, 16);
        EXPECT_EQ(rle_decode(rle_encode(m)), m);
    }
}

TEST(RleTest, RoundTripPropertyOverGridSizes) {
    Rng rng(7);
    for (int i = 0; i < 300; ++i) {
        const int h = static_cast<int>(rng.uniform_int(1, 64));
        const int w = static_cast<int>(rng.uniform_int(1, 64));
        const BinaryMask m = random_mask(rng, h, w, rng.uniform(0.0, 1.0));
        EXPECT_EQ(rle_decode(rle_encode(m)), m);
    }
}

TEST(RleTest, MalformedCounts) {
    EXPECT_THROW(rle_decode({{2, 2}, {3}}), MalformedRle);      // sum != area
    EXPECT_THROW(rle_decode({{2, 2}, {1, 0, 3}}), MalformedRle);  // interior zero run
    EXPECT_THROW(rle_decode({{2, 2}, {}}), MalformedRle);
}

TEST(MaskIouTest, BasicCases) {
    Rng rng(3);
    const BinaryMask a = random_mask(rng, 8, 8, 0.5);
    EXPECT_DOUBLE_EQ(mask_iou(a, a), 1.0);

    BinaryMask left = BinaryMask::zeros({4, 4});
    BinaryMask top = BinaryMask::zeros({4, 4});
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 2; ++c) left.set(r, c, true);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) top.set(r, c, true);
    // overlap 4 pixels, union 12
    EXPECT_DOUBLE_EQ(mask_iou(left, top), 4.0 / 12.0);

    BinaryMask disjoint = BinaryMask::zeros({4, 4});
    disjoint.set(3, 3, true);
    BinaryMask other = BinaryMask::zeros({4, 4});
    other.set(0, 0, true);
    EXPECT_DOUBLE_EQ(mask_iou(disjoint, other), 0.0);

    const BinaryMask empty = BinaryMask::zeros({4, 4});
    EXPECT_DOUBLE_EQ(mask_iou(empty, empty), 0.0);

    EXPECT_THROW(mask_iou(a, left), SizeMismatch);
}

TEST(MaskIouTest, SymmetryAndSubsetProperty) {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const BinaryMask a = random_mask(rng, 12, 12);
        const BinaryMask b = random_mask(rng, 12, 12);
        EXPECT_DOUBLE_EQ(mask_iou(a, b), mask_iou(b, a));

        // For sub ⊆ b: iou = |sub| / |b|.
        BinaryMask sub = b;
        for (auto& bit : sub.bits)
            if (bit && rng.bernoulli(0.5)) bit = 0;
        if (mask_area(b) > 0)
            EXPECT_DOUBLE_EQ(mask_iou(sub, b),
                             static_cast<double>(mask_area(sub)) / static_cast<double>(mask_area(b)));
    }
}

TEST(BBoxTest, TightHull) {
    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
        BinaryMask m = random_mask(rng, 10, 10, 0.2);
        if (mask_area(m) == 0) m.set(5, 5, true);
        const BBox box = bbox_of(m);
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c)
                if (m.at(r, c)) {
                    EXPECT_GE(c, box.x_min);
                    EXPECT_LT(c, box.x_max);
                    EXPECT_GE(r, box.y_min);
                    EXPECT_LT(r, box.y_max);
                }
        // Minimality: every edge touches a set pixel.
        bool touch_left = false, touch_right = false, touch_top = false, touch_bottom = false;
        for (int r = box.y_min; r < box.y_max; ++r) {
            touch_left |= m.at(r, box.x_min) != 0;
            touch_right |= m.at(r, box.x_max - 1) != 0;
        }
        for (int c = box.x_min; c < box.x_max; ++c) {
            touch_top |= m.at(box.y_min, c) != 0;
            touch_bottom |= m.at(box.y_max - 1, c) != 0;
        }
        EXPECT_TRUE(touch_left && touch_right && touch_top && touch_bottom);
    }
}

TEST(BBoxTest, EmptyMaskErrors) {
    const BinaryMask empty = BinaryMask::zeros({4, 4});
    EXPECT_THROW(bbox_of(empty), EmptyMask);
    EXPECT_THROW(occupancy(empty), EmptyMask);
}

TEST(GeometryTest, BarAndSquare) {
    // Full-box 3x3 square: occupancy 1, aspect 1.
    BinaryMask square = BinaryMask::zeros({5, 5});
    for (int r = 1; r < 4; ++r)
        for (int c = 1; c < 4; ++c) square.set(r, c, true);
    EXPECT_DOUBLE_EQ(occupancy(square), 1.0);
    EXPECT_DOUBLE_EQ(aspect_ratio(bbox_of(square)), 1.0);

    // 2x10 horizontal bar: aspect 5, occupancy 1.
    BinaryMask bar = BinaryMask::zeros({6, 12});
    for (int r = 2; r < 4; ++r)
        for (int c = 1; c < 11; ++c) bar.set(r, c, true);
    EXPECT_DOUBLE_EQ(aspect_ratio(bbox_of(bar)), 5.0);
    EXPECT_DOUBLE_EQ(occupancy(bar), 1.0);

    // Diagonal 1-pixel line across 10x10: occupancy 10/100.
    BinaryMask diag = BinaryMask::zeros({10, 10});
    for (int i = 0; i < 10; ++i) diag.set(i, i, true);
    EXPECT_DOUBLE_EQ(occupancy(diag), 0.1);
}

TEST(GeometryTest, OccupancyRotationInvariance) {
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
        BinaryMask m = random_mask(rng, 9, 9, 0.3);
        if (mask_area(m) == 0) m.set(4, 4, true);
        BinaryMask rot = BinaryMask::zeros({9, 9});
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c)
                if (m.at(r, c)) rot.set(c, 9 - 1 - r, true);
        EXPECT_DOUBLE_EQ(occupancy(m), occupancy(rot));
    }
}

}  // namespace
}  // namespace s3kit
