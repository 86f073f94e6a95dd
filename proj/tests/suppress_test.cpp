#include "s3kit/suppress.hpp"

#include <gtest/gtest.h>

#include <set>

#include "s3kit/rng.hpp"

namespace s3kit {
namespace {

BinaryMask random_mask(Rng& rng, FrameSize size, double density = 0.4) {
    BinaryMask m = BinaryMask::zeros(size);
    for (auto& b : m.bits) b = rng.bernoulli(density) ? 1 : 0;
    return m;
}

Instance make_instance(std::int64_t id, ClassId cls, double score, const BinaryMask& mask) {
    return Instance{"f0", cls, score, rle_encode(mask), id};
}

std::vector<Instance> random_frame(Rng& rng, int max_count, FrameSize size = {16, 16}) {
    std::vector<Instance> out;
    const int n = static_cast<int>(rng.uniform_int(0, max_count));
    for (int i = 0; i < n; ++i)
        out.push_back(make_instance(i + 1, static_cast<ClassId>(rng.uniform_int(1, 4)),
                                    rng.uniform(0.0, 1.0), random_mask(rng, size, 0.35)));
    return out;
}

double pixel_iou(const Instance& a, const Instance& b) {
    const BinaryMask ma = rle_decode(a.mask), mb = rle_decode(b.mask);
    int inter = 0, uni = 0;
    for (std::size_t i = 0; i < ma.bits.size(); ++i) {
        if (ma.bits[i] && mb.bits[i]) ++inter;
        if (ma.bits[i] || mb.bits[i]) ++uni;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

// Direct greedy re-implementation over dense pixels.
std::vector<Instance> oracle_nms(const std::vector<Instance>& input, const SuppressConfig& cfg,
                                 bool cross_class) {
    std::vector<Instance> sorted = input;
    std::sort(sorted.begin(), sorted.end(), [](const Instance& a, const Instance& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.instance_id < b.instance_id;
    });
    std::vector<Instance> kept;
    for (const auto& inst : sorted) {
        if (inst.score < cfg.score_threshold) continue;
        bool ok = true;
        for (const auto& k : kept) {
            if (!cross_class && k.class_label != inst.class_label) continue;
            if (pixel_iou(inst, k) > cfg.iou_threshold) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(inst);
    }
    if (static_cast<int>(kept.size()) > cfg.top_k) kept.resize(cfg.top_k);
    return kept;
}

TEST(CrossClassNmsTest, RejectsDuplicateAcrossClasses) {
    Rng rng(1);
    const BinaryMask shared = random_mask(rng, {16, 16}, 0.5);
    const std::vector<Instance> input = {make_instance(1, 2, 0.9, shared),
                                         make_instance(2, 5, 0.8, shared)};
    const auto kept = cross_class_nms(input, {});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].instance_id, 1);
    EXPECT_EQ(kept[0].class_label, 2);

    // The documented defect of the standard step: both survive.
    const auto standard = standard_nms(input, {});
    EXPECT_EQ(standard.size(), 2u);
}

TEST(CrossClassNmsTest, EmptyInput) {
    EXPECT_TRUE(cross_class_nms({}, {}).empty());
}

TEST(StandardNmsTest, SingleAndSameClassPair) {
    Rng rng(2);
    const BinaryMask m = random_mask(rng, {16, 16}, 0.5);
    const auto single = standard_nms({make_instance(1, 1, 0.4, m)}, {});
    ASSERT_EQ(single.size(), 1u);

    const std::vector<Instance> pair = {make_instance(1, 3, 0.6, m), make_instance(2, 3, 0.9, m)};
    const auto kept = standard_nms(pair, {});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].instance_id, 2);
}

TEST(SuppressTest, MatchesOracleOnSeededFrames) {
    Rng rng(12345);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto frame = random_frame(rng, 8);
        SuppressConfig cfg;
        cfg.iou_threshold = rng.uniform(0.1, 0.9);
        cfg.score_threshold = rng.uniform(0.0, 0.4);
        cfg.top_k = static_cast<int>(rng.uniform_int(1, 8));
        EXPECT_EQ(cross_class_nms(frame, cfg), oracle_nms(frame, cfg, true));
        EXPECT_EQ(standard_nms(frame, cfg), oracle_nms(frame, cfg, false));
    }
}

TEST(SuppressTest, RetainedPairsRespectIouBound) {
    Rng rng(777);
    for (int trial = 0; trial < 300; ++trial) {
        const auto frame = random_frame(rng, 8);
        const SuppressConfig cfg;
        const auto kept = cross_class_nms(frame, cfg);
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t j = i + 1; j < kept.size(); ++j)
                EXPECT_LE(pixel_iou(kept[i], kept[j]), cfg.iou_threshold);
    }
}

TEST(SuppressTest, IdempotentSubsetAndTopK) {
    Rng rng(4242);
    for (int trial = 0; trial < 300; ++trial) {
        const auto frame = random_frame(rng, 8);
        const SuppressConfig cfg;  // paper inference defaults
        const auto once = cross_class_nms(frame, cfg);
        EXPECT_EQ(cross_class_nms(once, cfg), once);
        EXPECT_LE(once.size(), 5u);

        std::set<std::int64_t> input_ids;
        for (const auto& inst : frame) input_ids.insert(inst.instance_id);
        for (const auto& inst : once) {
            EXPECT_TRUE(input_ids.count(inst.instance_id));
            // untouched payloads
            bool found_equal = false;
            for (const auto& orig : frame) found_equal |= orig == inst;
            EXPECT_TRUE(found_equal);
        }
        // Output comes back in descending score order.
        for (std::size_t i = 1; i < once.size(); ++i)
            EXPECT_GE(once[i - 1].score, once[i].score);
    }
}

// The cross-class pass can retain an instance the standard pass rejects:
// suppression chains differ once an early cross-class rejection removes a
// same-class blocker. Containment does hold for frames of at most two
// instances and for single-class frames.
TEST(SuppressTest, ContainmentOnRestrictedFrames) {
    Rng rng(999);
    for (int trial = 0; trial < 300; ++trial) {
        SuppressConfig cfg;
        cfg.top_k = 8;

        auto two = random_frame(rng, 2);
        const auto cross = cross_class_nms(two, cfg);
        const auto standard = standard_nms(two, cfg);
        for (const auto& inst : cross) {
            bool in_standard = false;
            for (const auto& s : standard) in_standard |= s.instance_id == inst.instance_id;
            EXPECT_TRUE(in_standard);
        }

        auto mono = random_frame(rng, 6);
        for (auto& inst : mono) inst.class_label = 1;
        EXPECT_EQ(cross_class_nms(mono, cfg), standard_nms(mono, cfg));
    }
}

TEST(SuppressTest, ChainCounterexampleToGlobalContainment) {
    // W (class 1) suppresses X (class 2) only in cross-class mode; with X
    // gone, Y (class 2) survives the cross-class pass but not the standard
    // one. Retention is therefore not globally nested across modes.
    const FrameSize size{4, 12};
    const auto block = [&](int col_begin, int col_end) {
        BinaryMask m = BinaryMask::zeros(size);
        for (int r = 0; r < 4; ++r)
            for (int c = col_begin; c < col_end; ++c) m.set(r, c, true);
        return m;
    };
    const std::vector<Instance> frame = {make_instance(1, 1, 0.9, block(0, 8)),
                                         make_instance(2, 2, 0.8, block(2, 10)),
                                         make_instance(3, 2, 0.7, block(4, 12))};
    SuppressConfig cfg;
    cfg.top_k = 8;
    const auto cross = cross_class_nms(frame, cfg);
    const auto standard = standard_nms(frame, cfg);
    ASSERT_EQ(cross.size(), 2u);
    EXPECT_EQ(cross[0].instance_id, 1);
    EXPECT_EQ(cross[1].instance_id, 3);
    ASSERT_EQ(standard.size(), 2u);
    EXPECT_EQ(standard[0].instance_id, 1);
    EXPECT_EQ(standard[1].instance_id, 2);
}

}  // namespace
}  // namespace s3kit
