#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "s3kit/errors.hpp"

namespace s3kit {

// Class labels are 1-based and bounded by the owning dataset's class count.
using ClassId = int;

struct FrameSize {
    int height = 0;
    int width = 0;

    std::int64_t area() const { return static_cast<std::int64_t>(height) * width; }
    bool operator==(const FrameSize&) const = default;
};

inline void validate(const FrameSize& s) {
    if (s.height < 1 || s.width < 1)
        throw ConfigError("frame size must be at least 1x1, got " +
                          std::to_string(s.height) + "x" + std::to_string(s.width));
}

// Dense binary mask, row-major. bits holds 0/1 per pixel.
struct BinaryMask {
    FrameSize size;
    std::vector<std::uint8_t> bits;

    static BinaryMask zeros(FrameSize s) {
        validate(s);
        return BinaryMask{s, std::vector<std::uint8_t>(static_cast<std::size_t>(s.area()), 0)};
    }

    std::uint8_t at(int row, int col) const {
        return bits[static_cast<std::size_t>(row) * size.width + col];
    }
    void set(int row, int col, bool v) {
        bits[static_cast<std::size_t>(row) * size.width + col] = v ? 1 : 0;
    }

    bool operator==(const BinaryMask&) const = default;
};

// Run-length coding in column-major scan order, starting with a run of 0s
// (possibly of length zero). Matches the dominant annotation-file
// convention, so external ground-truth files decode directly.
struct RleMask {
    FrameSize size;
    std::vector<std::uint32_t> counts;

    bool operator==(const RleMask&) const = default;
};

inline RleMask rle_encode(const BinaryMask& mask) {
    RleMask out{mask.size, {}};
    std::uint32_t run = 0;
    std::uint8_t current = 0;
    for (int col = 0; col < mask.size.width; ++col) {
        for (int row = 0; row < mask.size.height; ++row) {
            const std::uint8_t v = mask.at(row, col) ? 1 : 0;
            if (v != current) {
                out.counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    out.counts.push_back(run);
    return out;
}

inline void validate(const RleMask& rle) {
    validate(rle.size);
    if (rle.counts.empty()) throw MalformedRle("counts must not be empty");
    std::int64_t total = 0;
    for (std::size_t i = 0; i < rle.counts.size(); ++i) {
        if (i > 0 && rle.counts[i] == 0)
            throw MalformedRle("zero-length run at position " + std::to_string(i));
        total += rle.counts[i];
    }
    if (total != rle.size.area())
        throw MalformedRle("counts sum to " + std::to_string(total) + ", expected " +
                           std::to_string(rle.size.area()));
}

inline BinaryMask rle_decode(const RleMask& rle) {
    validate(rle);
    BinaryMask out = BinaryMask::zeros(rle.size);
    const int h = rle.size.height;
    std::int64_t pos = 0;
    std::uint8_t value = 0;
    for (const std::uint32_t run : rle.counts) {
        if (value) {
            for (std::uint32_t k = 0; k < run; ++k) {
                const std::int64_t p = pos + k;
                out.set(static_cast<int>(p % h), static_cast<int>(p / h), true);
            }
        }
        pos += run;
        value ^= 1;
    }
    return out;
}

inline std::int64_t mask_area(const BinaryMask& mask) {
    return std::accumulate(mask.bits.begin(), mask.bits.end(), std::int64_t{0});
}

inline std::int64_t mask_area(const RleMask& rle) {
    std::int64_t area = 0;
    for (std::size_t i = 1; i < rle.counts.size(); i += 2) area += rle.counts[i];
    return area;
}

// |a n b| / |a u b|; 0 when both masks are empty so that empty predictions
// never score as perfect matches.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (!(a.size == b.size))
        throw SizeMismatch("mask sizes differ: " + std::to_string(a.size.height) + "x" +
                           std::to_string(a.size.width) + " vs " +
                           std::to_string(b.size.height) + "x" + std::to_string(b.size.width));
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += (a.bits[i] & b.bits[i]);
        uni += (a.bits[i] | b.bits[i]);
    }
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Axis-aligned box, max edges exclusive.
struct BBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    std::int64_t area() const { return static_cast<std::int64_t>(width()) * height(); }
    bool operator==(const BBox&) const = default;
};

// Tight hull of the set pixels.
inline BBox bbox_of(const BinaryMask& mask) {
    int x_min = mask.size.width, y_min = mask.size.height, x_max = -1, y_max = -1;
    for (int row = 0; row < mask.size.height; ++row) {
        for (int col = 0; col < mask.size.width; ++col) {
            if (!mask.at(row, col)) continue;
            x_min = std::min(x_min, col);
            x_max = std::max(x_max, col);
            y_min = std::min(y_min, row);
            y_max = std::max(y_max, row);
        }
    }
    if (x_max < 0) throw EmptyMask("bbox_of requires a nonempty mask");
    return BBox{x_min, y_min, x_max + 1, y_max + 1};
}

inline double aspect_ratio(const BBox& box) {
    const double w = box.width();
    const double h = box.height();
    return std::max(w, h) / std::min(w, h);
}

// Fraction of the tight bounding box covered by the mask, in (0, 1].
inline double occupancy(const BinaryMask& mask) {
    const BBox box = bbox_of(mask);
    return static_cast<double>(mask_area(mask)) / static_cast<double>(box.area());
}

}  // namespace s3kit
