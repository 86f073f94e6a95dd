#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "s3kit/datamodel.hpp"
#include "s3kit/errors.hpp"
#include "s3kit/maskcore.hpp"
#include "s3kit/numeric.hpp"
#include "s3kit/rng.hpp"

namespace s3kit {

// Scenes of elongated oblique bars with class-distinguishing tip textures.
// Shafts look alike across classes on purpose; only the tip pattern carries
// the class, and bars are placed centrally so they overlap.
struct SynthConfig {
    std::uint64_t seed = 1;
    FrameSize frame{64, 64};
    int class_count = 4;
    int frames = 40;
    int instances_min = 2;
    int instances_max = 4;
    double length_min = 28.0;
    double length_max = 44.0;
    double width_min = 3.0;
    double width_max = 6.0;
    double orient_deg_min = 15.0;
    double orient_deg_max = 75.0;
    int tip_size = 10;
    double label_noise = 0.0;   // probability a predicted label is corrupted
    double mask_noise = 0.0;    // boundary erosion/dilation amplitude
};

inline void validate(const SynthConfig& cfg) {
    validate(cfg.frame);
    if (cfg.class_count < 2) throw ConfigError("class_count must be >= 2");
    if (cfg.frames < 1) throw ConfigError("frames must be >= 1");
    if (cfg.instances_min < 1 || cfg.instances_max < cfg.instances_min)
        throw ConfigError("instance range is empty");
    if (!(cfg.length_min > 0.0) || cfg.length_max < cfg.length_min)
        throw ConfigError("length range is empty");
    if (!(cfg.width_min > 0.0) || cfg.width_max < cfg.width_min)
        throw ConfigError("width range is empty");
    if (cfg.orient_deg_max < cfg.orient_deg_min)
        throw ConfigError("orientation range is empty");
    if (cfg.tip_size < 1) throw ConfigError("tip_size must be >= 1");
    if (!(cfg.label_noise >= 0.0 && cfg.label_noise < 1.0))
        throw ConfigError("label_noise outside [0,1)");
    if (!(cfg.mask_noise >= 0.0 && cfg.mask_noise < 1.0))
        throw ConfigError("mask_noise outside [0,1)");
    if (cfg.length_max + cfg.width_max + 2.0 > std::min(cfg.frame.height, cfg.frame.width))
        throw ConfigError("bars do not fit in the frame");
    if (std::min(cfg.frame.height, cfg.frame.width) < 8)
        throw ConfigError("frame too small for a 3-level pyramid");
}

struct SynthScene {
    Dataset gt;
    Dataset pred;
    std::vector<FeaturePyramid> pyramids;  // parallel to gt.frames
};

namespace detail {

struct Bar {
    double cx, cy, length, width, cos_t, sin_t;
    ClassId label;
    double shaft_intensity;
};

// Bar-relative coordinates of a pixel center; u runs along the bar.
inline bool bar_contains(const Bar& bar, double px, double py, double* u_out = nullptr,
                         double* v_out = nullptr) {
    const double dx = px - bar.cx, dy = py - bar.cy;
    const double u = dx * bar.cos_t + dy * bar.sin_t;
    const double v = -dx * bar.sin_t + dy * bar.cos_t;
    if (u_out) *u_out = u;
    if (v_out) *v_out = v;
    return std::abs(u) <= bar.length / 2 && std::abs(v) <= bar.width / 2;
}

// Tip texture value, or a negative number outside the tip region. Patterns
// are bar-relative, so they read the same at any orientation:
//   0: bright solid   1: fine checker   2: bands across the shaft   3: dark solid
inline double tip_value(const Bar& bar, int tip_size, double u, double v) {
    if (u < bar.length / 2 - tip_size) return -1.0;
    const int pattern = (bar.label - 1) % 4;
    const auto cell = [](double t, double period) {
        return static_cast<long long>(std::floor(t / period));
    };
    switch (pattern) {
        case 0: return 0.95;
        case 1: return ((cell(u, 1.0) + cell(v, 1.0)) % 2 + 2) % 2 == 0 ? 0.95 : 0.05;
        case 2: return ((cell(u, 2.0) % 2) + 2) % 2 == 0 ? 0.95 : 0.15;
        default: return 0.15;
    }
}

inline std::uint64_t pixel_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t z = a * 0x9e3779b97f4a7c15ull + b * 0xbf58476d1ce4e5b9ull + c + 0x94d049bb133111ebull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Intensity plus absolute edge responses at three scales.
inline FeaturePyramid pyramid_from_image(const std::vector<double>& image, FrameSize frame) {
    const int h = frame.height, w = frame.width;
    Tensor level0 = Tensor::zeros({4, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double value = image[static_cast<std::size_t>(y) * w + x];
            const double gx =
                (x > 0 && x + 1 < w)
                    ? (image[static_cast<std::size_t>(y) * w + x + 1] -
                       image[static_cast<std::size_t>(y) * w + x - 1]) / 2.0
                    : 0.0;
            const double gy =
                (y > 0 && y + 1 < h)
                    ? (image[static_cast<std::size_t>(y + 1) * w + x] -
                       image[static_cast<std::size_t>(y - 1) * w + x]) / 2.0
                    : 0.0;
            level0.at(0, y, x) = value;
            level0.at(1, y, x) = std::abs(gx);
            level0.at(2, y, x) = std::abs(gy);
            level0.at(3, y, x) = std::sqrt(gx * gx + gy * gy);
        }
    FeaturePyramid pyramid;
    Tensor level1 = adaptive_avg_pool(level0, std::max(1, h / 2), std::max(1, w / 2));
    Tensor level2 = adaptive_avg_pool(level1, std::max(1, h / 4), std::max(1, w / 4));
    pyramid.levels.push_back(std::move(level0));
    pyramid.levels.push_back(std::move(level1));
    pyramid.levels.push_back(std::move(level2));
    validate(pyramid);
    return pyramid;
}

// Single-pass probabilistic boundary erosion/dilation at amplitude a.
inline BinaryMask perturb_boundary(const BinaryMask& mask, double amplitude, Rng& rng) {
    const int h = mask.size.height, w = mask.size.width;
    BinaryMask out = mask;
    const auto neighbor_differs = [&](int r, int c, std::uint8_t self) {
        return (r > 0 && mask.at(r - 1, c) != self) || (r + 1 < h && mask.at(r + 1, c) != self) ||
               (c > 0 && mask.at(r, c - 1) != self) || (c + 1 < w && mask.at(r, c + 1) != self);
    };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::uint8_t self = mask.at(r, c);
            if (!neighbor_differs(r, c, self)) continue;
            if (rng.bernoulli(amplitude / 2.0)) out.set(r, c, !self);
        }
    if (mask_area(out) == 0) return mask;
    return out;
}

}  // namespace detail

// Deterministic for a fixed seed; every frame derives its own substreams so
// frames could be rendered in parallel without changing the output.
inline SynthScene generate(const SynthConfig& cfg) {
    validate(cfg);
    SynthScene scene;
    const auto class_name = [](int c) { return "tool_" + std::to_string(c); };
    scene.gt.class_count = cfg.class_count;
    for (int c = 1; c <= cfg.class_count; ++c) scene.gt.class_names.push_back(class_name(c));
    scene.pred = scene.gt;

    const Rng root(cfg.seed);
    for (int f = 0; f < cfg.frames; ++f) {
        char frame_name[16];
        std::snprintf(frame_name, sizeof(frame_name), "f%04d", f);
        const FrameInfo info{frame_name, cfg.frame};
        scene.gt.frames.push_back(info);
        scene.pred.frames.push_back(info);

        const Rng frame_rng = root.split(static_cast<std::uint64_t>(f));
        Rng geo = frame_rng.split(1);
        Rng corrupt = frame_rng.split(2);
        Rng score = frame_rng.split(3);

        const int h = cfg.frame.height, w = cfg.frame.width;
        std::vector<double> image(static_cast<std::size_t>(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                image[static_cast<std::size_t>(y) * w + x] =
                    0.1 + 0.04 * (static_cast<double>(detail::pixel_key(cfg.seed, static_cast<std::uint64_t>(f),
                                                                        static_cast<std::uint64_t>(y) * w + x) >> 11) *
                                      0x1.0p-53 -
                                  0.02);

        const int count = static_cast<int>(geo.uniform_int(cfg.instances_min, cfg.instances_max));
        for (int k = 0; k < count; ++k) {
            detail::Bar bar;
            BinaryMask mask = BinaryMask::zeros(cfg.frame);
            bool placed = false;
            for (int attempt = 0; attempt < 8 && !placed; ++attempt) {
                bar.label = static_cast<ClassId>(geo.uniform_int(1, cfg.class_count));
                bar.length = geo.uniform(cfg.length_min, cfg.length_max);
                bar.width = geo.uniform(cfg.width_min, cfg.width_max);
                const double theta =
                    geo.uniform(cfg.orient_deg_min, cfg.orient_deg_max) * std::numbers::pi / 180.0;
                bar.cos_t = std::cos(theta);
                bar.sin_t = std::sin(theta);
                bar.shaft_intensity = geo.uniform(0.45, 0.55);
                const double ext_x = bar.length * std::abs(bar.cos_t) + bar.width * std::abs(bar.sin_t);
                const double ext_y = bar.length * std::abs(bar.sin_t) + bar.width * std::abs(bar.cos_t);
                const double lo_x = ext_x / 2 + 1, hi_x = w - ext_x / 2 - 1;
                const double lo_y = ext_y / 2 + 1, hi_y = h - ext_y / 2 - 1;
                if (lo_x >= hi_x || lo_y >= hi_y) continue;
                // Shrink the placement window so bars crowd the middle and overlap.
                bar.cx = geo.uniform(lo_x + 0.15 * (hi_x - lo_x), hi_x - 0.15 * (hi_x - lo_x));
                bar.cy = geo.uniform(lo_y + 0.15 * (hi_y - lo_y), hi_y - 0.15 * (hi_y - lo_y));

                mask = BinaryMask::zeros(cfg.frame);
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < w; ++c)
                        if (detail::bar_contains(bar, c + 0.5, r + 0.5)) mask.set(r, c, true);
                placed = mask_area(mask) > 0;
            }
            if (!placed) throw ConfigError("could not place a bar; frame too tight");

            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    double u, v;
                    if (!detail::bar_contains(bar, c + 0.5, r + 0.5, &u, &v)) continue;
                    const double tip = detail::tip_value(bar, cfg.tip_size, u, v);
                    image[static_cast<std::size_t>(r) * w + c] =
                        tip >= 0.0 ? tip : bar.shaft_intensity;
                }

            Instance gt_inst;
            gt_inst.frame_id = frame_name;
            gt_inst.instance_id = k + 1;
            gt_inst.class_label = bar.label;
            gt_inst.score = 1.0;
            gt_inst.mask = rle_encode(mask);
            scene.gt.instances.push_back(gt_inst);

            Instance pred_inst = gt_inst;
            if (cfg.label_noise > 0.0 && corrupt.bernoulli(cfg.label_noise)) {
                const auto offset = corrupt.uniform_int(1, cfg.class_count - 1);
                pred_inst.class_label =
                    static_cast<ClassId>((bar.label - 1 + offset) % cfg.class_count + 1);
            }
            if (cfg.mask_noise > 0.0)
                pred_inst.mask = rle_encode(detail::perturb_boundary(mask, cfg.mask_noise, corrupt));
            pred_inst.score = pred_inst.class_label == gt_inst.class_label
                                  ? score.uniform(0.70, 0.95)
                                  : score.uniform(0.40, 0.80);
            scene.pred.instances.push_back(pred_inst);
        }
        scene.pyramids.push_back(detail::pyramid_from_image(image, cfg.frame));
    }
    return scene;
}

struct AspectReport {
    std::int64_t total = 0;
    std::int64_t above_ratio_3 = 0;
    double mean_aspect = 0.0;
    double mean_occupancy = 0.0;
    // Aspect-ratio histogram over edges 1, 1.5, 2, 2.5, 3, 4, 6, inf.
    std::vector<double> bin_edges{1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0};
    std::vector<std::int64_t> bin_counts = std::vector<std::int64_t>(7, 0);

    double fraction_above_3() const {
        return static_cast<double>(above_ratio_3) / static_cast<double>(total);
    }
};

// Bounding-box aspect ratio and occupancy statistics across a dataset's
// instances; the diagnostic behind the oblique-instrument analysis.
inline AspectReport aspect_report(const Dataset& ds) {
    if (ds.instances.empty()) throw EmptyDataset("aspect_report needs at least one instance");
    AspectReport report;
    double aspect_sum = 0.0, occupancy_sum = 0.0;
    for (const auto& inst : ds.instances) {
        const BinaryMask mask = rle_decode(inst.mask);
        const double aspect = aspect_ratio(bbox_of(mask));
        const double occ = occupancy(mask);
        aspect_sum += aspect;
        occupancy_sum += occ;
        ++report.total;
        if (aspect > 3.0) ++report.above_ratio_3;
        std::size_t bin = 0;
        while (bin + 1 < report.bin_edges.size() && aspect >= report.bin_edges[bin + 1]) ++bin;
        ++report.bin_counts[bin];
    }
    report.mean_aspect = aspect_sum / static_cast<double>(report.total);
    report.mean_occupancy = occupancy_sum / static_cast<double>(report.total);
    return report;
}

inline nlohmann::ordered_json synth_config_to_json(const SynthConfig& cfg) {
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["frame_height"] = cfg.frame.height;
    j["frame_width"] = cfg.frame.width;
    j["class_count"] = cfg.class_count;
    j["frames"] = cfg.frames;
    j["instances_min"] = cfg.instances_min;
    j["instances_max"] = cfg.instances_max;
    j["length_min"] = cfg.length_min;
    j["length_max"] = cfg.length_max;
    j["width_min"] = cfg.width_min;
    j["width_max"] = cfg.width_max;
    j["orient_deg_min"] = cfg.orient_deg_min;
    j["orient_deg_max"] = cfg.orient_deg_max;
    j["tip_size"] = cfg.tip_size;
    j["label_noise"] = cfg.label_noise;
    j["mask_noise"] = cfg.mask_noise;
    return j;
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig cfg;
    const auto fetch = [&](const char* key, auto& slot) {
        const auto it = j.find(key);
        if (it == j.end()) return;
        try {
            slot = it->get<std::decay_t<decltype(slot)>>();
        } catch (const nlohmann::json::exception&) {
            throw SchemaError(key, "unexpected value type");
        }
    };
    fetch("seed", cfg.seed);
    fetch("frame_height", cfg.frame.height);
    fetch("frame_width", cfg.frame.width);
    fetch("class_count", cfg.class_count);
    fetch("frames", cfg.frames);
    fetch("instances_min", cfg.instances_min);
    fetch("instances_max", cfg.instances_max);
    fetch("length_min", cfg.length_min);
    fetch("length_max", cfg.length_max);
    fetch("width_min", cfg.width_min);
    fetch("width_max", cfg.width_max);
    fetch("orient_deg_min", cfg.orient_deg_min);
    fetch("orient_deg_max", cfg.orient_deg_max);
    fetch("tip_size", cfg.tip_size);
    fetch("label_noise", cfg.label_noise);
    fetch("mask_noise", cfg.mask_noise);
    validate(cfg);
    return cfg;
}

}  // namespace s3kit
