#pragma once

#include <vector>

#include "s3kit/datamodel.hpp"
#include "s3kit/errors.hpp"
#include "s3kit/maskcore.hpp"

namespace s3kit {

// Inference defaults: keep everything past score 0.0, retain the top 5
// instances per frame, reject overlaps past mask IoU 0.5.
struct SuppressConfig {
    double score_threshold = 0.0;
    int top_k = 5;
    double iou_threshold = 0.5;
};

inline void validate(const SuppressConfig& cfg) {
    if (!(cfg.score_threshold >= 0.0 && cfg.score_threshold <= 1.0))
        throw ConfigError("score_threshold outside [0,1]");
    if (cfg.top_k < 1) throw ConfigError("top_k must be >= 1");
    if (!(cfg.iou_threshold >= 0.0 && cfg.iou_threshold <= 1.0))
        throw ConfigError("iou_threshold outside [0,1]");
}

namespace detail {

// Greedy suppression over one frame's instances. Suppression is on mask IoU;
// when cross_class is false, only same-class pairs can suppress each other.
inline std::vector<Instance> nms_impl(const std::vector<Instance>& instances,
                                      const SuppressConfig& cfg, bool cross_class) {
    validate(cfg);
    std::vector<BinaryMask> masks;
    masks.reserve(instances.size());
    for (const auto& inst : instances) masks.push_back(rle_decode(inst.mask));

    std::vector<std::size_t> retained;
    for (const std::size_t i : score_order(instances)) {
        if (instances[i].score < cfg.score_threshold) continue;
        bool keep = true;
        for (const std::size_t r : retained) {
            if (!cross_class && instances[r].class_label != instances[i].class_label) continue;
            if (mask_iou(masks[i], masks[r]) > cfg.iou_threshold) {
                keep = false;
                break;
            }
        }
        if (keep) retained.push_back(i);
    }
    if (static_cast<int>(retained.size()) > cfg.top_k) retained.resize(cfg.top_k);

    std::vector<Instance> out;
    out.reserve(retained.size());
    for (const std::size_t i : retained) out.push_back(instances[i]);
    return out;
}

}  // namespace detail

// Modified post-processing: overlapping segments are rejected regardless of
// their class labels.
inline std::vector<Instance> cross_class_nms(const std::vector<Instance>& instances,
                                             const SuppressConfig& cfg = {}) {
    return detail::nms_impl(instances, cfg, true);
}

// Baseline mode: a typical suppression step that only rejects overlaps
// within the same class.
inline std::vector<Instance> standard_nms(const std::vector<Instance>& instances,
                                          const SuppressConfig& cfg = {}) {
    return detail::nms_impl(instances, cfg, false);
}

}  // namespace s3kit
