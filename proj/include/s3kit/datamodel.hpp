#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "s3kit/errors.hpp"
#include "s3kit/maskcore.hpp"

namespace s3kit {

// One detection or ground-truth object. Ground truth carries score 1.0.
struct Instance {
    std::string frame_id;
    ClassId class_label = 0;
    double score = 1.0;
    RleMask mask;
    std::int64_t instance_id = 0;

    bool operator==(const Instance&) const = default;
};

struct FrameInfo {
    std::string id;
    FrameSize size;

    bool operator==(const FrameInfo&) const = default;
};

struct Dataset {
    int class_count = 0;
    std::vector<std::string> class_names;
    std::vector<FrameInfo> frames;
    std::vector<Instance> instances;

    bool operator==(const Dataset&) const = default;

    std::optional<FrameSize> frame_size(const std::string& frame_id) const {
        for (const auto& f : frames)
            if (f.id == frame_id) return f.size;
        return std::nullopt;
    }

    std::vector<Instance> instances_of(const std::string& frame_id) const {
        std::vector<Instance> out;
        for (const auto& inst : instances)
            if (inst.frame_id == frame_id) out.push_back(inst);
        return out;
    }
};

inline void validate(const Dataset& ds) {
    if (ds.class_count < 1) throw SchemaError("class_count", "must be >= 1");
    if (static_cast<int>(ds.class_names.size()) != ds.class_count)
        throw SchemaError("classes", "expected " + std::to_string(ds.class_count) +
                                         " names, got " + std::to_string(ds.class_names.size()));
    std::map<std::string, FrameSize> sizes;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        const auto& f = ds.frames[i];
        const std::string path = "frames[" + std::to_string(i) + "]";
        validate(f.size);
        if (!sizes.emplace(f.id, f.size).second)
            throw SchemaError(path, "duplicate frame id '" + f.id + "'");
    }
    std::set<std::pair<std::string, std::int64_t>> ids;
    for (std::size_t i = 0; i < ds.instances.size(); ++i) {
        const auto& inst = ds.instances[i];
        const std::string path = "instances[" + std::to_string(i) + "]";
        const auto it = sizes.find(inst.frame_id);
        if (it == sizes.end())
            throw SchemaError(path + ".frame_id", "unknown frame '" + inst.frame_id + "'");
        if (inst.class_label < 1 || inst.class_label > ds.class_count)
            throw SchemaError(path + ".class", "label " + std::to_string(inst.class_label) +
                                                   " outside 1.." + std::to_string(ds.class_count));
        if (!(inst.score >= 0.0 && inst.score <= 1.0))
            throw SchemaError(path + ".score", "outside [0,1]");
        if (!(inst.mask.size == it->second))
            throw SchemaError(path + ".segmentation.size", "mask size differs from frame size");
        try {
            validate(inst.mask);
        } catch (const MalformedRle& e) {
            throw SchemaError(path + ".segmentation.counts", e.what());
        }
        if (!ids.emplace(inst.frame_id, inst.instance_id).second)
            throw SchemaError(path + ".instance_id",
                              "duplicate id " + std::to_string(inst.instance_id) + " in frame '" +
                                  inst.frame_id + "'");
    }
}

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& obj, const std::string& key,
                                          const std::string& path) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(path, "missing key '" + key + "'");
    return *it;
}

template <typename T>
T as(const nlohmann::json& value, const std::string& path) {
    try {
        return value.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SchemaError(path, "unexpected value type");
    }
}

}  // namespace detail

// Annotation schema: one UTF-8 JSON object, unknown keys ignored.
// {"class_count": int, "classes": [str...],
//  "frames": [{"id": str, "height": int, "width": int}...],
//  "instances": [{"frame_id": str, "instance_id": int, "class": int,
//                 "score": float, "segmentation": {"size":[H,W], "counts":[int...]}}...]}
inline Dataset dataset_from_json(const nlohmann::json& j) {
    using detail::as;
    using detail::require_key;
    if (!j.is_object()) throw SchemaError("$", "top-level value must be an object");

    Dataset ds;
    ds.class_count = as<int>(require_key(j, "class_count", "$"), "class_count");
    ds.class_names = as<std::vector<std::string>>(require_key(j, "classes", "$"), "classes");

    const auto& frames = require_key(j, "frames", "$");
    if (!frames.is_array()) throw SchemaError("frames", "must be an array");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::string path = "frames[" + std::to_string(i) + "]";
        const auto& f = frames[i];
        FrameInfo info;
        info.id = as<std::string>(require_key(f, "id", path), path + ".id");
        info.size.height = as<int>(require_key(f, "height", path), path + ".height");
        info.size.width = as<int>(require_key(f, "width", path), path + ".width");
        ds.frames.push_back(std::move(info));
    }

    const auto& instances = require_key(j, "instances", "$");
    if (!instances.is_array()) throw SchemaError("instances", "must be an array");
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const std::string path = "instances[" + std::to_string(i) + "]";
        const auto& rec = instances[i];
        Instance inst;
        inst.frame_id = as<std::string>(require_key(rec, "frame_id", path), path + ".frame_id");
        inst.instance_id =
            as<std::int64_t>(require_key(rec, "instance_id", path), path + ".instance_id");
        inst.class_label = as<int>(require_key(rec, "class", path), path + ".class");
        inst.score = as<double>(require_key(rec, "score", path), path + ".score");
        const auto& seg = require_key(rec, "segmentation", path);
        const auto size = as<std::vector<int>>(require_key(seg, "size", path + ".segmentation"),
                                               path + ".segmentation.size");
        if (size.size() != 2)
            throw SchemaError(path + ".segmentation.size", "expected [height, width]");
        inst.mask.size = FrameSize{size[0], size[1]};
        inst.mask.counts = as<std::vector<std::uint32_t>>(
            require_key(seg, "counts", path + ".segmentation"), path + ".segmentation.counts");
        ds.instances.push_back(std::move(inst));
    }

    validate(ds);
    return ds;
}

inline nlohmann::ordered_json dataset_to_json(const Dataset& ds) {
    validate(ds);
    nlohmann::ordered_json j;
    j["class_count"] = ds.class_count;
    j["classes"] = ds.class_names;
    j["frames"] = nlohmann::ordered_json::array();
    for (const auto& f : ds.frames)
        j["frames"].push_back(
            {{"id", f.id}, {"height", f.size.height}, {"width", f.size.width}});
    j["instances"] = nlohmann::ordered_json::array();
    for (const auto& inst : ds.instances)
        j["instances"].push_back({{"frame_id", inst.frame_id},
                                  {"instance_id", inst.instance_id},
                                  {"class", inst.class_label},
                                  {"score", inst.score},
                                  {"segmentation",
                                   {{"size", {inst.mask.size.height, inst.mask.size.width}},
                                    {"counts", inst.mask.counts}}}});
    return j;
}

inline Dataset load_annotations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return dataset_from_json(j);
}

inline void save_annotations(const Dataset& ds, const std::string& path) {
    const auto j = dataset_to_json(ds);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write to '" + path + "' failed");
}

struct MatchPair {
    std::int64_t pred_id = 0;
    std::int64_t gt_id = 0;
    double iou = 0.0;

    bool operator==(const MatchPair&) const = default;
};

struct MatchResult {
    std::vector<MatchPair> pairs;
    std::vector<std::int64_t> unmatched_pred;
    std::vector<std::int64_t> unmatched_gt;

    bool operator==(const MatchResult&) const = default;
};

namespace detail {

// Processing order for detections: best score first, ids break ties.
inline std::vector<std::size_t> score_order(const std::vector<Instance>& insts) {
    std::vector<std::size_t> order(insts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (insts[a].score != insts[b].score) return insts[a].score > insts[b].score;
        return insts[a].instance_id < insts[b].instance_id;
    });
    return order;
}

}  // namespace detail

// Greedy matching in descending prediction-score order; each prediction takes
// the unmatched GT of maximal IoU if that IoU reaches the threshold. IoU ties
// go to the lower GT instance_id.
inline MatchResult match_instances(const std::vector<Instance>& preds,
                                   const std::vector<Instance>& gts, double iou_threshold) {
    std::vector<BinaryMask> pred_masks, gt_masks;
    pred_masks.reserve(preds.size());
    gt_masks.reserve(gts.size());
    for (const auto& p : preds) pred_masks.push_back(rle_decode(p.mask));
    for (const auto& g : gts) gt_masks.push_back(rle_decode(g.mask));

    MatchResult result;
    std::vector<bool> gt_taken(gts.size(), false);
    for (const std::size_t pi : detail::score_order(preds)) {
        double best_iou = -1.0;
        std::size_t best_gi = gts.size();
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_taken[gi]) continue;
            const double iou = mask_iou(pred_masks[pi], gt_masks[gi]);
            const bool better =
                iou > best_iou ||
                (iou == best_iou && best_gi < gts.size() &&
                 gts[gi].instance_id < gts[best_gi].instance_id);
            if (better) {
                best_iou = iou;
                best_gi = gi;
            }
        }
        if (best_gi < gts.size() && best_iou >= iou_threshold) {
            gt_taken[best_gi] = true;
            result.pairs.push_back({preds[pi].instance_id, gts[best_gi].instance_id, best_iou});
        } else {
            result.unmatched_pred.push_back(preds[pi].instance_id);
        }
    }
    for (std::size_t gi = 0; gi < gts.size(); ++gi)
        if (!gt_taken[gi]) result.unmatched_gt.push_back(gts[gi].instance_id);
    return result;
}

// Replace each matched prediction's label with its GT label. Masks, scores,
// ids and instance order are untouched.
inline std::vector<Instance> relabel_with_gt(const std::vector<Instance>& preds,
                                             const std::vector<Instance>& gts,
                                             double iou_threshold) {
    const MatchResult match = match_instances(preds, gts, iou_threshold);
    std::map<std::int64_t, ClassId> new_label;
    for (const auto& pair : match.pairs) {
        for (const auto& g : gts)
            if (g.instance_id == pair.gt_id) new_label[pair.pred_id] = g.class_label;
    }
    std::vector<Instance> out = preds;
    for (auto& p : out) {
        const auto it = new_label.find(p.instance_id);
        if (it != new_label.end()) p.class_label = it->second;
    }
    return out;
}

}  // namespace s3kit
