#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "s3kit/datamodel.hpp"
#include "s3kit/errors.hpp"
#include "s3kit/maskcore.hpp"
#include "s3kit/parallel.hpp"

namespace s3kit {

struct FrameClassIou {
    std::string frame_id;
    ClassId class_label = 0;
    double iou = 0.0;
};

struct EvalReport {
    double ch_iou = 0.0;
    double isi_iou = 0.0;
    double mc_iou = 0.0;
    std::map<ClassId, double> per_class_iou;
    std::map<ClassId, double> ap50;
    double ap50_mean = 0.0;
};

// IoU between the pixel-union of predicted instances of class c and the
// pixel-union of GT instances of class c on one frame. 0 when exactly one
// side is empty; callers never query the both-empty case.
inline double frame_class_iou(const std::vector<Instance>& preds,
                              const std::vector<Instance>& gts, ClassId c, FrameSize frame) {
    BinaryMask pred_union = BinaryMask::zeros(frame);
    BinaryMask gt_union = BinaryMask::zeros(frame);
    const auto accumulate = [&](const std::vector<Instance>& insts, BinaryMask& target) {
        for (const auto& inst : insts) {
            if (inst.class_label != c) continue;
            const BinaryMask m = rle_decode(inst.mask);
            if (!(m.size == frame)) throw SizeMismatch("instance mask size differs from frame");
            for (std::size_t i = 0; i < target.bits.size(); ++i) target.bits[i] |= m.bits[i];
        }
    };
    accumulate(preds, pred_union);
    accumulate(gts, gt_union);
    return mask_iou(pred_union, gt_union);
}

namespace detail {

struct FrameView {
    std::string id;
    FrameSize size;
    std::vector<Instance> gts;
    std::vector<Instance> preds;
    std::set<ClassId> gt_classes;
    std::set<ClassId> pred_classes;
};

inline std::vector<FrameView> group_frames(const Dataset& gt, const Dataset& pred) {
    if (gt.frames.size() != pred.frames.size())
        throw SchemaError("frames", "GT and prediction frame lists differ in length");
    std::vector<FrameView> views;
    views.reserve(gt.frames.size());
    for (std::size_t i = 0; i < gt.frames.size(); ++i) {
        if (!(gt.frames[i] == pred.frames[i]))
            throw SchemaError("frames[" + std::to_string(i) + "]",
                              "GT and prediction frame entries differ");
        FrameView v;
        v.id = gt.frames[i].id;
        v.size = gt.frames[i].size;
        views.push_back(std::move(v));
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < views.size(); ++i) index[views[i].id] = i;
    for (const auto& inst : gt.instances) {
        auto& v = views[index.at(inst.frame_id)];
        v.gts.push_back(inst);
        v.gt_classes.insert(inst.class_label);
    }
    for (const auto& inst : pred.instances) {
        auto& v = views[index.at(inst.frame_id)];
        v.preds.push_back(inst);
        v.pred_classes.insert(inst.class_label);
    }
    return views;
}

// Per-frame mean of class IoUs over `classes`, or nothing when the class
// set is empty. Frames are processed concurrently; the mean over frames is
// a sequential reduce in frame order.
template <typename ClassSetFn>
double frame_mean_iou(const std::vector<FrameView>& views, ClassSetFn&& class_set) {
    std::vector<double> frame_value(views.size(), 0.0);
    std::vector<char> counted(views.size(), 0);
    parallel_for(views.size(), [&](std::size_t i) {
        const FrameView& v = views[i];
        const std::set<ClassId> classes = class_set(v);
        if (classes.empty()) return;
        double sum = 0.0;
        for (const ClassId c : classes) sum += frame_class_iou(v.preds, v.gts, c, v.size);
        frame_value[i] = sum / static_cast<double>(classes.size());
        counted[i] = 1;
    });
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (!counted[i]) continue;
        total += frame_value[i];
        ++n;
    }
    if (n == 0) throw EmptyDataset("no frame carries any instance of the requested kind");
    return total / static_cast<double>(n);
}

}  // namespace detail

// Challenge IoU: per-frame mean over the classes present in that frame's
// GT, averaged over frames that have at least one GT class.
inline double challenge_iou(const Dataset& gt, const Dataset& pred) {
    const auto views = detail::group_frames(gt, pred);
    return detail::frame_mean_iou(views, [](const detail::FrameView& v) { return v.gt_classes; });
}

// ISINet IoU: like challenge_iou but the per-frame class set also includes
// predicted classes, so hallucinated classes pull the frame mean down.
inline double isi_iou(const Dataset& gt, const Dataset& pred) {
    const auto views = detail::group_frames(gt, pred);
    return detail::frame_mean_iou(views, [](const detail::FrameView& v) {
        std::set<ClassId> classes = v.gt_classes;
        classes.insert(v.pred_classes.begin(), v.pred_classes.end());
        return classes;
    });
}

// Mean class IoU: per class, average over the frames where the class occurs
// in GT or predictions; then average over every class seen anywhere in the
// dataset (classes predicted but never annotated score 0 and stay in the
// mean).
inline std::pair<double, std::map<ClassId, double>> mc_iou(const Dataset& gt,
                                                           const Dataset& pred) {
    const auto views = detail::group_frames(gt, pred);
    std::set<ClassId> classes;
    for (const auto& v : views) {
        classes.insert(v.gt_classes.begin(), v.gt_classes.end());
        classes.insert(v.pred_classes.begin(), v.pred_classes.end());
    }
    if (classes.empty()) throw EmptyDataset("dataset has no instances");

    std::map<ClassId, double> per_class;
    const std::vector<ClassId> class_list(classes.begin(), classes.end());
    std::vector<double> values(class_list.size(), 0.0);
    parallel_for(class_list.size(), [&](std::size_t ci) {
        const ClassId c = class_list[ci];
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& v : views) {
            if (!v.gt_classes.count(c) && !v.pred_classes.count(c)) continue;
            sum += frame_class_iou(v.preds, v.gts, c, v.size);
            ++n;
        }
        values[ci] = sum / static_cast<double>(n);
    });
    double total = 0.0;
    for (std::size_t ci = 0; ci < class_list.size(); ++ci) {
        per_class[class_list[ci]] = values[ci];
        total += values[ci];
    }
    return {total / static_cast<double>(class_list.size()), per_class};
}

// Average precision at mask IoU 0.5, per class over the classes present in
// GT. Predictions are ranked by score (frame order, then instance id break
// ties); each one greedily claims the unmatched same-class GT of maximal
// IoU in its frame. AP sums the interpolated precision at each recovered GT
// and divides by the GT count.
inline std::pair<double, std::map<ClassId, double>> ap50(const Dataset& gt, const Dataset& pred) {
    const auto views = detail::group_frames(gt, pred);

    std::set<ClassId> gt_classes;
    for (const auto& v : views) gt_classes.insert(v.gt_classes.begin(), v.gt_classes.end());
    if (gt_classes.empty()) throw EmptyDataset("dataset has no GT instances");

    struct Ranked {
        double score;
        std::size_t frame_index;
        std::int64_t instance_id;
        std::size_t local_index;
    };

    std::map<ClassId, double> per_class;
    double total = 0.0;
    for (const ClassId c : gt_classes) {
        std::vector<Ranked> ranked;
        std::int64_t gt_count = 0;
        for (std::size_t f = 0; f < views.size(); ++f) {
            for (std::size_t i = 0; i < views[f].preds.size(); ++i)
                if (views[f].preds[i].class_label == c)
                    ranked.push_back({views[f].preds[i].score, f, views[f].preds[i].instance_id, i});
            for (const auto& g : views[f].gts)
                if (g.class_label == c) ++gt_count;
        }
        std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
            return a.instance_id < b.instance_id;
        });

        // Greedy TP/FP decisions down the ranking.
        std::map<std::pair<std::size_t, std::int64_t>, bool> gt_used;
        std::vector<bool> is_tp(ranked.size(), false);
        for (std::size_t k = 0; k < ranked.size(); ++k) {
            const auto& r = ranked[k];
            const auto& v = views[r.frame_index];
            const BinaryMask pm = rle_decode(v.preds[r.local_index].mask);
            double best_iou = -1.0;
            std::int64_t best_gt = 0;
            bool found = false;
            for (const auto& g : v.gts) {
                if (g.class_label != c) continue;
                const auto key = std::make_pair(r.frame_index, g.instance_id);
                if (gt_used.count(key)) continue;
                const double iou = mask_iou(pm, rle_decode(g.mask));
                if (iou > best_iou || (iou == best_iou && found && g.instance_id < best_gt)) {
                    best_iou = iou;
                    best_gt = g.instance_id;
                    found = true;
                }
            }
            if (found && best_iou >= 0.5) {
                gt_used[{r.frame_index, best_gt}] = true;
                is_tp[k] = true;
            }
        }

        double ap = 0.0;
        if (gt_count > 0) {
            std::vector<double> precision(ranked.size(), 0.0);
            std::int64_t tp = 0;
            for (std::size_t k = 0; k < ranked.size(); ++k) {
                if (is_tp[k]) ++tp;
                precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
            }
            double envelope = 0.0;
            double tp_sum = 0.0;
            for (std::size_t k = ranked.size(); k-- > 0;) {
                envelope = std::max(envelope, precision[k]);
                if (is_tp[k]) tp_sum += envelope;
            }
            ap = tp_sum / static_cast<double>(gt_count);
        }
        per_class[c] = ap;
        total += ap;
    }
    return {total / static_cast<double>(gt_classes.size()), per_class};
}

inline EvalReport evaluate(const Dataset& gt, const Dataset& pred) {
    EvalReport report;
    report.ch_iou = challenge_iou(gt, pred);
    report.isi_iou = isi_iou(gt, pred);
    const auto mc = mc_iou(gt, pred);
    report.mc_iou = mc.first;
    report.per_class_iou = mc.second;
    const auto ap = ap50(gt, pred);
    report.ap50_mean = ap.first;
    report.ap50 = ap.second;
    return report;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["ch_iou"] = report.ch_iou;
    j["isi_iou"] = report.isi_iou;
    j["mc_iou"] = report.mc_iou;
    j["per_class"] = nlohmann::ordered_json::object();
    for (const auto& [c, v] : report.per_class_iou) j["per_class"][std::to_string(c)] = v;
    j["ap50"] = nlohmann::ordered_json::object();
    j["ap50"]["mean"] = report.ap50_mean;
    for (const auto& [c, v] : report.ap50) j["ap50"][std::to_string(c)] = v;
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    using detail::require_key;
    EvalReport report;
    report.ch_iou = require_key(j, "ch_iou", "$").get<double>();
    report.isi_iou = require_key(j, "isi_iou", "$").get<double>();
    report.mc_iou = require_key(j, "mc_iou", "$").get<double>();
    for (const auto& [key, value] : require_key(j, "per_class", "$").items())
        report.per_class_iou[std::stoi(key)] = value.get<double>();
    for (const auto& [key, value] : require_key(j, "ap50", "$").items()) {
        if (key == "mean")
            report.ap50_mean = value.get<double>();
        else
            report.ap50[std::stoi(key)] = value.get<double>();
    }
    return report;
}

// Fixed-width text table, one row per class plus the aggregates.
inline std::string format_report(const EvalReport& report,
                                 const std::vector<std::string>& class_names = {}) {
    char line[160];
    std::string out;
    out += "class                     iou      ap50\n";
    for (const auto& [c, v] : report.per_class_iou) {
        std::string name = "class " + std::to_string(c);
        if (c >= 1 && static_cast<std::size_t>(c) <= class_names.size())
            name += " (" + class_names[c - 1] + ")";
        const auto ap_it = report.ap50.find(c);
        if (ap_it != report.ap50.end())
            std::snprintf(line, sizeof(line), "%-22s %8.4f %9.4f\n", name.c_str(), v,
                          ap_it->second);
        else
            std::snprintf(line, sizeof(line), "%-22s %8.4f %9s\n", name.c_str(), v, "-");
        out += line;
    }
    std::snprintf(line, sizeof(line), "%-22s %8.4f\n", "ch_iou", report.ch_iou);
    out += line;
    std::snprintf(line, sizeof(line), "%-22s %8.4f\n", "isi_iou", report.isi_iou);
    out += line;
    std::snprintf(line, sizeof(line), "%-22s %8.4f\n", "mc_iou", report.mc_iou);
    out += line;
    std::snprintf(line, sizeof(line), "%-22s %8.4f\n", "ap50_mean", report.ap50_mean);
    out += line;
    return out;
}

}  // namespace s3kit
