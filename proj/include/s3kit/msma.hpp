#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "s3kit/arcloss.hpp"
#include "s3kit/datamodel.hpp"
#include "s3kit/errors.hpp"
#include "s3kit/maskcore.hpp"
#include "s3kit/numeric.hpp"
#include "s3kit/rng.hpp"

namespace s3kit {

// Everything after the backbone: per-level hard-mask attention, a 1x1 merge
// over the channel-stacked levels (finer levels pooled down to the coarsest
// grid first), global average pooling, an affine embedding layer, and the
// arc head. Pyramids arrive precomputed, so the "frozen backbone" phases of
// the schedule simply never touch them.
struct MsmaModel {
    std::vector<std::pair<int, int>> level_sizes;  // canonical (H, W) per level
    std::vector<int> level_channels;
    int merged_channels = 0;
    int embed_dim = 0;
    std::vector<double> merge_w;  // [merged_channels, sum(level_channels)]
    std::vector<double> merge_b;  // [merged_channels]
    std::vector<double> embed_w;  // [embed_dim, merged_channels]
    std::vector<double> embed_b;  // [embed_dim]
    ArcHead head;
    std::string schedule_provenance;

    int stacked_channels() const {
        int total = 0;
        for (const int c : level_channels) total += c;
        return total;
    }

    bool operator==(const MsmaModel&) const = default;
};

inline void validate(const MsmaModel& model) {
    if (model.level_channels.empty() || model.level_sizes.size() != model.level_channels.size())
        throw ShapeMismatch("model level bookkeeping is inconsistent");
    if (model.merged_channels < 1) throw ShapeMismatch("merged_channels must be >= 1");
    if (model.embed_dim < 2) throw ShapeMismatch("embedding dim must be >= 2");
    const auto expect = [](std::size_t got, std::size_t want, const char* what) {
        if (got != want) throw ShapeMismatch(std::string(what) + " has wrong size");
    };
    expect(model.merge_w.size(),
           static_cast<std::size_t>(model.merged_channels) * model.stacked_channels(), "merge_w");
    expect(model.merge_b.size(), static_cast<std::size_t>(model.merged_channels), "merge_b");
    expect(model.embed_w.size(),
           static_cast<std::size_t>(model.embed_dim) * model.merged_channels, "embed_w");
    expect(model.embed_b.size(), static_cast<std::size_t>(model.embed_dim), "embed_b");
    if (model.head.dim != model.embed_dim)
        throw ShapeMismatch("head dim differs from embedding dim");
    validate(model.head);
}

struct MsmaConfig {
    std::vector<std::pair<int, int>> level_sizes;
    std::vector<int> level_channels;
    int merged_channels = 16;
    int embed_dim = 128;
    int class_count = 0;
    double margin = 0.5;
    double scale = 1.0;
};

inline MsmaConfig config_for_pyramid(const FeaturePyramid& pyramid, int class_count) {
    validate(pyramid);
    MsmaConfig cfg;
    for (const auto& level : pyramid.levels) {
        cfg.level_sizes.emplace_back(level.dim(1), level.dim(2));
        cfg.level_channels.push_back(level.dim(0));
    }
    cfg.class_count = class_count;
    return cfg;
}

// Merge starts as identity-like channel mixing plus small seeded noise; the
// embedding layer and head use seeded uniform +-1/sqrt(fan_in).
inline MsmaModel init_model(const MsmaConfig& cfg, std::uint64_t seed) {
    MsmaModel model;
    model.level_sizes = cfg.level_sizes;
    model.level_channels = cfg.level_channels;
    model.merged_channels = cfg.merged_channels;
    model.embed_dim = cfg.embed_dim;

    Rng rng = Rng(seed).split(0x6d736d61);  // model-init stream
    const int stacked = model.stacked_channels();
    std::vector<int> fan(static_cast<std::size_t>(cfg.merged_channels), 0);
    for (int c = 0; c < stacked; ++c) ++fan[static_cast<std::size_t>(c % cfg.merged_channels)];
    model.merge_w.resize(static_cast<std::size_t>(cfg.merged_channels) * stacked);
    for (int o = 0; o < cfg.merged_channels; ++o)
        for (int c = 0; c < stacked; ++c) {
            const double base =
                (c % cfg.merged_channels == o) ? 1.0 / std::max(1, fan[static_cast<std::size_t>(o)]) : 0.0;
            model.merge_w[static_cast<std::size_t>(o) * stacked + c] = base + rng.uniform(-0.01, 0.01);
        }
    model.merge_b.assign(static_cast<std::size_t>(cfg.merged_channels), 0.0);

    const double embed_bound = 1.0 / std::sqrt(static_cast<double>(cfg.merged_channels));
    model.embed_w.resize(static_cast<std::size_t>(cfg.embed_dim) * cfg.merged_channels);
    for (double& w : model.embed_w) w = rng.uniform(-embed_bound, embed_bound);
    model.embed_b.resize(static_cast<std::size_t>(cfg.embed_dim));
    for (double& b : model.embed_b) b = rng.uniform(-embed_bound, embed_bound);

    model.head.class_count = cfg.class_count;
    model.head.dim = cfg.embed_dim;
    model.head.margin = cfg.margin;
    model.head.scale = cfg.scale;
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    model.head.weights.resize(static_cast<std::size_t>(cfg.class_count) * cfg.embed_dim);
    for (double& w : model.head.weights) w = rng.uniform(-head_bound, head_bound);

    validate(model);
    return model;
}

struct MsmaOutput {
    Embedding embedding;
    ClassId predicted = 0;
    std::vector<double> cosines;
};

namespace detail {

// Intermediates needed to push loss gradients back into the merge and
// embedding parameters.
struct ForwardTrace {
    std::vector<double> stacked_mean;  // channel means of the pooled masked stack
    std::vector<double> pooled;        // after merge conv + global average pool
    std::vector<double> pre_embed;     // affine output, before normalization
    double pre_embed_norm = 0.0;
    Embedding embedding;
};

inline MsmaOutput msma_forward_impl(const MsmaModel& model, const FeaturePyramid& pyramid,
                                    const BinaryMask& mask, ForwardTrace* trace) {
    validate(model);
    validate(pyramid);
    if (pyramid.levels.size() != model.level_channels.size())
        throw ShapeMismatch("pyramid level count differs from the model's");
    for (std::size_t l = 0; l < pyramid.levels.size(); ++l)
        if (pyramid.levels[l].dim(0) != model.level_channels[l])
            throw ShapeMismatch("pyramid channel counts differ from the model's");
    if (mask_area(mask) == 0)
        throw EmptyMaskRegion("instance mask is empty");

    const Tensor& coarsest = pyramid.levels.back();
    const int out_h = coarsest.dim(1), out_w = coarsest.dim(2);

    Tensor stacked = Tensor::zeros({model.stacked_channels(), out_h, out_w});
    int channel_base = 0;
    bool any_support = false;
    for (const auto& level : pyramid.levels) {
        const Tensor resized = resize_mask_nearest(mask, level.dim(1), level.dim(2));
        for (const double v : resized.data)
            if (v != 0.0) {
                any_support = true;
                break;
            }
        const Tensor attended = mask_attend(level, resized);
        const Tensor pooled = adaptive_avg_pool(attended, out_h, out_w);
        for (int c = 0; c < pooled.dim(0); ++c)
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x)
                    stacked.at(channel_base + c, y, x) = pooled.at(c, y, x);
        channel_base += pooled.dim(0);
    }
    if (!any_support)
        throw EmptyMaskRegion("mask support vanishes at every pyramid level");

    const Tensor merged = conv1x1(stacked, model.merge_w, model.merge_b, model.merged_channels);
    const std::vector<double> pooled = global_avg_pool(merged);
    const std::vector<double> pre_embed = affine(pooled, model.embed_w, model.embed_b);
    const Embedding embedding = l2_normalize(pre_embed);

    if (trace) {
        trace->stacked_mean = global_avg_pool(stacked);
        trace->pooled = pooled;
        trace->pre_embed = pre_embed;
        trace->pre_embed_norm = norm2(pre_embed);
        trace->embedding = embedding;
    }

    MsmaOutput out;
    out.embedding = embedding;
    out.cosines = cos_angles(model.head, embedding);
    out.predicted = predict(model.head, embedding);
    return out;
}

struct ParamGrads {
    std::vector<double> merge_w, merge_b, embed_w, embed_b;
};

// d(loss)/d(merge, embedding params) given d(loss)/d(normalized embedding).
inline ParamGrads backprop_embedding(const MsmaModel& model, const ForwardTrace& trace,
                                     const Embedding& d_embedding) {
    const int d = model.embed_dim;
    const int cm = model.merged_channels;
    const int stacked = model.stacked_channels();

    // Through v = u/|u|: du = (dv - v <v, dv>) / |u|.
    double vdot = 0.0;
    for (int i = 0; i < d; ++i) vdot += trace.embedding[static_cast<std::size_t>(i)] * d_embedding[static_cast<std::size_t>(i)];
    std::vector<double> du(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i)
        du[static_cast<std::size_t>(i)] =
            (d_embedding[static_cast<std::size_t>(i)] - trace.embedding[static_cast<std::size_t>(i)] * vdot) /
            trace.pre_embed_norm;

    ParamGrads g;
    g.embed_w.assign(model.embed_w.size(), 0.0);
    g.embed_b = du;
    std::vector<double> d_pooled(static_cast<std::size_t>(cm), 0.0);
    for (int o = 0; o < d; ++o)
        for (int c = 0; c < cm; ++c) {
            g.embed_w[static_cast<std::size_t>(o) * cm + c] = du[static_cast<std::size_t>(o)] * trace.pooled[static_cast<std::size_t>(c)];
            d_pooled[static_cast<std::size_t>(c)] +=
                model.embed_w[static_cast<std::size_t>(o) * cm + c] * du[static_cast<std::size_t>(o)];
        }

    // Global pooling and the 1x1 merge commute, so the merge gradient only
    // needs the stacked channel means.
    g.merge_b = d_pooled;
    g.merge_w.assign(model.merge_w.size(), 0.0);
    for (int o = 0; o < cm; ++o)
        for (int c = 0; c < stacked; ++c)
            g.merge_w[static_cast<std::size_t>(o) * stacked + c] =
                d_pooled[static_cast<std::size_t>(o)] * trace.stacked_mean[static_cast<std::size_t>(c)];
    return g;
}

}  // namespace detail

// Full inference pipeline for one instance: per-level mask attention,
// pooled channel stack, 1x1 merge, pooling, embedding, cosine classification.
inline MsmaOutput msma_forward(const MsmaModel& model, const FeaturePyramid& pyramid,
                               const BinaryMask& mask) {
    return detail::msma_forward_impl(model, pyramid, mask, nullptr);
}

enum class LossKind { CrossEntropy, Arc };
enum class OptimizerKind { Sgd, Adam };

struct TrainPhase {
    std::string name;
    LossKind loss = LossKind::CrossEntropy;
    int epochs = 1;
    double learning_rate = 1e-5;
    OptimizerKind optimizer = OptimizerKind::Adam;
    bool backbone_frozen = true;  // provenance only: pyramids are precomputed
    bool train_merge = false;
    bool train_embedding = false;
    bool train_head = true;
};

struct TrainSchedule {
    std::vector<TrainPhase> phases;
};

inline void validate(const TrainSchedule& schedule) {
    if (schedule.phases.empty()) throw ConfigError("schedule needs at least one phase");
    for (const auto& p : schedule.phases) {
        if (p.epochs < 1) throw ConfigError("phase '" + p.name + "': epochs must be >= 1");
        if (!(p.learning_rate > 0.0))
            throw ConfigError("phase '" + p.name + "': learning rate must be positive");
        if (!p.train_merge && !p.train_embedding && !p.train_head)
            throw ConfigError("phase '" + p.name + "': nothing to train");
    }
}

// The staged recipe: a cross-entropy warm-up of the classification head,
// metric learning with arc loss, a short end-to-end pass at a much lower
// rate, and a final cross-entropy pass over the head.
inline TrainSchedule default_schedule() {
    TrainSchedule s;
    s.phases.push_back({"warmup_ce", LossKind::CrossEntropy, 10, 1e-5, OptimizerKind::Adam, true,
                        false, false, true});
    s.phases.push_back(
        {"arc_head", LossKind::Arc, 15, 1e-5, OptimizerKind::Adam, true, false, false, true});
    s.phases.push_back({"arc_end_to_end", LossKind::Arc, 5, 1e-7, OptimizerKind::Adam, false, true,
                        true, true});
    s.phases.push_back({"final_ce", LossKind::CrossEntropy, 10, 1e-5, OptimizerKind::Adam, true,
                        false, false, true});
    return s;
}

// Cross-entropy-only variant with the same shape; the ablation baseline.
inline TrainSchedule cel_schedule() {
    TrainSchedule s = default_schedule();
    for (auto& p : s.phases) p.loss = LossKind::CrossEntropy;
    s.phases[1].name = "ce_head";
    s.phases[2].name = "ce_end_to_end";
    return s;
}

inline nlohmann::ordered_json schedule_to_json(const TrainSchedule& schedule) {
    nlohmann::ordered_json phases = nlohmann::ordered_json::array();
    for (const auto& p : schedule.phases) {
        nlohmann::ordered_json j;
        j["name"] = p.name;
        j["loss"] = p.loss == LossKind::Arc ? "arc" : "ce";
        j["epochs"] = p.epochs;
        j["learning_rate"] = p.learning_rate;
        j["optimizer"] = p.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
        j["backbone_frozen"] = p.backbone_frozen;
        nlohmann::ordered_json trainable = nlohmann::ordered_json::array();
        if (p.train_merge) trainable.push_back("merge");
        if (p.train_embedding) trainable.push_back("embedding");
        if (p.train_head) trainable.push_back("head");
        j["trainable"] = trainable;
        phases.push_back(std::move(j));
    }
    return nlohmann::ordered_json{{"phases", phases}};
}

inline TrainSchedule schedule_from_json(const nlohmann::json& j) {
    using detail::require_key;
    TrainSchedule schedule;
    const auto& phases = require_key(j, "phases", "$");
    if (!phases.is_array()) throw SchemaError("phases", "must be an array");
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const std::string path = "phases[" + std::to_string(i) + "]";
        const auto& rec = phases[i];
        TrainPhase p;
        p.name = require_key(rec, "name", path).get<std::string>();
        const auto loss = require_key(rec, "loss", path).get<std::string>();
        if (loss == "arc")
            p.loss = LossKind::Arc;
        else if (loss == "ce")
            p.loss = LossKind::CrossEntropy;
        else
            throw SchemaError(path + ".loss", "expected 'ce' or 'arc'");
        p.epochs = require_key(rec, "epochs", path).get<int>();
        p.learning_rate = require_key(rec, "learning_rate", path).get<double>();
        const auto opt = require_key(rec, "optimizer", path).get<std::string>();
        if (opt == "adam")
            p.optimizer = OptimizerKind::Adam;
        else if (opt == "sgd")
            p.optimizer = OptimizerKind::Sgd;
        else
            throw SchemaError(path + ".optimizer", "expected 'sgd' or 'adam'");
        p.backbone_frozen = require_key(rec, "backbone_frozen", path).get<bool>();
        p.train_merge = p.train_embedding = p.train_head = false;
        for (const auto& t : require_key(rec, "trainable", path)) {
            const auto name = t.get<std::string>();
            if (name == "merge")
                p.train_merge = true;
            else if (name == "embedding")
                p.train_embedding = true;
            else if (name == "head")
                p.train_head = true;
            else
                throw SchemaError(path + ".trainable", "unknown component '" + name + "'");
        }
        schedule.phases.push_back(std::move(p));
    }
    validate(schedule);
    return schedule;
}

struct TrainExample {
    std::shared_ptr<const FeaturePyramid> pyramid;
    BinaryMask mask;
    ClassId target = 0;
};

struct TrainLogEntry {
    std::string phase;
    int epoch = 0;
    double mean_loss = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
};

namespace detail {

// One optimizer slot per parameter group; state is reset at phase start.
struct Optimizer {
    OptimizerKind kind;
    double lr;
    std::vector<double> m, v;
    std::int64_t t = 0;

    Optimizer(OptimizerKind kind, double lr, std::size_t size)
        : kind(kind), lr(lr), m(size, 0.0), v(size, 0.0) {}

    void step(std::vector<double>& param, const std::vector<double>& grad) {
        if (kind == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
            return;
        }
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

}  // namespace detail

// Runs the schedule phases in order with per-example updates. Deterministic
// for a fixed (seed, schedule, data): initialization, shuffling and update
// order all come from fixed streams. While merge and embedding stay frozen
// the per-example embeddings are computed once per phase.
inline TrainLog train(MsmaModel& model, const std::vector<TrainExample>& examples,
                      const TrainSchedule& schedule, std::uint64_t seed) {
    validate(model);
    validate(schedule);
    if (examples.empty()) throw EmptyDataset("training needs at least one example");
    for (const auto& ex : examples)
        if (ex.target < 1 || ex.target > model.head.class_count)
            throw BadTarget("training target outside 1.." + std::to_string(model.head.class_count));

    TrainLog log;
    Rng shuffle_root = Rng(seed).split(0x7368756611);

    for (std::size_t phase_idx = 0; phase_idx < schedule.phases.size(); ++phase_idx) {
        const TrainPhase& phase = schedule.phases[phase_idx];
        const bool full_backprop = phase.train_merge || phase.train_embedding;

        std::vector<Embedding> cached;
        if (!full_backprop) {
            cached.reserve(examples.size());
            for (const auto& ex : examples)
                cached.push_back(msma_forward(model, *ex.pyramid, ex.mask).embedding);
        }

        detail::Optimizer opt_head(phase.optimizer, phase.learning_rate, model.head.weights.size());
        detail::Optimizer opt_merge_w(phase.optimizer, phase.learning_rate, model.merge_w.size());
        detail::Optimizer opt_merge_b(phase.optimizer, phase.learning_rate, model.merge_b.size());
        detail::Optimizer opt_embed_w(phase.optimizer, phase.learning_rate, model.embed_w.size());
        detail::Optimizer opt_embed_b(phase.optimizer, phase.learning_rate, model.embed_b.size());

        std::vector<std::size_t> order(examples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

        for (int epoch = 0; epoch < phase.epochs; ++epoch) {
            Rng epoch_rng = shuffle_root.split(phase_idx * 1000003 + static_cast<std::uint64_t>(epoch));
            epoch_rng.shuffle(order);

            double loss_sum = 0.0;
            for (const std::size_t idx : order) {
                const TrainExample& ex = examples[idx];
                detail::ForwardTrace trace;
                Embedding embedding;
                if (full_backprop) {
                    detail::msma_forward_impl(model, *ex.pyramid, ex.mask, &trace);
                    embedding = trace.embedding;
                } else {
                    embedding = cached[idx];
                }

                const std::vector<ArcSample> batch{{embedding, ex.target}};
                const ArcGrad grad = phase.loss == LossKind::Arc
                                         ? arc_loss_grad(model.head, batch)
                                         : ce_head_grad(model.head, batch);
                if (!std::isfinite(grad.loss)) throw DivergedLoss(phase.name, epoch + 1);
                loss_sum += grad.loss;

                if (full_backprop) {
                    const detail::ParamGrads pg =
                        detail::backprop_embedding(model, trace, grad.d_embeddings[0]);
                    if (phase.train_merge) {
                        opt_merge_w.step(model.merge_w, pg.merge_w);
                        opt_merge_b.step(model.merge_b, pg.merge_b);
                    }
                    if (phase.train_embedding) {
                        opt_embed_w.step(model.embed_w, pg.embed_w);
                        opt_embed_b.step(model.embed_b, pg.embed_b);
                    }
                }
                if (phase.train_head) opt_head.step(model.head.weights, grad.d_weights);
            }
            log.entries.push_back(
                {phase.name, epoch + 1, loss_sum / static_cast<double>(examples.size())});
        }
    }
    model.schedule_provenance = schedule_to_json(schedule).dump();
    return log;
}

struct RelabelResult {
    std::vector<Instance> instances;
    std::vector<std::int64_t> skipped;  // kept their provisional label
};

// Stage-3 relabel: each instance's class label is replaced by the model's
// prediction from its own predicted mask. Masks, scores and ids never
// change; instances whose mask has no feature support keep their label and
// are reported back.
inline RelabelResult relabel(const MsmaModel& model, const std::vector<Instance>& instances,
                             const FeaturePyramid& pyramid) {
    RelabelResult result;
    result.instances = instances;
    for (auto& inst : result.instances) {
        const BinaryMask mask = rle_decode(inst.mask);
        try {
            inst.class_label = msma_forward(model, pyramid, mask).predicted;
        } catch (const EmptyMaskRegion&) {
            result.skipped.push_back(inst.instance_id);
        }
    }
    return result;
}

namespace detail {

inline void write_f64_block(std::ostream& out, const std::vector<double>& block) {
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * sizeof(double)));
}

inline void read_f64_block(std::istream& in, std::vector<double>& block, std::size_t n,
                           const std::string& what) {
    block.resize(n);
    in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError("truncated file while reading " + what);
}

}  // namespace detail

constexpr std::uint32_t kModelFormatVersion = 1;

// Model container: magic "S3M1", u32 version, dimension table, margin and
// scale, the training-schedule provenance string, then float64
// little-endian weight blocks (merge_w, merge_b, embed_w, embed_b, head_w).
inline void save_model(const MsmaModel& model, const std::string& path) {
    validate(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write("S3M1", 4);
    detail::write_u32(out, kModelFormatVersion);
    detail::write_u32(out, static_cast<std::uint32_t>(model.level_sizes.size()));
    for (std::size_t l = 0; l < model.level_sizes.size(); ++l) {
        detail::write_u32(out, static_cast<std::uint32_t>(model.level_channels[l]));
        detail::write_u32(out, static_cast<std::uint32_t>(model.level_sizes[l].first));
        detail::write_u32(out, static_cast<std::uint32_t>(model.level_sizes[l].second));
    }
    detail::write_u32(out, static_cast<std::uint32_t>(model.merged_channels));
    detail::write_u32(out, static_cast<std::uint32_t>(model.embed_dim));
    detail::write_u32(out, static_cast<std::uint32_t>(model.head.class_count));
    const double margin = model.head.margin, scale = model.head.scale;
    out.write(reinterpret_cast<const char*>(&margin), sizeof(margin));
    out.write(reinterpret_cast<const char*>(&scale), sizeof(scale));
    detail::write_u32(out, static_cast<std::uint32_t>(model.schedule_provenance.size()));
    out.write(model.schedule_provenance.data(),
              static_cast<std::streamsize>(model.schedule_provenance.size()));
    detail::write_f64_block(out, model.merge_w);
    detail::write_f64_block(out, model.merge_b);
    detail::write_f64_block(out, model.embed_w);
    detail::write_f64_block(out, model.embed_b);
    detail::write_f64_block(out, model.head.weights);
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline MsmaModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "S3M1", 4) != 0)
        throw VersionMismatch("'" + path + "' is not a S3M1 model file");
    const std::uint32_t version = detail::read_u32(in, "version");
    if (version != kModelFormatVersion)
        throw VersionMismatch("unsupported model version " + std::to_string(version));

    MsmaModel model;
    const std::uint32_t levels = detail::read_u32(in, "level count");
    for (std::uint32_t l = 0; l < levels; ++l) {
        const int channels = static_cast<int>(detail::read_u32(in, "level channels"));
        const int h = static_cast<int>(detail::read_u32(in, "level height"));
        const int w = static_cast<int>(detail::read_u32(in, "level width"));
        model.level_channels.push_back(channels);
        model.level_sizes.emplace_back(h, w);
    }
    model.merged_channels = static_cast<int>(detail::read_u32(in, "merged channels"));
    model.embed_dim = static_cast<int>(detail::read_u32(in, "embedding dim"));
    model.head.class_count = static_cast<int>(detail::read_u32(in, "class count"));
    model.head.dim = model.embed_dim;
    in.read(reinterpret_cast<char*>(&model.head.margin), sizeof(double));
    in.read(reinterpret_cast<char*>(&model.head.scale), sizeof(double));
    if (!in) throw IoError("truncated file while reading margin/scale");
    const std::uint32_t prov_len = detail::read_u32(in, "provenance length");
    model.schedule_provenance.resize(prov_len);
    in.read(model.schedule_provenance.data(), prov_len);
    if (!in) throw IoError("truncated file while reading provenance");

    const std::size_t stacked = static_cast<std::size_t>(model.stacked_channels());
    detail::read_f64_block(in, model.merge_w,
                           static_cast<std::size_t>(model.merged_channels) * stacked, "merge_w");
    detail::read_f64_block(in, model.merge_b, static_cast<std::size_t>(model.merged_channels),
                           "merge_b");
    detail::read_f64_block(in, model.embed_w,
                           static_cast<std::size_t>(model.embed_dim) * model.merged_channels,
                           "embed_w");
    detail::read_f64_block(in, model.embed_b, static_cast<std::size_t>(model.embed_dim), "embed_b");
    detail::read_f64_block(in, model.head.weights,
                           static_cast<std::size_t>(model.head.class_count) * model.embed_dim,
                           "head weights");
    validate(model);
    return model;
}

}  // namespace s3kit
