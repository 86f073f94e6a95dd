#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "s3kit/errors.hpp"
#include "s3kit/numeric.hpp"

namespace s3kit {

using Embedding = std::vector<double>;

// Additive-angular-margin classifier state: one weight row per class, the
// angular margin m, and a logit scale s. s defaults to 1 so the loss is the
// plain margin-softmax expression; margin-softmax losses typically run with
// a larger s in practice.
struct ArcHead {
    int class_count = 0;
    int dim = 0;
    std::vector<double> weights;  // [class_count, dim], row-major
    double margin = 0.5;
    double scale = 1.0;

    const double* row(int j) const { return weights.data() + static_cast<std::size_t>(j) * dim; }
    double* row(int j) { return weights.data() + static_cast<std::size_t>(j) * dim; }

    bool operator==(const ArcHead&) const = default;
};

inline void validate(const ArcHead& head) {
    if (head.class_count < 2) throw ConfigError("arc head needs at least 2 classes");
    if (head.dim < 1) throw ConfigError("arc head embedding dim must be >= 1");
    if (static_cast<std::int64_t>(head.weights.size()) !=
        static_cast<std::int64_t>(head.class_count) * head.dim)
        throw ShapeMismatch("arc head weight matrix has wrong size");
    if (!(head.margin >= 0.0 && head.margin < std::numbers::pi / 2))
        throw ConfigError("margin must lie in [0, pi/2)");
    if (!(head.scale > 0.0)) throw ConfigError("scale must be positive");
}

using ArcSample = std::pair<Embedding, ClassId>;

namespace detail {

constexpr double kCosClamp = 1e-7;    // keeps arccos away from +-1
constexpr double kSingular = 1e-6;    // target cosines this close to +-1 are rejected

inline double dot(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

inline double row_norm(const double* a, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * a[i];
    return std::sqrt(acc);
}

inline double clamp_cos(double c) {
    return std::clamp(c, -1.0 + kCosClamp, 1.0 - kCosClamp);
}

// Raw (unclamped) cosines plus the norms they were built from.
struct CosineTrace {
    std::vector<double> raw;
    double embed_norm = 0.0;
    std::vector<double> row_norms;
};

inline CosineTrace cosine_trace(const ArcHead& head, const Embedding& e) {
    validate(head);
    if (static_cast<int>(e.size()) != head.dim)
        throw ShapeMismatch("embedding dim differs from head dim");
    CosineTrace t;
    t.embed_norm = row_norm(e.data(), head.dim);
    if (t.embed_norm <= 1e-12) throw ZeroVector("embedding is (near) zero");
    t.raw.resize(static_cast<std::size_t>(head.class_count));
    t.row_norms.resize(static_cast<std::size_t>(head.class_count));
    for (int j = 0; j < head.class_count; ++j) {
        const double wn = row_norm(head.row(j), head.dim);
        if (wn <= 1e-12) throw ZeroVector("weight row " + std::to_string(j + 1) + " is (near) zero");
        t.row_norms[static_cast<std::size_t>(j)] = wn;
        t.raw[static_cast<std::size_t>(j)] = dot(e.data(), head.row(j), head.dim) / (t.embed_norm * wn);
    }
    return t;
}

inline double log_sum_exp(const std::vector<double>& z) {
    double top = z[0];
    for (const double v : z) top = std::max(top, v);
    double acc = 0.0;
    for (const double v : z) acc += std::exp(v - top);
    return top + std::log(acc);
}

inline int target_index(const ArcHead& head, ClassId target) {
    if (target < 1 || target > head.class_count)
        throw BadTarget("target class " + std::to_string(target) + " outside 1.." +
                        std::to_string(head.class_count));
    return target - 1;
}

// Margin logits for one sample: s*cos(theta_t + m) at the target slot,
// s*cos(theta_j) elsewhere.
inline std::vector<double> margin_logits(const ArcHead& head, const CosineTrace& tr, int t) {
    std::vector<double> z(tr.raw.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = head.scale * clamp_cos(tr.raw[j]);
    const double theta = std::acos(clamp_cos(tr.raw[static_cast<std::size_t>(t)]));
    z[static_cast<std::size_t>(t)] = head.scale * std::cos(theta + head.margin);
    return z;
}

}  // namespace detail

// cos(theta_j) between the embedding and each class weight row, clamped to
// [-1+1e-7, 1-1e-7] before any arccos downstream.
inline std::vector<double> cos_angles(const ArcHead& head, const Embedding& e) {
    const auto tr = detail::cosine_trace(head, e);
    std::vector<double> out(tr.raw.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = detail::clamp_cos(tr.raw[j]);
    return out;
}

// argmax_j cos(theta_j), ties to the lower class id.
inline ClassId predict(const ArcHead& head, const Embedding& e) {
    const auto cosines = cos_angles(head, e);
    std::size_t best = 0;
    for (std::size_t j = 1; j < cosines.size(); ++j)
        if (cosines[j] > cosines[best]) best = j;
    return static_cast<ClassId>(best + 1);
}

// Batch mean of -log softmax_t over the margin logits.
inline double arc_loss(const ArcHead& head, const std::vector<ArcSample>& batch) {
    if (batch.empty()) throw EmptyDataset("arc_loss needs a nonempty batch");
    double total = 0.0;
    for (const auto& [e, target] : batch) {
        const auto tr = detail::cosine_trace(head, e);
        const int t = detail::target_index(head, target);
        const auto z = detail::margin_logits(head, tr, t);
        total += detail::log_sum_exp(z) - z[static_cast<std::size_t>(t)];
    }
    return total / static_cast<double>(batch.size());
}

struct ArcGrad {
    double loss = 0.0;
    std::vector<double> d_weights;             // [class_count, dim]
    std::vector<Embedding> d_embeddings;       // one [dim] per sample
};

// Analytic gradient of arc_loss through the softmax, the arccos at the
// target slot, and the cosine normalization of both operands.
inline ArcGrad arc_loss_grad(const ArcHead& head, const std::vector<ArcSample>& batch) {
    if (batch.empty()) throw EmptyDataset("arc_loss_grad needs a nonempty batch");
    ArcGrad grad;
    grad.d_weights.assign(head.weights.size(), 0.0);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    for (const auto& [e, target] : batch) {
        const auto tr = detail::cosine_trace(head, e);
        const int t = detail::target_index(head, target);
        const double raw_t = tr.raw[static_cast<std::size_t>(t)];
        if (std::abs(raw_t) > 1.0 - detail::kSingular)
            throw SingularAngle("target cosine within 1e-6 of +-1");

        const auto z = detail::margin_logits(head, tr, t);
        const double lse = detail::log_sum_exp(z);
        grad.loss += (lse - z[static_cast<std::size_t>(t)]) * inv_batch;

        Embedding de(static_cast<std::size_t>(head.dim), 0.0);
        for (int j = 0; j < head.class_count; ++j) {
            const double p = std::exp(z[static_cast<std::size_t>(j)] - lse);
            const double dz = (p - (j == t ? 1.0 : 0.0)) * inv_batch;

            const double raw = tr.raw[static_cast<std::size_t>(j)];
            double dz_dcos;
            if (j == t) {
                const double c = detail::clamp_cos(raw);
                const double sin_theta = std::sqrt(1.0 - c * c);
                dz_dcos = head.scale * (std::cos(head.margin) +
                                        std::sin(head.margin) * c / sin_theta);
            } else {
                // Clamped cosines are flat, so their gradient vanishes.
                dz_dcos = (std::abs(raw) >= 1.0 - detail::kCosClamp) ? 0.0 : head.scale;
            }
            const double q = dz * dz_dcos;
            if (q == 0.0) continue;

            const double wn = tr.row_norms[static_cast<std::size_t>(j)];
            const double en = tr.embed_norm;
            const double* w = head.row(j);
            double* dw = grad.d_weights.data() + static_cast<std::size_t>(j) * head.dim;
            for (int i = 0; i < head.dim; ++i) {
                de[static_cast<std::size_t>(i)] += q * (w[i] / (en * wn) - raw * e[static_cast<std::size_t>(i)] / (en * en));
                dw[i] += q * (e[static_cast<std::size_t>(i)] / (en * wn) - raw * w[i] / (wn * wn));
            }
        }
        grad.d_embeddings.push_back(std::move(de));
    }
    return grad;
}

// Plain softmax cross-entropy over arbitrary logits; targets are 1-based.
inline double softmax_cross_entropy(const std::vector<double>& logits, ClassId target) {
    if (target < 1 || target > static_cast<ClassId>(logits.size()))
        throw BadTarget("target class outside the logit range");
    return detail::log_sum_exp(logits) - logits[static_cast<std::size_t>(target - 1)];
}

inline std::vector<double> softmax_cross_entropy_grad(const std::vector<double>& logits,
                                                      ClassId target) {
    if (target < 1 || target > static_cast<ClassId>(logits.size()))
        throw BadTarget("target class outside the logit range");
    const double lse = detail::log_sum_exp(logits);
    std::vector<double> grad(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j)
        grad[j] = std::exp(logits[j] - lse) - (static_cast<ClassId>(j + 1) == target ? 1.0 : 0.0);
    return grad;
}

// Cross-entropy over the head's unnormalized dot-product logits z_j = <e, W_j>.
// Used by the warm-up and final phases of the staged schedule and by the
// cross-entropy-only ablation.
inline double ce_head_loss(const ArcHead& head, const std::vector<ArcSample>& batch) {
    validate(head);
    if (batch.empty()) throw EmptyDataset("ce_head_loss needs a nonempty batch");
    double total = 0.0;
    for (const auto& [e, target] : batch) {
        if (static_cast<int>(e.size()) != head.dim)
            throw ShapeMismatch("embedding dim differs from head dim");
        std::vector<double> z(static_cast<std::size_t>(head.class_count));
        for (int j = 0; j < head.class_count; ++j)
            z[static_cast<std::size_t>(j)] = detail::dot(e.data(), head.row(j), head.dim);
        total += softmax_cross_entropy(z, target);
    }
    return total / static_cast<double>(batch.size());
}

inline ArcGrad ce_head_grad(const ArcHead& head, const std::vector<ArcSample>& batch) {
    validate(head);
    if (batch.empty()) throw EmptyDataset("ce_head_grad needs a nonempty batch");
    ArcGrad grad;
    grad.d_weights.assign(head.weights.size(), 0.0);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const auto& [e, target] : batch) {
        if (static_cast<int>(e.size()) != head.dim)
            throw ShapeMismatch("embedding dim differs from head dim");
        std::vector<double> z(static_cast<std::size_t>(head.class_count));
        for (int j = 0; j < head.class_count; ++j)
            z[static_cast<std::size_t>(j)] = detail::dot(e.data(), head.row(j), head.dim);
        grad.loss += softmax_cross_entropy(z, target) * inv_batch;
        const auto dz = softmax_cross_entropy_grad(z, target);
        Embedding de(static_cast<std::size_t>(head.dim), 0.0);
        for (int j = 0; j < head.class_count; ++j) {
            const double g = dz[static_cast<std::size_t>(j)] * inv_batch;
            const double* w = head.row(j);
            double* dw = grad.d_weights.data() + static_cast<std::size_t>(j) * head.dim;
            for (int i = 0; i < head.dim; ++i) {
                dw[i] += g * e[static_cast<std::size_t>(i)];
                de[static_cast<std::size_t>(i)] += g * w[i];
            }
        }
        grad.d_embeddings.push_back(std::move(de));
    }
    return grad;
}

}  // namespace s3kit
