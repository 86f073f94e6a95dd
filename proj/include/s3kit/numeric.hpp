#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "s3kit/errors.hpp"
#include "s3kit/maskcore.hpp"

namespace s3kit {

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

// Dense row-major tensor of 64-bit floats, rank <= 4. Feature maps use
// [channels, height, width].
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.data.assign(static_cast<std::size_t>(t.numel()), 0.0);
        return t;
    }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (const int d : shape) n *= d;
        return n;
    }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
    }

    bool operator==(const Tensor&) const = default;
};

inline void validate(const Tensor& t) {
    if (t.shape.empty() || t.rank() > 4) throw ShapeMismatch("tensor rank must be 1..4");
    for (const int d : t.shape)
        if (d < 1) throw ShapeMismatch("tensor dims must be positive");
    if (static_cast<std::int64_t>(t.data.size()) != t.numel())
        throw ShapeMismatch("tensor data length does not match shape");
    for (const double v : t.data)
        if (!std::isfinite(v)) throw NonFiniteValue("tensor holds a non-finite value");
}

// Ordered multi-scale feature maps for one frame, finest level first.
struct FeaturePyramid {
    std::vector<Tensor> levels;

    std::vector<int> channel_counts() const {
        std::vector<int> out;
        for (const auto& l : levels) out.push_back(l.dim(0));
        return out;
    }

    bool operator==(const FeaturePyramid&) const = default;
};

inline void validate(const FeaturePyramid& p) {
    if (p.levels.empty()) throw ShapeMismatch("pyramid needs at least one level");
    int prev_h = 0;
    for (std::size_t i = 0; i < p.levels.size(); ++i) {
        const Tensor& t = p.levels[i];
        if (t.rank() != 3) throw ShapeMismatch("pyramid levels must be [C,H,W]");
        validate(t);
        if (i > 0 && t.dim(1) >= prev_h)
            throw ShapeMismatch("pyramid level heights must strictly decrease");
        prev_h = t.dim(1);
    }
}

// Nearest-neighbor resize sampling at pixel centers:
// source index = floor((i + 0.5) * src / target). Output values stay in
// {0.0, 1.0}, keeping the mask hard.
inline Tensor resize_mask_nearest(const BinaryMask& mask, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1) throw ShapeMismatch("resize target dims must be >= 1");
    Tensor out = Tensor::zeros({1, target_h, target_w});
    const double sy = static_cast<double>(mask.size.height) / target_h;
    const double sx = static_cast<double>(mask.size.width) / target_w;
    for (int y = 0; y < target_h; ++y) {
        const int src_y = static_cast<int>((y + 0.5) * sy);
        for (int x = 0; x < target_w; ++x) {
            const int src_x = static_cast<int>((x + 0.5) * sx);
            out.at(0, y, x) = mask.at(src_y, src_x) ? 1.0 : 0.0;
        }
    }
    return out;
}

// Hard-mask attention: out[c,y,x] = feat[c,y,x] where the mask is set, and
// an exact 0.0 elsewhere (so values outside the support cannot leak through
// signed zeros).
inline Tensor mask_attend(const Tensor& feat, const Tensor& mask) {
    if (feat.rank() != 3 || mask.rank() != 3 || mask.dim(0) != 1 ||
        feat.dim(1) != mask.dim(1) || feat.dim(2) != mask.dim(2))
        throw ShapeMismatch("mask_attend expects feat [C,H,W] and mask [1,H,W]");
    Tensor out = Tensor::zeros(feat.shape);
    for (int c = 0; c < feat.dim(0); ++c)
        for (int y = 0; y < feat.dim(1); ++y)
            for (int x = 0; x < feat.dim(2); ++x) {
                const double m = mask.at(0, y, x);
                out.at(c, y, x) = (m == 0.0) ? 0.0 : feat.at(c, y, x) * m;
            }
    return out;
}

inline Tensor conv1x1(const Tensor& input, const std::vector<double>& weights,
                      const std::vector<double>& bias, int out_channels) {
    if (input.rank() != 3) throw ShapeMismatch("conv1x1 expects [C,H,W]");
    const int c_in = input.dim(0);
    if (static_cast<int>(weights.size()) != out_channels * c_in ||
        static_cast<int>(bias.size()) != out_channels)
        throw ShapeMismatch("conv1x1 weight dims disagree with channel counts");
    Tensor out = Tensor::zeros({out_channels, input.dim(1), input.dim(2)});
    for (int o = 0; o < out_channels; ++o)
        for (int y = 0; y < input.dim(1); ++y)
            for (int x = 0; x < input.dim(2); ++x) {
                double acc = bias[o];
                for (int c = 0; c < c_in; ++c)
                    acc += weights[static_cast<std::size_t>(o) * c_in + c] * input.at(c, y, x);
                out.at(o, y, x) = acc;
            }
    return out;
}

// Mean over bins [floor(y*H/Ho), floor((y+1)*H/Ho)) per axis; identity when
// the sizes match.
inline Tensor adaptive_avg_pool(const Tensor& input, int out_h, int out_w) {
    if (input.rank() != 3) throw ShapeMismatch("adaptive_avg_pool expects [C,H,W]");
    const int h = input.dim(1), w = input.dim(2);
    if (out_h < 1 || out_w < 1 || out_h > h || out_w > w)
        throw ShapeMismatch("pool target must be within the input size");
    Tensor out = Tensor::zeros({input.dim(0), out_h, out_w});
    for (int c = 0; c < input.dim(0); ++c)
        for (int y = 0; y < out_h; ++y) {
            const int y0 = y * h / out_h, y1 = (y + 1) * h / out_h;
            for (int x = 0; x < out_w; ++x) {
                const int x0 = x * w / out_w, x1 = (x + 1) * w / out_w;
                double acc = 0.0;
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) acc += input.at(c, yy, xx);
                out.at(c, y, x) = acc / (static_cast<double>(y1 - y0) * (x1 - x0));
            }
        }
    return out;
}

inline std::vector<double> global_avg_pool(const Tensor& input) {
    if (input.rank() != 3) throw ShapeMismatch("global_avg_pool expects [C,H,W]");
    const std::int64_t hw = static_cast<std::int64_t>(input.dim(1)) * input.dim(2);
    std::vector<double> out(static_cast<std::size_t>(input.dim(0)), 0.0);
    for (int c = 0; c < input.dim(0); ++c) {
        double acc = 0.0;
        for (int y = 0; y < input.dim(1); ++y)
            for (int x = 0; x < input.dim(2); ++x) acc += input.at(c, y, x);
        out[static_cast<std::size_t>(c)] = acc / static_cast<double>(hw);
    }
    return out;
}

inline double norm2(const std::vector<double>& v) {
    double acc = 0.0;
    for (const double x : v) acc += x * x;
    return std::sqrt(acc);
}

inline std::vector<double> l2_normalize(const std::vector<double>& v) {
    const double n = norm2(v);
    if (n <= 1e-12) throw ZeroVector("cannot normalize a near-zero vector");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

inline std::vector<double> affine(const std::vector<double>& v,
                                  const std::vector<double>& weights,
                                  const std::vector<double>& bias) {
    const std::size_t d_in = v.size();
    const std::size_t d_out = bias.size();
    if (weights.size() != d_in * d_out)
        throw ShapeMismatch("affine weight dims disagree with vector sizes");
    std::vector<double> out(d_out);
    for (std::size_t o = 0; o < d_out; ++o) {
        double acc = bias[o];
        for (std::size_t i = 0; i < d_in; ++i) acc += weights[o * d_in + i] * v[i];
        out[o] = acc;
    }
    return out;
}

// Central differences per coordinate: (f(x+eps*e_i) - f(x-eps*e_i)) / 2eps.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double epsilon = 1e-6) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    Tensor grad = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double saved = probe.data[i];
        probe.data[i] = saved + epsilon;
        const double hi = f(probe);
        probe.data[i] = saved - epsilon;
        const double lo = f(probe);
        probe.data[i] = saved;
        if (!std::isfinite(hi) || !std::isfinite(lo))
            throw NonFiniteValue("objective returned a non-finite value");
        grad.data[i] = (hi - lo) / (2.0 * epsilon);
    }
    return grad;
}

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("truncated file while reading " + what);
    return v;
}

}  // namespace detail

// Flat binary pyramid container: magic "S3T1", u32 level count, one
// (u32 rank, u32 dims...) header per level, then the float32 payloads in
// the same order. Values are widened to 64-bit on load.
inline void save_pyramid(const FeaturePyramid& pyramid, const std::string& path) {
    validate(pyramid);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write("S3T1", 4);
    detail::write_u32(out, static_cast<std::uint32_t>(pyramid.levels.size()));
    for (const auto& level : pyramid.levels) {
        detail::write_u32(out, static_cast<std::uint32_t>(level.rank()));
        for (const int d : level.shape) detail::write_u32(out, static_cast<std::uint32_t>(d));
    }
    for (const auto& level : pyramid.levels) {
        for (const double v : level.data) {
            const float f = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&f), sizeof(f));
        }
    }
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline FeaturePyramid load_pyramid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "S3T1", 4) != 0)
        throw VersionMismatch("'" + path + "' is not a S3T1 pyramid file");
    const std::uint32_t level_count = detail::read_u32(in, "level count");
    FeaturePyramid pyramid;
    for (std::uint32_t l = 0; l < level_count; ++l) {
        const std::uint32_t rank = detail::read_u32(in, "level rank");
        if (rank < 1 || rank > 4) throw VersionMismatch("level rank outside 1..4");
        Tensor t;
        for (std::uint32_t i = 0; i < rank; ++i)
            t.shape.push_back(static_cast<int>(detail::read_u32(in, "level dims")));
        pyramid.levels.push_back(std::move(t));
    }
    for (auto& level : pyramid.levels) {
        level.data.resize(static_cast<std::size_t>(level.numel()));
        for (double& v : level.data) {
            float f = 0.0f;
            in.read(reinterpret_cast<char*>(&f), sizeof(f));
            if (!in) throw IoError("truncated payload in '" + path + "'");
            v = static_cast<double>(f);
        }
    }
    validate(pyramid);
    return pyramid;
}

}  // namespace s3kit
