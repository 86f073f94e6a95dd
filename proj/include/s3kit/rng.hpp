#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace s3kit {

// splitmix64 stream. Used everywhere instead of <random> distributions so
// that generated bytes are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Derive an independent-looking substream, e.g. one per frame.
    Rng split(std::uint64_t tag) const {
        Rng mix(state_ ^ (0x9e3779b97f4a7c15ull * (tag + 1)));
        mix.next_u64();
        return Rng(mix.next_u64());
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace s3kit
