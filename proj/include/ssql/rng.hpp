#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace ssql {

// PCG32 (O'Neill's pcg32_random_r). Chosen over std::mt19937 because the
// whole state is two u64 words: trivial to checkpoint and bit-identical
// across platforms and standard-library versions.
class Pcg32 {
public:
    Pcg32() { seed(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL); }
    Pcg32(uint64_t initstate, uint64_t initseq) { seed(initstate, initseq); }

    void seed(uint64_t initstate, uint64_t initseq) {
        state_ = 0u;
        inc_ = (initseq << 1u) | 1u;
        next_u32();
        state_ += initstate;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // [0, 1)
    float uniform() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    double uniform_double() { return static_cast<double>(next_u32() >> 5) * 0x1.0p-27; }

    // Box-Muller without spare caching so the state stays exactly two words.
    float normal() {
        float u1 = uniform();
        while (u1 <= 0.0f) u1 = uniform();
        float u2 = uniform();
        return std::sqrt(-2.0f * std::log(u1)) *
               std::cos(2.0f * std::numbers::pi_v<float> * u2);
    }

    float normal(float mean, float stddev) { return mean + stddev * normal(); }

    // Unbiased integer in [0, n) via rejection.
    uint32_t bounded(uint32_t n) {
        if (n <= 1) return 0;
        uint32_t threshold = (-n) % n;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % n;
        }
    }

    int randint(int n) { return static_cast<int>(bounded(static_cast<uint32_t>(n))); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = bounded(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::array<uint64_t, 2> state_words() const { return {state_, inc_}; }
    void restore(const std::array<uint64_t, 2>& w) {
        state_ = w[0];
        inc_ = w[1];
    }

    bool operator==(const Pcg32& o) const { return state_ == o.state_ && inc_ == o.inc_; }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 0;
};

// Named substream of a master seed. Distinct purposes draw from distinct
// streams so inserting a consumer in one never shifts another.
enum class RngStream : uint64_t {
    init = 1,
    augment = 2,
    bits = 3,
    shuffle = 4,
    synthetic = 5,
    eval = 6,
};

inline Pcg32 make_rng(uint64_t seed, RngStream stream) {
    return Pcg32(seed, static_cast<uint64_t>(stream));
}

}  // namespace ssql
