#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vidmem/errors.hpp"

namespace vidmem {

// Embedding row. 64-bit floats everywhere inside the engine; file payloads
// may store 32-bit and are widened on load.
using Vec = std::vector<double>;

inline void ensure_finite(const Vec& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw InvalidArgument(std::string(what) + ": non-finite entry");
        }
    }
}

inline void ensure_nonempty(const Vec& v, const char* what) {
    if (v.empty()) {
        throw InvalidDimension(std::string(what) + ": empty vector");
    }
}

// Dense row-major matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;

    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    Mat(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols) {
            throw InvalidDimension("Mat: data length " + std::to_string(data.size()) +
                                   " != rows*cols " + std::to_string(rows * cols));
        }
        for (double x : data) {
            if (!std::isfinite(x)) throw InvalidArgument("Mat: non-finite entry");
        }
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Mat& other) const = default;
};

namespace num {

// Numerically stable softmax: subtracts the row max before exponentiating,
// so arbitrarily large logits cannot overflow.
inline Vec softmax_row(const Vec& logits) {
    ensure_nonempty(logits, "softmax_row");
    ensure_finite(logits, "softmax_row");
    const double m = *std::max_element(logits.begin(), logits.end());
    Vec out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

inline double dot(const Vec& u, const Vec& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

inline double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

inline double cosine(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) {
        throw InvalidDimension("cosine: length mismatch " + std::to_string(u.size()) +
                               " vs " + std::to_string(v.size()));
    }
    ensure_nonempty(u, "cosine");
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu == 0.0 || nv == 0.0) {
        throw DegenerateVector("cosine: zero-norm input");
    }
    // Clamp: rounding can push |cos| a hair past 1 for near-parallel vectors.
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

// Indices that sort `scores` in descending order. Ties break toward the
// smaller index, which keeps downstream selection deterministic.
inline std::vector<std::size_t> argsort_desc(const Vec& scores) {
    ensure_nonempty(scores, "argsort_desc");
    ensure_finite(scores, "argsort_desc");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    return idx;
}

}  // namespace num

// SplitMix64. Portable, seedable, fast; every stream in the engine is
// derived from one of these so runs are reproducible bit-for-bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 random mantissa bits.
    double next_f64() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; generates draws in pairs.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_f64();
        double u2 = next_f64();
        while (u1 <= 0.0) u1 = next_f64();  // log(0) guard
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(next_f64() * static_cast<double>(n)) % n;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Decorrelated child seed for stream `index` of a base seed. Used to give
// every clip / worker its own independent deterministic stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    Rng r(base ^ (index * 0xA24BAED4963EE407ull + 0x9FB21C651E98DF25ull));
    return r.next_u64();
}

}  // namespace vidmem
