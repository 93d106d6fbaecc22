#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vidmem/attention.hpp"
#include "vidmem/errors.hpp"
#include "vidmem/numerics.hpp"

namespace vidmem {

// All visual tokens of one short clip, temporal-then-spatial order.
// global_offset is the first token's position in the whole stream, so
// (clip_id, local index) can be mapped to a global timeline position.
struct ClipTokens {
    std::uint64_t clip_id = 0;
    std::size_t t_frames = 0;
    std::size_t tokens_per_frame = 0;
    std::size_t dim = 0;
    std::vector<Vec> embeddings;
    std::uint64_t global_offset = 0;

    std::size_t token_count() const { return t_frames * tokens_per_frame; }

    void validate() const {
        if (embeddings.size() != token_count()) {
            throw InvalidDimension("ClipTokens: embedding count " +
                                   std::to_string(embeddings.size()) + " != frames*tokens " +
                                   std::to_string(token_count()));
        }
        for (const Vec& e : embeddings) {
            if (e.size() != dim) throw InvalidDimension("ClipTokens: embedding dim mismatch");
        }
    }
};

// Compact representation of a clip: n_select retained tokens with their
// local indices kept strictly increasing (original temporal order).
struct SelectedTokenSet {
    std::uint64_t clip_id = 0;
    std::vector<std::size_t> indices;
    std::vector<Vec> embeddings;
    std::size_t n_select = 0;
};

enum class SelectorKind { Attention, Uniform, MeanPool, KMeans };

inline const char* to_string(SelectorKind k) {
    switch (k) {
        case SelectorKind::Attention: return "attention";
        case SelectorKind::Uniform: return "uniform";
        case SelectorKind::MeanPool: return "meanpool";
        case SelectorKind::KMeans: return "kmeans";
    }
    return "?";
}

namespace select {

namespace detail {

inline void check_n_select(std::size_t n_select, std::size_t count, const char* what) {
    if (n_select < 1 || n_select > count) {
        throw InvalidArgument(std::string(what) + ": n_select " + std::to_string(n_select) +
                              " out of range for " + std::to_string(count) + " tokens");
    }
}

inline double sq_dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace detail

// Keep the n_select highest-scoring tokens (ties toward the smaller index),
// then restore ascending index order.
inline SelectedTokenSet select_attention_topk(const ClipTokens& clip, const ScoreVector& scores,
                                              std::size_t n_select) {
    const std::size_t count = clip.token_count();
    detail::check_n_select(n_select, count, "select_attention_topk");
    if (scores.scores.size() != count) {
        throw InvalidDimension("select_attention_topk: score length " +
                               std::to_string(scores.scores.size()) + " != token count " +
                               std::to_string(count));
    }
    std::vector<std::size_t> order = num::argsort_desc(scores.scores);
    std::vector<std::size_t> picked(order.begin(), order.begin() + n_select);
    std::sort(picked.begin(), picked.end());

    SelectedTokenSet out;
    out.clip_id = clip.clip_id;
    out.n_select = n_select;
    out.indices = std::move(picked);
    out.embeddings.reserve(n_select);
    for (std::size_t i : out.indices) out.embeddings.push_back(clip.embeddings[i]);
    return out;
}

// One representative per equal-width block: index_i = floor((i + 0.5) * stride)
// with stride = count / n_select. Positional only; embedding values are ignored.
inline SelectedTokenSet select_uniform(const ClipTokens& clip, std::size_t n_select) {
    const std::size_t count = clip.token_count();
    detail::check_n_select(n_select, count, "select_uniform");
    const double stride = static_cast<double>(count) / static_cast<double>(n_select);

    SelectedTokenSet out;
    out.clip_id = clip.clip_id;
    out.n_select = n_select;
    out.indices.reserve(n_select);
    for (std::size_t i = 0; i < n_select; ++i) {
        const auto idx =
            static_cast<std::size_t>((static_cast<double>(i) + 0.5) * stride);
        out.indices.push_back(std::min(idx, count - 1));
    }
    out.embeddings.reserve(n_select);
    for (std::size_t i : out.indices) out.embeddings.push_back(clip.embeddings[i]);
    return out;
}

// Average contiguous temporal chunks (sizes differ by at most one). The
// recorded index is the chunk's first token; embeddings are chunk means,
// not members of the input set.
inline SelectedTokenSet mean_pool(const ClipTokens& clip, std::size_t n_select) {
    const std::size_t count = clip.token_count();
    detail::check_n_select(n_select, count, "mean_pool");

    SelectedTokenSet out;
    out.clip_id = clip.clip_id;
    out.n_select = n_select;
    for (std::size_t i = 0; i < n_select; ++i) {
        const std::size_t begin = i * count / n_select;
        const std::size_t end = (i + 1) * count / n_select;
        Vec mean(clip.dim, 0.0);
        for (std::size_t t = begin; t < end; ++t) {
            for (std::size_t d = 0; d < clip.dim; ++d) mean[d] += clip.embeddings[t][d];
        }
        for (double& x : mean) x /= static_cast<double>(end - begin);
        out.indices.push_back(begin);
        out.embeddings.push_back(std::move(mean));
    }
    return out;
}

// Lloyd's algorithm with k-means++ seeding; each centroid is then mapped to
// the nearest actual token (next-nearest on collision) so the output stays a
// subset of the clip, comparable with the other strategies.
inline SelectedTokenSet kmeans_select(const ClipTokens& clip, std::size_t n_select, Rng rng) {
    const std::size_t count = clip.token_count();
    detail::check_n_select(n_select, count, "kmeans_select");
    const std::size_t k = n_select;
    const auto& pts = clip.embeddings;

    // k-means++ seeding.
    std::vector<Vec> centroids;
    centroids.reserve(k);
    centroids.push_back(pts[rng.next_below(count)]);
    std::vector<double> d2(count);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec& ctr : centroids) best = std::min(best, detail::sq_dist(pts[i], ctr));
            d2[i] = best;
            total += best;
        }
        if (total == 0.0) {
            // All points coincide with existing centroids; spread deterministically.
            centroids.push_back(pts[(c * count) / k]);
            continue;
        }
        double target = rng.next_f64() * total;
        std::size_t pick = count - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            acc += d2[i];
            if (acc >= target) {
                pick = i;
                break;
            }
        }
        centroids.push_back(pts[pick]);
    }

    // Lloyd iterations.
    std::vector<std::size_t> label(count, 0);
    const int max_iters = 25;
    const double shift_eps = 1e-4;
    for (int iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < count; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t bl = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = detail::sq_dist(pts[i], centroids[c]);
                if (d < best) {
                    best = d;
                    bl = c;
                }
            }
            label[i] = bl;
        }
        double max_shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            Vec mean(clip.dim, 0.0);
            std::size_t members = 0;
            for (std::size_t i = 0; i < count; ++i) {
                if (label[i] != c) continue;
                ++members;
                for (std::size_t d = 0; d < clip.dim; ++d) mean[d] += pts[i][d];
            }
            if (members == 0) continue;  // empty cluster keeps its centroid
            for (double& x : mean) x /= static_cast<double>(members);
            max_shift = std::max(max_shift, std::sqrt(detail::sq_dist(mean, centroids[c])));
            centroids[c] = std::move(mean);
        }
        if (max_shift < shift_eps) break;
    }

    // Map each centroid to its nearest unused token.
    std::vector<bool> used(count, false);
    std::vector<std::size_t> picked;
    picked.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = count;  // sentinel
        for (std::size_t i = 0; i < count; ++i) {
            if (used[i]) continue;
            const double d = detail::sq_dist(pts[i], centroids[c]);
            if (d < best) {
                best = d;
                bi = i;
            }
        }
        used[bi] = true;
        picked.push_back(bi);
    }
    std::sort(picked.begin(), picked.end());

    SelectedTokenSet out;
    out.clip_id = clip.clip_id;
    out.n_select = n_select;
    out.indices = std::move(picked);
    out.embeddings.reserve(k);
    for (std::size_t i : out.indices) out.embeddings.push_back(clip.embeddings[i]);
    return out;
}

}  // namespace select
}  // namespace vidmem
