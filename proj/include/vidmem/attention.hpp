#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vidmem/errors.hpp"
#include "vidmem/numerics.hpp"

namespace vidmem {

// Position bookkeeping for one backend pass. The context is laid out as
// [memory | current-clip visual | instruction | caption], so the current
// clip's visual columns start right after the injected memory tokens.
struct TokenLayout {
    std::size_t n_memory = 0;
    std::size_t n_visual = 0;
    std::size_t n_instruction = 0;
    std::size_t n_caption = 0;
    std::size_t visual_col_offset = 0;

    static TokenLayout make(std::size_t memory, std::size_t visual,
                            std::size_t instruction, std::size_t caption) {
        TokenLayout l;
        l.n_memory = memory;
        l.n_visual = visual;
        l.n_instruction = instruction;
        l.n_caption = caption;
        l.visual_col_offset = memory;
        return l;
    }

    std::size_t total() const { return n_memory + n_visual + n_instruction + n_caption; }

    // Row index of the first caption token in the full attention matrix.
    std::size_t caption_row_offset() const { return n_memory + n_visual + n_instruction; }

    bool operator==(const TokenLayout&) const = default;
};

// Per-clip cross-attention record: for each stored (layer, head) pair, the
// caption-rows x current-clip-visual-columns slice of the softmax matrix.
// Only this slice ever feeds scoring, so the full matrix is never kept.
//
// `layer_ids` lists which of the model's `n_layers` layers were captured
// (a replayed dump may carry only a subset). Blocks are stored layer-major,
// then head-major: blocks[li * n_heads + h] belongs to layer_ids[li], head h.
struct AttentionTrace {
    std::uint64_t clip_id = 0;
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::vector<std::size_t> layer_ids;
    TokenLayout layout;
    std::vector<Mat> blocks;

    const Mat* find_block(std::size_t layer, std::size_t head) const {
        if (head >= n_heads) return nullptr;
        for (std::size_t li = 0; li < layer_ids.size(); ++li) {
            if (layer_ids[li] == layer) return &blocks[li * n_heads + head];
        }
        return nullptr;
    }

    // Structural invariants: block count/shape and probability-mass bounds
    // (rows are slices of softmax rows, so they must sum to at most 1).
    void validate() const {
        if (blocks.size() != layer_ids.size() * n_heads) {
            throw InvalidDimension("AttentionTrace: expected " +
                                   std::to_string(layer_ids.size() * n_heads) +
                                   " blocks, have " + std::to_string(blocks.size()));
        }
        for (std::size_t id : layer_ids) {
            if (id >= n_layers) {
                throw InvalidArgument("AttentionTrace: layer id " + std::to_string(id) +
                                      " out of range for depth " + std::to_string(n_layers));
            }
        }
        for (const Mat& b : blocks) {
            if (b.rows != layout.n_caption || b.cols != layout.n_visual) {
                throw InvalidDimension("AttentionTrace: block shape mismatch");
            }
            for (std::size_t r = 0; r < b.rows; ++r) {
                double sum = 0.0;
                for (std::size_t c = 0; c < b.cols; ++c) {
                    const double x = b.at(r, c);
                    if (!(x >= 0.0 && x <= 1.0)) {
                        throw InvalidArgument("AttentionTrace: entry outside [0,1]");
                    }
                    sum += x;
                }
                if (sum > 1.0 + 1e-9) {
                    throw InvalidArgument("AttentionTrace: row mass exceeds 1");
                }
            }
        }
    }
};

// Per-visual-token importance for one clip, aligned with the clip's local
// token indices. Values are convex combinations / maxima of attention
// probabilities, hence always within [0, 1].
struct ScoreVector {
    std::uint64_t clip_id = 0;
    Vec scores;
};

enum class AggregationMode { MeanOverHeads, MaxOverHeads };

inline const char* to_string(AggregationMode m) {
    return m == AggregationMode::MeanOverHeads ? "avg" : "max";
}

namespace attn {

// Slice of the full post-softmax matrix where generated caption tokens
// attend to the current clip's visual tokens: rows [caption_row_offset,
// total), columns [visual_col_offset, visual_col_offset + n_visual).
inline Mat extract_cross_block(const Mat& full_attention, const TokenLayout& layout) {
    const std::size_t n = layout.total();
    if (full_attention.rows != n || full_attention.cols != n) {
        throw InvalidDimension("extract_cross_block: expected " + std::to_string(n) +
                               "x" + std::to_string(n) + " matrix, got " +
                               std::to_string(full_attention.rows) + "x" +
                               std::to_string(full_attention.cols));
    }
    const std::size_t row0 = layout.caption_row_offset();
    const std::size_t col0 = layout.visual_col_offset;
    Mat out(layout.n_caption, layout.n_visual);
    for (std::size_t r = 0; r < layout.n_caption; ++r) {
        for (std::size_t c = 0; c < layout.n_visual; ++c) {
            out.at(r, c) = full_attention.at(row0 + r, col0 + c);
        }
    }
    return out;
}

// Global importance score per visual token.
//
// MeanOverHeads: mean over the layer subset of the mean over heads of the
// caption-row average of each column.
// MaxOverHeads: the head-mean is replaced by a head-max of the
// caption-averaged per-head scores; the layer aggregation stays a mean.
inline ScoreVector compute_token_scores(const AttentionTrace& trace,
                                        const std::vector<std::size_t>& layer_subset,
                                        AggregationMode mode) {
    if (layer_subset.empty()) {
        throw InvalidArgument("compute_token_scores: empty layer subset");
    }
    for (std::size_t l : layer_subset) {
        if (l >= trace.n_layers) {
            throw InvalidArgument("compute_token_scores: layer " + std::to_string(l) +
                                  " out of range for depth " + std::to_string(trace.n_layers));
        }
    }
    const std::size_t nv = trace.layout.n_visual;
    const std::size_t nc = trace.layout.n_caption;
    if (nv == 0 || nc == 0) {
        throw InvalidDimension("compute_token_scores: layout has no visual or caption tokens");
    }

    Vec acc(nv, 0.0);
    Vec head_score(nv, 0.0);
    for (std::size_t l : layer_subset) {
        Vec layer_score(nv, mode == AggregationMode::MaxOverHeads
                                ? -std::numeric_limits<double>::infinity()
                                : 0.0);
        for (std::size_t h = 0; h < trace.n_heads; ++h) {
            const Mat* block = trace.find_block(l, h);
            if (block == nullptr) {
                throw MissingTrace("compute_token_scores: no block for layer " +
                                   std::to_string(l) + " head " + std::to_string(h) +
                                   " in clip " + std::to_string(trace.clip_id));
            }
            // Caption-row average per visual column.
            std::fill(head_score.begin(), head_score.end(), 0.0);
            for (std::size_t i = 0; i < nc; ++i) {
                for (std::size_t j = 0; j < nv; ++j) {
                    head_score[j] += block->at(i, j);
                }
            }
            for (std::size_t j = 0; j < nv; ++j) {
                head_score[j] /= static_cast<double>(nc);
            }
            if (mode == AggregationMode::MaxOverHeads) {
                for (std::size_t j = 0; j < nv; ++j) {
                    layer_score[j] = std::max(layer_score[j], head_score[j]);
                }
            } else {
                for (std::size_t j = 0; j < nv; ++j) layer_score[j] += head_score[j];
            }
        }
        if (mode == AggregationMode::MeanOverHeads) {
            for (std::size_t j = 0; j < nv; ++j) {
                layer_score[j] /= static_cast<double>(trace.n_heads);
            }
        }
        for (std::size_t j = 0; j < nv; ++j) acc[j] += layer_score[j];
    }
    for (std::size_t j = 0; j < nv; ++j) acc[j] /= static_cast<double>(layer_subset.size());
    return ScoreVector{trace.clip_id, std::move(acc)};
}

// Evenly spaced layer picks across the depth: index_i is (i + 0.5) * L / k
// rounded to the nearest integer with halves rounding down, clamped, and
// deduplicated by shifting collisions upward.
inline std::vector<std::size_t> uniform_layer_subset(std::size_t n_layers, std::size_t n_pick) {
    if (n_pick < 1 || n_pick > n_layers) {
        throw InvalidArgument("uniform_layer_subset: need 1 <= n_pick <= n_layers, got " +
                              std::to_string(n_pick) + " of " + std::to_string(n_layers));
    }
    std::vector<std::size_t> out;
    out.reserve(n_pick);
    for (std::size_t i = 0; i < n_pick; ++i) {
        const double x = (static_cast<double>(i) + 0.5) * static_cast<double>(n_layers) /
                         static_cast<double>(n_pick);
        double r = std::ceil(x - 0.5);  // round-half-down
        r = std::clamp(r, 0.0, static_cast<double>(n_layers - 1));
        std::size_t idx = static_cast<std::size_t>(r);
        if (!out.empty() && idx <= out.back()) idx = out.back() + 1;
        out.push_back(idx);
    }
    return out;
}

}  // namespace attn
}  // namespace vidmem
