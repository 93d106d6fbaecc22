#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vidmem/attention.hpp"
#include "vidmem/errors.hpp"
#include "vidmem/selection.hpp"

namespace vidmem {

// Bounded FIFO of past selected token sets, oldest first. Single writer:
// the streaming loop. With max_mem == 0 the memory stays empty, which turns
// recurrency off entirely (the ablation configuration).
class ShortTermMemory {
public:
    explicit ShortTermMemory(std::size_t max_mem) : max_mem_(max_mem) {}

    std::size_t max_mem() const { return max_mem_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::deque<SelectedTokenSet>& entries() const { return entries_; }

    std::size_t total_tokens() const {
        std::size_t n = 0;
        for (const auto& s : entries_) n += s.indices.size();
        return n;
    }

    // Append, evicting the oldest entry first when full. Clip ids must be
    // strictly increasing across the life of the stream, evictions included.
    void push(SelectedTokenSet s) {
        if (last_clip_id_ && s.clip_id <= *last_clip_id_) {
            throw OutOfOrderClip("mem_push: clip " + std::to_string(s.clip_id) +
                                 " after clip " + std::to_string(*last_clip_id_));
        }
        last_clip_id_ = s.clip_id;
        if (max_mem_ == 0) return;
        if (entries_.size() == max_mem_) entries_.pop_front();
        entries_.push_back(std::move(s));
    }

private:
    std::size_t max_mem_;
    std::deque<SelectedTokenSet> entries_;
    std::optional<std::uint64_t> last_clip_id_;
};

// Hard visual-context budget: `window` tokens total, split between injected
// memory and the current clip.
struct ContextBudget {
    std::size_t window = 0;
    std::size_t memory_half = 0;
    std::size_t clip_half = 0;

    static ContextBudget make(std::size_t window, std::size_t memory_half,
                              std::size_t clip_half) {
        if (memory_half + clip_half != window) {
            throw InvalidArgument("ContextBudget: halves " + std::to_string(memory_half) +
                                  "+" + std::to_string(clip_half) + " != window " +
                                  std::to_string(window));
        }
        return ContextBudget{window, memory_half, clip_half};
    }

    static ContextBudget even_split(std::size_t window) {
        return make(window, window / 2, window - window / 2);
    }
};

// The flattened input for one backend pass: memory tokens oldest-first
// (order within each set preserved), then the current clip. Also carries
// (clip_id, local index) provenance per memory token so temporal order is
// checkable end to end.
struct ContextAssembly {
    std::vector<Vec> memory_tokens;
    std::vector<std::pair<std::uint64_t, std::size_t>> memory_token_ids;
    const ClipTokens* clip = nullptr;
    TokenLayout layout;
};

namespace mem {

// Flatten memory + current clip under the budget. Overflow is a hard error:
// budgets are chosen to divide exactly, so exceeding one is a config bug
// that must not be papered over by truncation.
inline ContextAssembly assemble_context(const ShortTermMemory& memory, const ClipTokens& clip,
                                        const ContextBudget& budget) {
    const std::size_t clip_tokens = clip.token_count();
    if (clip_tokens > budget.clip_half) {
        throw ContextOverflow("assemble_context: clip has " + std::to_string(clip_tokens) +
                              " tokens, clip half is " + std::to_string(budget.clip_half));
    }
    const std::size_t mem_tokens = memory.total_tokens();
    if (mem_tokens > budget.memory_half) {
        throw ContextOverflow("assemble_context: memory holds " + std::to_string(mem_tokens) +
                              " tokens, memory half is " + std::to_string(budget.memory_half));
    }

    ContextAssembly ctx;
    ctx.memory_tokens.reserve(mem_tokens);
    ctx.memory_token_ids.reserve(mem_tokens);
    for (const SelectedTokenSet& s : memory.entries()) {
        for (std::size_t i = 0; i < s.indices.size(); ++i) {
            ctx.memory_tokens.push_back(s.embeddings[i]);
            ctx.memory_token_ids.emplace_back(s.clip_id, s.indices[i]);
        }
    }
    ctx.clip = &clip;
    ctx.layout = TokenLayout::make(ctx.memory_tokens.size(), clip_tokens, 0, 0);
    return ctx;
}

}  // namespace mem
}  // namespace vidmem
