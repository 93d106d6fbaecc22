#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vidmem/attention.hpp"
#include "vidmem/backend.hpp"
#include "vidmem/errors.hpp"
#include "vidmem/memory.hpp"
#include "vidmem/numerics.hpp"
#include "vidmem/retrieval.hpp"
#include "vidmem/selection.hpp"

namespace vidmem {

// One incoming frame: tokens_per_frame embeddings.
using Frame = std::vector<Vec>;

struct PipelineConfig {
    std::size_t clip_size = 16;
    std::size_t max_mem = 16;
    std::size_t tokens_per_frame = 196;
    std::size_t n_select = 196;
    std::size_t window = 6272;
    // 0 means derive: memory_half = max_mem * n_select (an exact fit for the
    // FIFO at capacity), clip_half = window - memory_half. At the default
    // operating point this lands on the even 3136 + 3136 split.
    std::size_t memory_half = 0;
    std::size_t clip_half = 0;
    // Empty means uniform_layer_subset(n_layers, min(4, n_layers)) resolved
    // against the backend depth at stream start.
    std::vector<std::size_t> layer_subset;
    AggregationMode aggregation = AggregationMode::MeanOverHeads;
    SelectorKind selector = SelectorKind::Attention;
    double mmr_lambda = 0.5;
    std::size_t retrieval_budget = 10000;
    std::size_t retrieval_k = 0;  // 0 = fill the budget; >0 = fixed top-k
    SimilarityMode similarity = SimilarityMode::Pooled;
    std::uint64_t seed = 0;

    ContextBudget resolve_budget() const {
        std::size_t mem_half = memory_half;
        std::size_t cl_half = clip_half;
        if (mem_half == 0 && cl_half == 0) {
            mem_half = max_mem * n_select;
            if (mem_half > window) {
                throw InvalidArgument("PipelineConfig: memory capacity exceeds window");
            }
            cl_half = window - mem_half;
        } else if (cl_half == 0) {
            cl_half = window - mem_half;
        } else if (mem_half == 0) {
            mem_half = window - cl_half;
        }
        return ContextBudget::make(window, mem_half, cl_half);
    }

    void validate() const {
        if (clip_size == 0 || tokens_per_frame == 0 || n_select == 0 || window == 0) {
            throw InvalidArgument("PipelineConfig: zero-sized budget field");
        }
        if (n_select > clip_size * tokens_per_frame) {
            throw InvalidArgument("PipelineConfig: n_select " + std::to_string(n_select) +
                                  " exceeds clip token count " +
                                  std::to_string(clip_size * tokens_per_frame));
        }
        if (max_mem * n_select + clip_size * tokens_per_frame > window) {
            throw InvalidArgument(
                "PipelineConfig: max_mem*n_select + clip tokens = " +
                std::to_string(max_mem * n_select + clip_size * tokens_per_frame) +
                " exceeds window " + std::to_string(window));
        }
        if (mmr_lambda < 0.0 || mmr_lambda > 1.0) {
            throw InvalidArgument("PipelineConfig: mmr_lambda outside [0,1]");
        }
        const ContextBudget b = resolve_budget();
        if (clip_size * tokens_per_frame > b.clip_half) {
            throw InvalidArgument("PipelineConfig: clip tokens exceed clip half");
        }
        if (max_mem * n_select > b.memory_half) {
            throw InvalidArgument("PipelineConfig: memory capacity exceeds memory half");
        }
    }
};

struct ClipReport {
    std::uint64_t clip_id = 0;
    std::size_t n_memory = 0;
    std::size_t n_visual = 0;
    std::vector<std::size_t> selected;
};

struct RunMetrics {
    std::size_t clips_processed = 0;
    std::optional<double> selection_recall;
    std::optional<double> retrieval_recall_at_k;
    double context_utilization = 0.0;
    double wall_clock_per_clip_ms = 0.0;  // measured; never serialized
};

// Mutable streaming state, single writer. Queries read it as a snapshot.
struct StreamState {
    explicit StreamState(const PipelineConfig& config)
        : memory(config.max_mem), budget(config.resolve_budget()) {
        config.validate();
    }

    std::vector<Frame> frame_buffer;
    ShortTermMemory memory;
    std::vector<CaptionRecord> caption_store;
    std::map<std::uint64_t, Vec> visual_index;  // pooled clip embedding per clip
    RunMetrics metrics;
    std::vector<ClipReport> clip_reports;
    ContextBudget budget;
    std::uint64_t next_clip_id = 0;
    std::size_t context_tokens_total = 0;
};

struct AnswerResult {
    RetrievalResult retrieval;
    std::string answer;
};

namespace pipeline {

namespace detail {

inline std::vector<std::size_t> resolve_layer_subset(const PipelineConfig& config,
                                                     std::size_t n_layers) {
    if (!config.layer_subset.empty()) return config.layer_subset;
    return attn::uniform_layer_subset(n_layers, std::min<std::size_t>(4, n_layers));
}

inline Vec pooled_visual(const ClipTokens& clip) {
    Vec m(clip.dim, 0.0);
    for (const Vec& e : clip.embeddings) {
        for (std::size_t d = 0; d < clip.dim; ++d) m[d] += e[d];
    }
    for (double& x : m) x /= static_cast<double>(clip.embeddings.size());
    return m;
}

inline SelectedTokenSet run_selector(const PipelineConfig& config, const ClipTokens& clip,
                                     const BackendOutput& out, std::size_t n_layers) {
    switch (config.selector) {
        case SelectorKind::Attention: {
            const auto subset = resolve_layer_subset(config, n_layers);
            const ScoreVector scores =
                attn::compute_token_scores(out.trace, subset, config.aggregation);
            return select::select_attention_topk(clip, scores, config.n_select);
        }
        case SelectorKind::Uniform:
            return select::select_uniform(clip, config.n_select);
        case SelectorKind::MeanPool:
            return select::mean_pool(clip, config.n_select);
        case SelectorKind::KMeans:
            return select::kmeans_select(clip, config.n_select,
                                         Rng(derive_seed(config.seed, clip.clip_id)));
    }
    throw InvalidArgument("run_selector: unknown selector");
}

}  // namespace detail

// Buffer one frame; on every clip_size-th frame run the full per-clip pass:
// assemble context, invoke the backend, select, push to short-term memory,
// append the caption to long-term memory.
inline void process_frame(StreamState& state, const Frame& frame, const PipelineConfig& config,
                          backend::ClipBackend& backend) {
    if (frame.size() != config.tokens_per_frame) {
        throw InvalidDimension("process_frame: frame has " + std::to_string(frame.size()) +
                               " tokens, config expects " +
                               std::to_string(config.tokens_per_frame));
    }
    state.frame_buffer.push_back(frame);
    if (state.frame_buffer.size() < config.clip_size) return;

    ClipTokens clip;
    clip.clip_id = state.next_clip_id++;
    clip.t_frames = config.clip_size;
    clip.tokens_per_frame = config.tokens_per_frame;
    clip.dim = frame.empty() ? 0 : frame[0].size();
    clip.global_offset = clip.clip_id * config.clip_size * config.tokens_per_frame;
    clip.embeddings.reserve(config.clip_size * config.tokens_per_frame);
    for (const Frame& f : state.frame_buffer) {
        for (const Vec& tok : f) clip.embeddings.push_back(tok);
    }
    clip.validate();
    state.frame_buffer.clear();

    const ContextAssembly ctx = mem::assemble_context(state.memory, clip, state.budget);
    const BackendOutput out = backend.process_clip(ctx);

    SelectedTokenSet sel = detail::run_selector(config, clip, out, out.trace.n_layers);

    state.clip_reports.push_back(
        {clip.clip_id, ctx.layout.n_memory, ctx.layout.n_visual, sel.indices});
    state.context_tokens_total += ctx.layout.n_memory + ctx.layout.n_visual;
    state.visual_index[clip.clip_id] = detail::pooled_visual(clip);
    state.memory.push(std::move(sel));
    state.caption_store.push_back(out.caption);
    state.metrics.clips_processed += 1;
    state.metrics.context_utilization =
        static_cast<double>(state.context_tokens_total) /
        (static_cast<double>(state.metrics.clips_processed) *
         static_cast<double>(config.window));
}

// Budgeted MMR over the caption store (or fixed top-k when retrieval_k is
// set). The answer payload is the mock stand-in for generation: retrieved
// captions concatenated in ascending clip order, then the query label.
inline AnswerResult answer_query(const StreamState& state, const QueryEmbedding& query,
                                 const PipelineConfig& config,
                                 const std::string& query_label = "query") {
    if (state.caption_store.empty()) {
        throw EmptyStore("answer_query: no captions stored yet");
    }
    RetrievalResult res;
    if (config.retrieval_k > 0) {
        const std::size_t k = std::min(config.retrieval_k, state.caption_store.size());
        res = retrieval::mmr_retrieve(query, state.caption_store, k, config.mmr_lambda,
                                      config.similarity);
    } else {
        res = retrieval::budgeted_retrieve(query, state.caption_store, config.mmr_lambda,
                                           config.retrieval_budget, std::nullopt,
                                           config.similarity);
    }

    std::vector<std::uint64_t> ids;
    for (const auto& [id, score] : res.ranked) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    std::string answer;
    for (std::uint64_t id : ids) {
        for (const CaptionRecord& c : state.caption_store) {
            if (c.clip_id != id) continue;
            if (!answer.empty()) answer += " / ";
            answer += c.text.value_or("clip " + std::to_string(id));
            break;
        }
    }
    answer += " || ";
    answer += query_label;
    return AnswerResult{std::move(res), std::move(answer)};
}

struct QueryCase {
    QueryEmbedding embedding;
    std::optional<std::uint64_t> expected_clip;
    std::string label;
};

inline std::vector<QueryCase> event_queries(const SyntheticScenario& scenario) {
    std::vector<QueryCase> out;
    for (std::size_t i = 0; i < scenario.events.size(); ++i) {
        out.push_back({backend::event_query(scenario.events[i]), scenario.events[i].clip_id,
                       "event " + std::to_string(i)});
    }
    return out;
}

struct SimulationResult {
    RunMetrics metrics;
    std::string report;
    std::vector<CaptionRecord> caption_store;
    std::map<std::uint64_t, Vec> visual_index;
};

namespace detail {

inline std::string fmt_f64(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt_f64(*v) : "na";
}

inline void echo_config(std::string& r, const PipelineConfig& c, const ContextBudget& b) {
    r += "[config]\n";
    r += "clip_size=" + std::to_string(c.clip_size) + "\n";
    r += "max_mem=" + std::to_string(c.max_mem) + "\n";
    r += "tokens_per_frame=" + std::to_string(c.tokens_per_frame) + "\n";
    r += "n_select=" + std::to_string(c.n_select) + "\n";
    r += "window=" + std::to_string(c.window) + "\n";
    r += "memory_half=" + std::to_string(b.memory_half) + "\n";
    r += "clip_half=" + std::to_string(b.clip_half) + "\n";
    r += "layer_subset=";
    for (std::size_t i = 0; i < c.layer_subset.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(c.layer_subset[i]);
    }
    if (c.layer_subset.empty()) r += "auto";
    r += "\n";
    r += "aggregation=" + std::string(to_string(c.aggregation)) + "\n";
    r += "selector=" + std::string(to_string(c.selector)) + "\n";
    r += "mmr_lambda=" + fmt_f64(c.mmr_lambda) + "\n";
    r += "retrieval_budget=" + std::to_string(c.retrieval_budget) + "\n";
    r += "retrieval_k=" + std::to_string(c.retrieval_k) + "\n";
    r += "similarity=" + std::string(to_string(c.similarity)) + "\n";
    r += "seed=" + std::to_string(c.seed) + "\n";
}

inline void echo_model(std::string& r, const MockModelConfig& m) {
    r += "[model]\n";
    r += "dim=" + std::to_string(m.dim) + "\n";
    r += "n_layers=" + std::to_string(m.n_layers) + "\n";
    r += "n_heads=" + std::to_string(m.n_heads) + "\n";
    r += "head_dim=" + std::to_string(m.head_dim) + "\n";
    r += "caption_len=" + std::to_string(m.caption_len) + "\n";
    r += "seed=" + std::to_string(m.seed) + "\n";
}

}  // namespace detail

// Full harness pass over a synthetic scenario: stream every frame, then
// answer the given queries (planted-event queries when none are supplied).
// The report is deterministic for fixed seeds; wall-clock numbers stay in
// RunMetrics only. `trace_capture`, when given, collects every backend
// output for trace-file persistence.
inline SimulationResult run_simulation(const SyntheticScenario& scenario,
                                       const PipelineConfig& config,
                                       const MockModelConfig& model,
                                       std::vector<QueryCase> queries = {},
                                       std::vector<BackendOutput>* trace_capture = nullptr) {
    scenario.validate();
    config.validate();
    model.validate();
    if (scenario.tokens_per_frame != config.tokens_per_frame) {
        throw InvalidArgument("run_simulation: scenario tokens_per_frame " +
                              std::to_string(scenario.tokens_per_frame) +
                              " != config " + std::to_string(config.tokens_per_frame));
    }
    if (scenario.t_frames != config.clip_size) {
        throw InvalidArgument("run_simulation: scenario t_frames must equal clip_size");
    }
    if (scenario.dim != model.dim) {
        throw InvalidArgument("run_simulation: scenario dim != model dim");
    }

    // Thin decorator that tees backend outputs into the capture vector.
    struct Tee final : backend::ClipBackend {
        backend::ClipBackend& inner;
        std::vector<BackendOutput>* sink;
        Tee(backend::ClipBackend& b, std::vector<BackendOutput>* s) : inner(b), sink(s) {}
        BackendOutput process_clip(const ContextAssembly& ctx) override {
            BackendOutput out = inner.process_clip(ctx);
            if (sink) sink->push_back(out);
            return out;
        }
    };

    backend::MockBackend mock(model);
    Tee be(mock, trace_capture);
    StreamState state(config);

    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t c = 0; c < scenario.n_clips; ++c) {
        const ClipTokens clip = backend::generate_clip(scenario, c);
        Frame frame(scenario.tokens_per_frame);
        for (std::size_t f = 0; f < scenario.t_frames; ++f) {
            for (std::size_t t = 0; t < scenario.tokens_per_frame; ++t) {
                frame[t] = clip.embeddings[f * scenario.tokens_per_frame + t];
            }
            process_frame(state, frame, config, be);
        }
    }
    const auto t1 = std::chrono::steady_clock::now();
    state.metrics.wall_clock_per_clip_ms =
        state.metrics.clips_processed == 0
            ? 0.0
            : std::chrono::duration<double, std::milli>(t1 - t0).count() /
                  static_cast<double>(state.metrics.clips_processed);

    // Selection recall: exact planted indices recovered by the per-clip
    // selection, no partial credit.
    std::size_t planted = 0, recovered = 0;
    for (const ScenarioEvent& e : scenario.events) {
        if (e.clip_id >= state.clip_reports.size()) continue;
        const auto& sel = state.clip_reports[e.clip_id].selected;
        const std::set<std::size_t> chosen(sel.begin(), sel.end());
        for (std::size_t t : e.token_indices) {
            ++planted;
            if (chosen.count(t)) ++recovered;
        }
    }
    if (planted > 0) {
        state.metrics.selection_recall =
            static_cast<double>(recovered) / static_cast<double>(planted);
    }

    if (queries.empty()) queries = event_queries(scenario);
    std::size_t q_scored = 0, q_hits = 0;
    std::string query_lines;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const QueryCase& q = queries[qi];
        if (state.caption_store.empty()) break;
        const AnswerResult ans = answer_query(state, q.embedding, config, q.label);
        std::optional<std::size_t> rank;
        if (q.expected_clip) {
            ++q_scored;
            for (std::size_t r = 0; r < ans.retrieval.ranked.size(); ++r) {
                if (ans.retrieval.ranked[r].first == *q.expected_clip) {
                    rank = r + 1;
                    break;
                }
            }
            if (rank && *rank == 1) ++q_hits;
        }
        query_lines += "query_" + std::to_string(qi) + "=label:" + q.label;
        if (q.expected_clip) {
            query_lines += ",expected:" + std::to_string(*q.expected_clip);
        }
        if (!ans.retrieval.ranked.empty()) {
            query_lines += ",top:" + std::to_string(ans.retrieval.ranked[0].first);
            query_lines += ",top_score:" + detail::fmt_f64(ans.retrieval.ranked[0].second);
        }
        query_lines += ",rank:" + (rank ? std::to_string(*rank) : std::string("none"));
        query_lines += ",tokens_used:" + std::to_string(ans.retrieval.tokens_used);
        query_lines += "\n";
    }
    if (q_scored > 0) {
        state.metrics.retrieval_recall_at_k =
            static_cast<double>(q_hits) / static_cast<double>(q_scored);
    }

    std::string r;
    r += "[report]\n";
    r += "format_version=1\n";
    r += "mode=streaming\n\n";
    detail::echo_config(r, config, state.budget);
    r += "\n";
    detail::echo_model(r, model);
    r += "\n[scenario]\n";
    r += "n_clips=" + std::to_string(scenario.n_clips) + "\n";
    r += "t_frames=" + std::to_string(scenario.t_frames) + "\n";
    r += "tokens_per_frame=" + std::to_string(scenario.tokens_per_frame) + "\n";
    r += "dim=" + std::to_string(scenario.dim) + "\n";
    r += "noise_scale=" + detail::fmt_f64(scenario.noise_scale) + "\n";
    r += "seed=" + std::to_string(scenario.seed) + "\n";
    r += "events=" + std::to_string(scenario.events.size()) + "\n";
    r += "\n[metrics]\n";
    r += "clips_processed=" + std::to_string(state.metrics.clips_processed) + "\n";
    r += "selection_recall=" + detail::fmt_opt(state.metrics.selection_recall) + "\n";
    r += "retrieval_recall_at_k=" + detail::fmt_opt(state.metrics.retrieval_recall_at_k) + "\n";
    r += "context_utilization=" + detail::fmt_f64(state.metrics.context_utilization) + "\n";
    r += "\n[clips]\n";
    for (const ClipReport& c : state.clip_reports) {
        r += "clip_" + std::to_string(c.clip_id) + "=mem:" + std::to_string(c.n_memory) +
             ",vis:" + std::to_string(c.n_visual) +
             ",sel:" + std::to_string(c.selected.size()) + "\n";
    }
    if (!query_lines.empty()) {
        r += "\n[queries]\n";
        r += query_lines;
    }
    return SimulationResult{state.metrics, std::move(r), std::move(state.caption_store),
                            std::move(state.visual_index)};
}

// Offline baseline: fill the whole window with globally uniform frames in
// one retrospective pass. No recurrency, no per-clip captions; selection
// recall counts planted tokens whose frame survived. Only meaningful after
// the stream has ended, hence a separate entry point from the online path.
inline SimulationResult run_global_uniform(const SyntheticScenario& scenario,
                                           const PipelineConfig& config,
                                           const MockModelConfig& model) {
    scenario.validate();
    model.validate();
    if (scenario.dim != model.dim) {
        throw InvalidArgument("run_global_uniform: scenario dim != model dim");
    }
    const std::size_t total_frames = scenario.n_clips * scenario.t_frames;
    const std::size_t max_frames = config.window / config.tokens_per_frame;
    const std::size_t pick = std::min(total_frames, max_frames);
    if (pick == 0) throw InvalidArgument("run_global_uniform: window below one frame");

    // Globally uniform frame picks (same block-center rule as select_uniform).
    std::vector<std::size_t> frames;
    const double stride = static_cast<double>(total_frames) / static_cast<double>(pick);
    for (std::size_t i = 0; i < pick; ++i) {
        frames.push_back(std::min(
            static_cast<std::size_t>((static_cast<double>(i) + 0.5) * stride),
            total_frames - 1));
    }

    ClipTokens mega;
    mega.clip_id = 0;
    mega.t_frames = pick;
    mega.tokens_per_frame = scenario.tokens_per_frame;
    mega.dim = scenario.dim;
    std::uint64_t last_clip = ~0ull;
    ClipTokens cached;
    for (std::size_t f : frames) {
        const std::uint64_t clip_id = f / scenario.t_frames;
        const std::size_t local_frame = f % scenario.t_frames;
        if (clip_id != last_clip) {
            cached = backend::generate_clip(scenario, clip_id);
            last_clip = clip_id;
        }
        for (std::size_t t = 0; t < scenario.tokens_per_frame; ++t) {
            mega.embeddings.push_back(
                cached.embeddings[local_frame * scenario.tokens_per_frame + t]);
        }
    }

    ShortTermMemory no_mem(0);
    const ContextBudget budget = ContextBudget::make(config.window, 0, config.window);
    const ContextAssembly ctx = mem::assemble_context(no_mem, mega, budget);
    backend::MockBackend be(model);
    const auto t0 = std::chrono::steady_clock::now();
    const BackendOutput out = be.process_clip(ctx);
    const auto t1 = std::chrono::steady_clock::now();

    const std::set<std::size_t> kept(frames.begin(), frames.end());
    std::size_t planted = 0, recovered = 0;
    for (const ScenarioEvent& e : scenario.events) {
        for (std::size_t t : e.token_indices) {
            ++planted;
            const std::size_t global_frame =
                e.clip_id * scenario.t_frames + t / scenario.tokens_per_frame;
            if (kept.count(global_frame)) ++recovered;
        }
    }

    RunMetrics metrics;
    metrics.clips_processed = 1;
    if (planted > 0) {
        metrics.selection_recall = static_cast<double>(recovered) / static_cast<double>(planted);
    }
    metrics.context_utilization = static_cast<double>(mega.token_count()) /
                                  static_cast<double>(config.window);
    metrics.wall_clock_per_clip_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    std::string r;
    r += "[report]\n";
    r += "format_version=1\n";
    r += "mode=global_uniform\n";
    r += "offline_only=1\n\n";
    detail::echo_config(r, config, budget);
    r += "\n";
    detail::echo_model(r, model);
    r += "\n[metrics]\n";
    r += "frames_kept=" + std::to_string(pick) + "\n";
    r += "selection_recall=" + detail::fmt_opt(metrics.selection_recall) + "\n";
    r += "context_utilization=" + detail::fmt_f64(metrics.context_utilization) + "\n";
    r += "caption_text=" + out.caption.text.value_or("") + "\n";
    SimulationResult result;
    result.metrics = metrics;
    result.report = std::move(r);
    result.caption_store.push_back(out.caption);
    return result;
}

}  // namespace pipeline
}  // namespace vidmem
