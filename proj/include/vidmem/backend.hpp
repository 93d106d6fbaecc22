#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vidmem/attention.hpp"
#include "vidmem/config.hpp"
#include "vidmem/errors.hpp"
#include "vidmem/memory.hpp"
#include "vidmem/numerics.hpp"
#include "vidmem/retrieval.hpp"
#include "vidmem/selection.hpp"

namespace vidmem {

// What the model hands back per clip: the caption (token embeddings plus a
// small text payload) and the cross-attention trace used for selection.
struct BackendOutput {
    CaptionRecord caption;
    AttentionTrace trace;
};

struct MockModelConfig {
    std::size_t dim = 16;
    std::size_t n_layers = 4;
    std::size_t n_heads = 2;
    std::size_t head_dim = 8;
    std::size_t caption_len = 4;
    std::uint64_t seed = 0;

    void validate() const {
        if (dim == 0 || n_layers == 0 || n_heads == 0 || head_dim == 0 || caption_len == 0) {
            throw InvalidArgument("MockModelConfig: all counts must be >= 1");
        }
        if (dim != n_heads * head_dim) {
            throw InvalidArgument("MockModelConfig: dim " + std::to_string(dim) +
                                  " != n_heads*head_dim " +
                                  std::to_string(n_heads * head_dim));
        }
    }
};

// One planted event: tokens at `token_indices` of clip `clip_id` carry
// `concept_vec` (unit norm) instead of background noise.
struct ScenarioEvent {
    std::uint64_t clip_id = 0;
    std::vector<std::size_t> token_indices;
    Vec concept_vec;
};

struct SyntheticScenario {
    std::size_t n_clips = 0;
    std::size_t t_frames = 16;
    std::size_t tokens_per_frame = 196;
    std::size_t dim = 16;
    std::vector<ScenarioEvent> events;
    double noise_scale = 0.1;
    std::uint64_t seed = 0;

    std::size_t clip_token_count() const { return t_frames * tokens_per_frame; }

    void validate() const {
        if (n_clips == 0 || t_frames == 0 || tokens_per_frame == 0 || dim == 0) {
            throw InvalidArgument("SyntheticScenario: zero-sized clip spec");
        }
        if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) {
            throw InvalidArgument("SyntheticScenario: noise_scale must be positive");
        }
        for (const auto& e : events) {
            if (e.clip_id >= n_clips) {
                throw InvalidArgument("SyntheticScenario: event clip " +
                                      std::to_string(e.clip_id) + " out of range");
            }
            if (e.concept_vec.size() != dim) {
                throw InvalidArgument("SyntheticScenario: concept dim mismatch");
            }
            if (std::abs(num::norm(e.concept_vec) - 1.0) > 1e-9) {
                throw InvalidArgument("SyntheticScenario: concept vector not unit norm");
            }
            if (e.token_indices.empty()) {
                throw InvalidArgument("SyntheticScenario: event with no tokens");
            }
            for (std::size_t t : e.token_indices) {
                if (t >= clip_token_count()) {
                    throw InvalidArgument("SyntheticScenario: event token index " +
                                          std::to_string(t) + " out of range");
                }
            }
        }
    }
};

namespace backend {

namespace detail {

constexpr std::size_t kInstructionTokens = 8;
// Gain on the seeded projections; keeps mock logits in a range where token
// norm differences show up clearly after the softmax.
constexpr double kProjGain = 4.0;

// Seed domains so independent streams never collide.
constexpr std::uint64_t kDomInstruction = 0x494E5354; // "INST"
constexpr std::uint64_t kDomCaption = 0x43415054;     // "CAPT"
constexpr std::uint64_t kDomProjQ = 0x50524F4A;       // "PROJ"
constexpr std::uint64_t kDomProjK = 0x4B50524F;       // "KPRO"

inline Vec unit_gaussian(Rng& rng, std::size_t dim) {
    Vec v(dim);
    double n2 = 0.0;
    for (double& x : v) {
        x = rng.next_gaussian();
        n2 += x * x;
    }
    const double n = std::sqrt(n2);
    if (n > 0.0) {
        for (double& x : v) x /= n;
    } else {
        v[0] = 1.0;
    }
    return v;
}

// dim x head_dim projection, entries N(0, kProjGain^2 / 1) scaled below.
inline Mat projection(std::uint64_t seed, std::size_t dim, std::size_t head_dim) {
    Rng rng(seed);
    Mat w(dim, head_dim);
    const double scale = std::sqrt(kProjGain);
    for (double& x : w.data) x = rng.next_gaussian() * scale;
    return w;
}

inline Vec project(const Vec& x, const Mat& w) {
    Vec out(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double xv = x[r];
        if (xv == 0.0) continue;
        const double* wr = &w.data[r * w.cols];
        for (std::size_t c = 0; c < w.cols; ++c) out[c] += xv * wr[c];
    }
    return out;
}

inline double to_f32_grid(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace detail

// The fixed instruction block, independent of the model seed (a real system
// uses the same captioning prompt for every clip).
inline std::vector<Vec> instruction_tokens(std::size_t dim) {
    std::vector<Vec> out;
    out.reserve(detail::kInstructionTokens);
    for (std::size_t i = 0; i < detail::kInstructionTokens; ++i) {
        Rng rng(derive_seed(detail::kDomInstruction, i * 131 + dim));
        out.push_back(detail::unit_gaussian(rng, dim));
    }
    return out;
}

inline std::vector<Vec> caption_seeds(const MockModelConfig& config) {
    std::vector<Vec> out;
    out.reserve(config.caption_len);
    for (std::size_t i = 0; i < config.caption_len; ++i) {
        Rng rng(derive_seed(derive_seed(config.seed, detail::kDomCaption), i));
        out.push_back(detail::unit_gaussian(rng, config.dim));
    }
    return out;
}

// Seeded W_Q / W_K for one (layer, head). Exposed so tests can rebuild the
// exact projections the mock uses.
inline Mat query_projection(const MockModelConfig& c, std::size_t layer, std::size_t head) {
    return detail::projection(
        derive_seed(derive_seed(derive_seed(c.seed, detail::kDomProjQ), layer), head),
        c.dim, c.head_dim);
}

inline Mat key_projection(const MockModelConfig& c, std::size_t layer, std::size_t head) {
    return detail::projection(
        derive_seed(derive_seed(derive_seed(c.seed, detail::kDomProjK), layer), head),
        c.dim, c.head_dim);
}

// Deterministic mock of one captioning pass.
//
// The context is [memory | clip | instruction | caption seeds]. Per layer
// and head, tokens are projected with seeded W_Q / W_K and each caption
// position gets a causal softmax row over everything at or before it. The
// stored trace keeps only the current-clip visual columns of those rows.
// Caption token embeddings are the attention-weighted average (across
// layers/heads) of the current clip's visual embeddings, so a caption
// always describes its own clip. All emitted floats are snapped to the f32
// grid, matching what a real accelerator dump would contain and making
// trace round-trips bit-exact.
inline BackendOutput mock_process_clip(const MockModelConfig& config,
                                       const ContextAssembly& ctx) {
    config.validate();
    if (ctx.clip == nullptr) throw InvalidArgument("mock_process_clip: null clip");
    if (ctx.clip->dim != config.dim) {
        throw InvalidDimension("mock_process_clip: clip dim " + std::to_string(ctx.clip->dim) +
                               " != model dim " + std::to_string(config.dim));
    }
    for (const Vec& m : ctx.memory_tokens) {
        if (m.size() != config.dim) {
            throw InvalidDimension("mock_process_clip: memory token dim mismatch");
        }
    }

    const std::size_t n_mem = ctx.memory_tokens.size();
    const std::size_t n_vis = ctx.clip->token_count();
    const std::size_t n_cap = config.caption_len;
    const std::vector<Vec> instruction = instruction_tokens(config.dim);
    const std::vector<Vec> seeds = caption_seeds(config);
    const TokenLayout layout =
        TokenLayout::make(n_mem, n_vis, instruction.size(), n_cap);
    const std::size_t n_total = layout.total();

    // Flat view of the context in layout order.
    std::vector<const Vec*> tokens;
    tokens.reserve(n_total);
    for (const Vec& v : ctx.memory_tokens) tokens.push_back(&v);
    for (const Vec& v : ctx.clip->embeddings) tokens.push_back(&v);
    for (const Vec& v : instruction) tokens.push_back(&v);
    for (const Vec& v : seeds) tokens.push_back(&v);

    AttentionTrace trace;
    trace.clip_id = ctx.clip->clip_id;
    trace.n_layers = config.n_layers;
    trace.n_heads = config.n_heads;
    trace.layout = layout;
    for (std::size_t l = 0; l < config.n_layers; ++l) trace.layer_ids.push_back(l);
    trace.blocks.reserve(config.n_layers * config.n_heads);

    // Mean attention over (layer, head) from each caption row to the
    // current clip's visual columns; feeds the caption embeddings.
    Mat mean_attn(n_cap, n_vis);

    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(config.head_dim));
    std::vector<Vec> keys(n_total);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        for (std::size_t h = 0; h < config.n_heads; ++h) {
            const Mat wq = query_projection(config, l, h);
            const Mat wk = key_projection(config, l, h);
            for (std::size_t j = 0; j < n_total; ++j) {
                keys[j] = detail::project(*tokens[j], wk);
            }
            Mat block(n_cap, n_vis);
            for (std::size_t i = 0; i < n_cap; ++i) {
                const std::size_t pos = layout.caption_row_offset() + i;
                const Vec q = detail::project(*tokens[pos], wq);
                Vec logits(pos + 1);  // causal: this token and everything before
                for (std::size_t j = 0; j <= pos; ++j) {
                    logits[j] = num::dot(q, keys[j]) * inv_sqrt_dk;
                }
                const Vec row = num::softmax_row(logits);
                for (std::size_t j = 0; j < n_vis; ++j) {
                    block.at(i, j) = detail::to_f32_grid(row[layout.visual_col_offset + j]);
                    mean_attn.at(i, j) += row[layout.visual_col_offset + j];
                }
            }
            trace.blocks.push_back(std::move(block));
        }
    }
    const double inv_lh = 1.0 / static_cast<double>(config.n_layers * config.n_heads);
    for (double& x : mean_attn.data) x *= inv_lh;

    // Caption embeddings: renormalized attention-weighted sums.
    std::vector<Vec> caption_tokens(n_cap, Vec(config.dim, 0.0));
    for (std::size_t i = 0; i < n_cap; ++i) {
        double mass = 0.0;
        for (std::size_t j = 0; j < n_vis; ++j) mass += mean_attn.at(i, j);
        for (std::size_t j = 0; j < n_vis; ++j) {
            const double w = mass > 0.0 ? mean_attn.at(i, j) / mass : 0.0;
            if (w == 0.0) continue;
            const Vec& x = *tokens[layout.visual_col_offset + j];
            for (std::size_t d = 0; d < config.dim; ++d) caption_tokens[i][d] += w * x[d];
        }
        for (double& x : caption_tokens[i]) x = detail::to_f32_grid(x);
    }

    // Most attended current-clip token, exposed in the caption text.
    std::size_t focus = 0;
    double focus_mass = -1.0;
    for (std::size_t j = 0; j < n_vis; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < n_cap; ++i) col += mean_attn.at(i, j);
        if (col > focus_mass) {
            focus_mass = col;
            focus = j;
        }
    }
    const std::string text = "clip " + std::to_string(ctx.clip->clip_id) + " focus " +
                             std::to_string(focus);

    BackendOutput out{CaptionRecord::make(ctx.clip->clip_id, std::move(caption_tokens), text),
                      std::move(trace)};
    return out;
}

// The video-LLM seam: anything that can caption one assembled context.
class ClipBackend {
public:
    virtual ~ClipBackend() = default;
    virtual BackendOutput process_clip(const ContextAssembly& ctx) = 0;
};

class MockBackend final : public ClipBackend {
public:
    explicit MockBackend(MockModelConfig config) : config_(config) { config_.validate(); }

    BackendOutput process_clip(const ContextAssembly& ctx) override {
        return mock_process_clip(config_, ctx);
    }

    const MockModelConfig& config() const { return config_; }

private:
    MockModelConfig config_;
};

// One clip of a synthetic scenario. Clips are generated from per-clip
// seeds, so clip N is the same whether or not clips 0..N-1 were generated.
inline ClipTokens generate_clip(const SyntheticScenario& spec, std::uint64_t clip_id) {
    if (clip_id >= spec.n_clips) {
        throw InvalidArgument("generate_clip: clip " + std::to_string(clip_id) +
                              " out of range");
    }
    const std::size_t count = spec.clip_token_count();
    Rng rng(derive_seed(spec.seed, clip_id));
    ClipTokens clip;
    clip.clip_id = clip_id;
    clip.t_frames = spec.t_frames;
    clip.tokens_per_frame = spec.tokens_per_frame;
    clip.dim = spec.dim;
    clip.global_offset = clip_id * count;
    clip.embeddings.assign(count, Vec(spec.dim));
    for (Vec& tok : clip.embeddings) {
        for (double& x : tok) x = spec.noise_scale * rng.next_gaussian();
    }
    // Planted events: concept plus a small jitter, drawn after the
    // background so the noise field is identical with or without events.
    for (const ScenarioEvent& e : spec.events) {
        if (e.clip_id != clip_id) continue;
        for (std::size_t t : e.token_indices) {
            Vec& tok = clip.embeddings[t];
            for (std::size_t d = 0; d < spec.dim; ++d) {
                tok[d] = e.concept_vec[d] + 0.5 * spec.noise_scale * rng.next_gaussian();
            }
        }
    }
    return clip;
}

struct GeneratedScenario {
    std::vector<ClipTokens> clips;
    std::vector<ScenarioEvent> ground_truth;
};

inline GeneratedScenario generate_scenario(const SyntheticScenario& spec) {
    spec.validate();
    GeneratedScenario out;
    out.clips.reserve(spec.n_clips);
    for (std::uint64_t c = 0; c < spec.n_clips; ++c) out.clips.push_back(generate_clip(spec, c));
    out.ground_truth = spec.events;
    return out;
}

// Scenario construction helper: places `n_events` events on distinct clips
// with contiguous token runs and random unit concepts, all from one seed.
inline SyntheticScenario make_random_events(SyntheticScenario spec, std::size_t n_events,
                                            std::size_t tokens_per_event) {
    if (tokens_per_event == 0 || tokens_per_event > spec.clip_token_count()) {
        throw InvalidArgument("make_random_events: bad tokens_per_event");
    }
    if (n_events > spec.n_clips) {
        throw InvalidArgument("make_random_events: more events than clips");
    }
    Rng rng(derive_seed(spec.seed, 0xEEull));
    // Distinct clips via partial Fisher-Yates.
    std::vector<std::uint64_t> clips(spec.n_clips);
    for (std::size_t i = 0; i < clips.size(); ++i) clips[i] = i;
    for (std::size_t i = 0; i < n_events; ++i) {
        std::swap(clips[i], clips[i + rng.next_below(clips.size() - i)]);
    }
    for (std::size_t i = 0; i < n_events; ++i) {
        ScenarioEvent e;
        e.clip_id = clips[i];
        const std::size_t start =
            rng.next_below(spec.clip_token_count() - tokens_per_event + 1);
        for (std::size_t t = 0; t < tokens_per_event; ++t) e.token_indices.push_back(start + t);
        e.concept_vec = detail::unit_gaussian(rng, spec.dim);
        spec.events.push_back(std::move(e));
    }
    return spec;
}

inline QueryEmbedding event_query(const ScenarioEvent& e) {
    return QueryEmbedding::single(e.concept_vec);
}

// --- scenario file format (plain-text key=value sections) ---

inline std::string scenario_to_text(const SyntheticScenario& spec) {
    std::string out;
    char buf[64];
    out += "[scenario]\n";
    out += "n_clips=" + std::to_string(spec.n_clips) + "\n";
    out += "t_frames=" + std::to_string(spec.t_frames) + "\n";
    out += "tokens_per_frame=" + std::to_string(spec.tokens_per_frame) + "\n";
    out += "dim=" + std::to_string(spec.dim) + "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", spec.noise_scale);
    out += "noise_scale=" + std::string(buf) + "\n";
    out += "seed=" + std::to_string(spec.seed) + "\n";
    for (const ScenarioEvent& e : spec.events) {
        out += "\n[event]\n";
        out += "clip=" + std::to_string(e.clip_id) + "\n";
        out += "tokens=";
        for (std::size_t i = 0; i < e.token_indices.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(e.token_indices[i]);
        }
        out += "\nconcept=";
        for (std::size_t d = 0; d < e.concept_vec.size(); ++d) {
            if (d) out += ",";
            std::snprintf(buf, sizeof(buf), "%.17g", e.concept_vec[d]);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

inline SyntheticScenario scenario_from_text(const std::string& text,
                                            std::vector<std::string>* notices = nullptr) {
    const auto sections = config::parse(text);
    const ConfigSection* main = config::find(sections, "scenario");
    if (!main) throw ConfigError("missing [scenario] section");

    SyntheticScenario spec;
    config::SectionView v(*main, notices);
    spec.n_clips = static_cast<std::size_t>(v.require_u64("n_clips"));
    spec.t_frames = static_cast<std::size_t>(v.get_u64("t_frames", 16));
    spec.tokens_per_frame = static_cast<std::size_t>(v.get_u64("tokens_per_frame", 196));
    spec.dim = static_cast<std::size_t>(v.get_u64("dim", 16));
    spec.noise_scale = v.get_f64("noise_scale", 0.1);
    spec.seed = v.get_u64("seed", 0);
    v.finish();

    for (const ConfigSection& s : sections) {
        if (s.name != "event") continue;
        config::SectionView ev(s, notices);
        ScenarioEvent e;
        e.clip_id = ev.require_u64("clip");
        for (std::size_t t : ev.get_index_list("tokens", {})) e.token_indices.push_back(t);
        e.concept_vec = ev.get_f64_list("concept");
        ev.finish();
        spec.events.push_back(std::move(e));
    }
    spec.validate();
    return spec;
}

}  // namespace backend
}  // namespace vidmem
