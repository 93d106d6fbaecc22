#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vidmem/errors.hpp"
#include "vidmem/numerics.hpp"

namespace vidmem {

// One long-term memory entry: the token embeddings of a clip's generated
// caption, their mean pool, and an optional text payload.
struct CaptionRecord {
    std::uint64_t clip_id = 0;
    std::vector<Vec> token_embeddings;
    std::size_t token_count = 0;
    Vec pooled;
    std::optional<std::string> text;

    static CaptionRecord make(std::uint64_t clip_id, std::vector<Vec> tokens,
                              std::optional<std::string> text = std::nullopt) {
        if (tokens.empty()) {
            throw InvalidArgument("CaptionRecord: needs at least one token");
        }
        CaptionRecord r;
        r.clip_id = clip_id;
        r.token_count = tokens.size();
        r.pooled = mean_of(tokens);
        r.token_embeddings = std::move(tokens);
        r.text = std::move(text);
        return r;
    }

    static Vec mean_of(const std::vector<Vec>& tokens) {
        Vec m(tokens[0].size(), 0.0);
        for (const Vec& t : tokens) {
            if (t.size() != m.size()) {
                throw InvalidDimension("CaptionRecord: ragged token embeddings");
            }
            for (std::size_t d = 0; d < m.size(); ++d) m[d] += t[d];
        }
        for (double& x : m) x /= static_cast<double>(tokens.size());
        return m;
    }
};

struct QueryEmbedding {
    std::vector<Vec> token_embeddings;
    Vec pooled;

    static QueryEmbedding make(std::vector<Vec> tokens) {
        if (tokens.empty()) throw InvalidArgument("QueryEmbedding: needs at least one token");
        QueryEmbedding q;
        q.pooled = CaptionRecord::mean_of(tokens);
        q.token_embeddings = std::move(tokens);
        return q;
    }

    static QueryEmbedding single(Vec v) { return make({std::move(v)}); }
};

// Ranked retrieval output. `ranked` holds (clip_id, score) in pick order;
// scores are the MMR objective at pick time (pure relevance for plain top-k).
struct RetrievalResult {
    std::vector<std::pair<std::uint64_t, double>> ranked;
    std::size_t tokens_used = 0;
    std::size_t budget = 0;

    bool contains(std::uint64_t clip_id) const {
        for (const auto& [id, score] : ranked)
            if (id == clip_id) return true;
        return false;
    }
};

enum class SimilarityMode { Pooled, Pairwise };

inline const char* to_string(SimilarityMode m) {
    return m == SimilarityMode::Pooled ? "pooled" : "pairwise";
}

namespace retrieval {

// Realization of "average cosine similarity between token sets": cosine of
// the mean pools. O(d) per pair. The pairwise variant below is the literal
// mean of all pairwise cosines, O(n*m*d); both are exposed for comparison.
inline double caption_similarity(const QueryEmbedding& query, const CaptionRecord& caption) {
    return num::cosine(query.pooled, caption.pooled);
}

inline double pairwise_similarity(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    if (a.empty() || b.empty()) throw InvalidArgument("pairwise_similarity: empty token set");
    double sum = 0.0;
    for (const Vec& u : a)
        for (const Vec& v : b) sum += num::cosine(u, v);
    return sum / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

namespace detail {

inline double query_sim(const QueryEmbedding& q, const CaptionRecord& c, SimilarityMode mode) {
    return mode == SimilarityMode::Pooled ? caption_similarity(q, c)
                                          : pairwise_similarity(q.token_embeddings,
                                                                c.token_embeddings);
}

inline double caption_sim(const CaptionRecord& a, const CaptionRecord& b, SimilarityMode mode) {
    return mode == SimilarityMode::Pooled
               ? num::cosine(a.pooled, b.pooled)
               : pairwise_similarity(a.token_embeddings, b.token_embeddings);
}

struct MmrState {
    const std::vector<CaptionRecord>& store;
    std::vector<double> relevance;       // sim(candidate, query)
    std::vector<double> max_to_chosen;   // max over chosen of sim(candidate, chosen)
    std::vector<bool> chosen;

    MmrState(const QueryEmbedding& query, const std::vector<CaptionRecord>& s,
             SimilarityMode mode)
        : store(s),
          relevance(s.size()),
          max_to_chosen(s.size(), -std::numeric_limits<double>::infinity()),
          chosen(s.size(), false) {
        for (std::size_t i = 0; i < s.size(); ++i) relevance[i] = query_sim(query, s[i], mode);
    }

    // Argmax of the MMR objective over unchosen candidates. The first pick
    // (no chosen yet) reduces to pure relevance. Ties fall to the smaller
    // clip_id, which also makes the result independent of store order.
    std::size_t next(double lambda, bool any_chosen) const {
        std::size_t best = store.size();
        double best_score = 0.0;
        for (std::size_t i = 0; i < store.size(); ++i) {
            if (chosen[i]) continue;
            const double score = any_chosen
                                     ? lambda * relevance[i] - (1.0 - lambda) * max_to_chosen[i]
                                     : relevance[i];
            if (best == store.size() || score > best_score ||
                (score == best_score && store[i].clip_id < store[best].clip_id)) {
                best = i;
                best_score = score;
            }
        }
        return best;
    }

    double objective(std::size_t i, double lambda, bool any_chosen) const {
        return any_chosen ? lambda * relevance[i] - (1.0 - lambda) * max_to_chosen[i]
                          : relevance[i];
    }

    void mark(std::size_t i, SimilarityMode mode) {
        chosen[i] = true;
        for (std::size_t j = 0; j < store.size(); ++j) {
            if (chosen[j]) continue;
            max_to_chosen[j] =
                std::max(max_to_chosen[j], caption_sim(store[j], store[i], mode));
        }
    }
};

}  // namespace detail

// Maximal Marginal Relevance: greedily pick argmax over unselected c of
// lambda*sim(c, query) - (1-lambda)*max over selected s of sim(c, s).
inline RetrievalResult mmr_retrieve(const QueryEmbedding& query,
                                    const std::vector<CaptionRecord>& store, std::size_t k,
                                    double lambda,
                                    SimilarityMode mode = SimilarityMode::Pooled) {
    if (store.empty()) throw EmptyStore("mmr_retrieve: empty caption store");
    if (k > store.size()) {
        throw InvalidArgument("mmr_retrieve: k " + std::to_string(k) + " > store size " +
                              std::to_string(store.size()));
    }
    if (lambda < 0.0 || lambda > 1.0) {
        throw InvalidArgument("mmr_retrieve: lambda must be in [0,1]");
    }

    detail::MmrState state(query, store, mode);
    RetrievalResult out;
    for (std::size_t picked = 0; picked < k; ++picked) {
        const bool any = picked > 0;
        const std::size_t i = state.next(lambda, any);
        out.ranked.emplace_back(store[i].clip_id, state.objective(i, lambda, any));
        out.tokens_used += store[i].token_count;
        state.mark(i, mode);
    }
    return out;
}

// MMR under a token budget instead of a fixed k: captions are admitted in
// MMR order while tokens_used + token_count fits in budget - reserve; the
// first rejection stops retrieval. `reserve` defaults to the query's own
// token count.
inline RetrievalResult budgeted_retrieve(const QueryEmbedding& query,
                                         const std::vector<CaptionRecord>& store, double lambda,
                                         std::size_t budget_tokens,
                                         std::optional<std::size_t> reserve = std::nullopt,
                                         SimilarityMode mode = SimilarityMode::Pooled) {
    if (store.empty()) throw EmptyStore("budgeted_retrieve: empty caption store");
    if (budget_tokens == 0) throw InvalidArgument("budgeted_retrieve: zero budget");
    if (lambda < 0.0 || lambda > 1.0) {
        throw InvalidArgument("budgeted_retrieve: lambda must be in [0,1]");
    }
    const std::size_t reserved = reserve.value_or(query.token_embeddings.size());
    const std::size_t usable = budget_tokens > reserved ? budget_tokens - reserved : 0;

    detail::MmrState state(query, store, mode);
    RetrievalResult out;
    out.budget = budget_tokens;
    for (std::size_t picked = 0; picked < store.size(); ++picked) {
        const bool any = picked > 0;
        const std::size_t i = state.next(lambda, any);
        if (out.tokens_used + store[i].token_count > usable) break;
        out.ranked.emplace_back(store[i].clip_id, state.objective(i, lambda, any));
        out.tokens_used += store[i].token_count;
        state.mark(i, mode);
    }
    return out;
}

// Baseline: k distinct clips drawn uniformly, deterministic per seed.
inline RetrievalResult baseline_retrieve_random(const std::vector<CaptionRecord>& store,
                                                std::size_t k, Rng rng) {
    if (store.empty()) throw EmptyStore("baseline_retrieve_random: empty caption store");
    if (k > store.size()) {
        throw InvalidArgument("baseline_retrieve_random: k " + std::to_string(k) +
                              " > store size " + std::to_string(store.size()));
    }
    std::vector<std::size_t> pool(store.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    RetrievalResult out;
    for (std::size_t picked = 0; picked < k; ++picked) {
        const std::size_t j = picked + rng.next_below(pool.size() - picked);
        std::swap(pool[picked], pool[j]);
        const auto& rec = store[pool[picked]];
        out.ranked.emplace_back(rec.clip_id, 0.0);
        out.tokens_used += rec.token_count;
    }
    return out;
}

// Baseline: rank clips by cosine between a query vector and each clip's
// pooled visual embedding. Captions remain the payload consumed downstream;
// only the ranking signal changes.
inline RetrievalResult baseline_retrieve_visual(const Vec& query_visual,
                                                const std::map<std::uint64_t, Vec>& visual_index,
                                                std::size_t k) {
    if (visual_index.empty()) throw EmptyStore("baseline_retrieve_visual: empty index");
    if (k > visual_index.size()) {
        throw InvalidArgument("baseline_retrieve_visual: k exceeds index size");
    }
    std::vector<std::pair<std::uint64_t, double>> scored;
    scored.reserve(visual_index.size());
    for (const auto& [clip_id, pooled] : visual_index) {
        scored.emplace_back(clip_id, num::cosine(query_visual, pooled));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    RetrievalResult out;
    out.ranked.assign(scored.begin(), scored.begin() + k);
    return out;
}

}  // namespace retrieval
}  // namespace vidmem
