#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "vidmem/retrieval.hpp"

using namespace vidmem;

namespace {

CaptionRecord unit_caption(std::uint64_t id, double angle_rad, std::size_t tokens = 1) {
    std::vector<Vec> t(tokens, Vec{std::cos(angle_rad), std::sin(angle_rad)});
    return CaptionRecord::make(id, std::move(t));
}

QueryEmbedding unit_query(double angle_rad) {
    return QueryEmbedding::single({std::cos(angle_rad), std::sin(angle_rad)});
}

std::vector<CaptionRecord> random_store(Rng& rng, std::size_t n, std::size_t dim,
                                        std::size_t max_tokens = 6) {
    std::vector<CaptionRecord> store;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Vec> toks(1 + rng.next_below(max_tokens), Vec(dim));
        for (Vec& t : toks)
            for (double& x : t) x = rng.next_gaussian();
        store.push_back(CaptionRecord::make(i, std::move(toks)));
    }
    return store;
}

QueryEmbedding random_query(Rng& rng, std::size_t dim) {
    Vec v(dim);
    for (double& x : v) x = rng.next_gaussian();
    return QueryEmbedding::single(std::move(v));
}

}  // namespace

TEST_CASE("caption_similarity: identity and orthogonality") {
    auto q = unit_query(0.3);
    CHECK(retrieval::caption_similarity(q, unit_caption(0, 0.3)) ==
          doctest::Approx(1.0).epsilon(1e-12));
    auto orth = unit_caption(1, 0.3 + 1.5707963267948966);
    CHECK(retrieval::caption_similarity(q, orth) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("caption_similarity: argmax over 20 captions matches exhaustive scan") {
    Rng rng(50);
    for (int trial = 0; trial < 20; ++trial) {
        auto store = random_store(rng, 20, 8);
        auto q = random_query(rng, 8);

        std::size_t best = 0;
        double best_sim = -2.0;
        for (std::size_t i = 0; i < store.size(); ++i) {
            const double s = num::cosine(q.pooled, store[i].pooled);
            if (s > best_sim) {
                best_sim = s;
                best = i;
            }
        }
        auto res = retrieval::mmr_retrieve(q, store, 1, 0.5);
        REQUIRE(res.ranked.size() == 1);
        CHECK(res.ranked[0].first == store[best].clip_id);
        CHECK(res.ranked[0].second == doctest::Approx(best_sim).epsilon(1e-12));
    }
}

TEST_CASE("caption record: stored pool equals a fresh recomputation") {
    Rng rng(51);
    for (int trial = 0; trial < 20; ++trial) {
        auto store = random_store(rng, 1, 5);
        const Vec again = CaptionRecord::mean_of(store[0].token_embeddings);
        for (std::size_t d = 0; d < again.size(); ++d) {
            CHECK(std::abs(store[0].pooled[d] - again[d]) < 1e-12);
        }
    }
}

TEST_CASE("caption_similarity: degenerate and mismatched inputs") {
    auto q = unit_query(0.0);
    auto zero = CaptionRecord::make(5, {{0.0, 0.0}});
    CHECK_THROWS_AS(retrieval::caption_similarity(q, zero), DegenerateVector);
    auto wide = CaptionRecord::make(6, {{1.0, 0.0, 0.0}});
    CHECK_THROWS_AS(retrieval::caption_similarity(q, wide), InvalidDimension);
}

TEST_CASE("mmr: lambda 1 equals plain similarity ranking") {
    Rng rng(60);
    for (int trial = 0; trial < 30; ++trial) {
        auto store = random_store(rng, 12, 6);
        auto q = random_query(rng, 6);
        auto mmr = retrieval::mmr_retrieve(q, store, store.size(), 1.0);

        std::vector<std::pair<double, std::uint64_t>> plain;
        for (const auto& c : store) {
            plain.push_back({-retrieval::caption_similarity(q, c), c.clip_id});
        }
        std::sort(plain.begin(), plain.end());
        REQUIRE(mmr.ranked.size() == plain.size());
        for (std::size_t i = 0; i < plain.size(); ++i) {
            CHECK(mmr.ranked[i].first == plain[i].second);
            CHECK(mmr.ranked[i].second == doctest::Approx(-plain[i].first).epsilon(1e-12));
        }
    }
}

TEST_CASE("mmr: hand-executed five-caption trace") {
    // Unit vectors; similarity is the cosine of the angle difference.
    const double deg = 3.14159265358979323846 / 180.0;
    auto q = unit_query(-20.0 * deg);
    std::vector<CaptionRecord> store = {
        unit_caption(0, 0.0), unit_caption(1, 10.0 * deg), unit_caption(2, 45.0 * deg),
        unit_caption(3, 90.0 * deg), unit_caption(4, 140.0 * deg)};

    // Manual recurrence, lambda = 0.5:
    //   pick 1: pure relevance argmax -> caption 0, rel cos(20 deg).
    //   pick 2: score_i = 0.5 cos(theta_i + 20) - 0.5 cos(theta_i)
    //           c1 -0.0594, c2 -0.1423, c3 -0.1710, c4 -0.0868 -> caption 1.
    //   pick 3: redundancy now vs max(c0, c1):
    //           c2 -0.1983, c3 -0.2578, c4 -0.1484 -> caption 4.
    auto res = retrieval::mmr_retrieve(q, store, 3, 0.5);
    REQUIRE(res.ranked.size() == 3);
    CHECK(res.ranked[0].first == 0);
    CHECK(res.ranked[1].first == 1);
    CHECK(res.ranked[2].first == 4);
    CHECK(res.ranked[0].second == doctest::Approx(std::cos(20.0 * deg)).epsilon(1e-12));
    const double pick2 = 0.5 * std::cos(30.0 * deg) - 0.5 * std::cos(10.0 * deg);
    CHECK(res.ranked[1].second == doctest::Approx(pick2).epsilon(1e-12));
    const double pick3 = 0.5 * std::cos(160.0 * deg) - 0.5 * std::cos(130.0 * deg);
    CHECK(res.ranked[2].second == doctest::Approx(pick3).epsilon(1e-12));
}

TEST_CASE("mmr: first element is always the relevance argmax") {
    Rng rng(61);
    for (int trial = 0; trial < 25; ++trial) {
        auto store = random_store(rng, 10, 4);
        auto q = random_query(rng, 4);
        const double lambda = rng.next_f64();
        auto res = retrieval::mmr_retrieve(q, store, 3, lambda);
        double best = -2.0;
        std::uint64_t best_id = 0;
        for (const auto& c : store) {
            const double s = retrieval::caption_similarity(q, c);
            if (s > best) {
                best = s;
                best_id = c.clip_id;
            }
        }
        CHECK(res.ranked[0].first == best_id);
    }
}

TEST_CASE("mmr: insertion-order independence") {
    Rng rng(62);
    auto store = random_store(rng, 9, 5);
    auto q = random_query(rng, 5);
    auto res = retrieval::mmr_retrieve(q, store, 5, 0.4);

    std::vector<CaptionRecord> shuffled = store;
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
    }
    auto res2 = retrieval::mmr_retrieve(q, shuffled, 5, 0.4);
    REQUIRE(res.ranked.size() == res2.ranked.size());
    for (std::size_t i = 0; i < res.ranked.size(); ++i) {
        CHECK(res.ranked[i].first == res2.ranked[i].first);
        CHECK(res.ranked[i].second == res2.ranked[i].second);
    }
}

TEST_CASE("mmr: error paths") {
    auto q = unit_query(0.0);
    std::vector<CaptionRecord> empty;
    CHECK_THROWS_AS(retrieval::mmr_retrieve(q, empty, 1, 0.5), EmptyStore);
    std::vector<CaptionRecord> one = {unit_caption(0, 0.1)};
    CHECK_THROWS_AS(retrieval::mmr_retrieve(q, one, 2, 0.5), InvalidArgument);
    CHECK_THROWS_AS(retrieval::mmr_retrieve(q, one, 1, 1.5), InvalidArgument);
}

TEST_CASE("budgeted_retrieve: admits exactly budget/size uniform captions") {
    Rng rng(63);
    std::vector<CaptionRecord> store;
    for (std::size_t i = 0; i < 25; ++i) store.push_back(unit_caption(i, 0.1 * (i + 1), 500));
    auto q = unit_query(0.05);
    auto res = retrieval::budgeted_retrieve(q, store, 0.5, 10000, /*reserve=*/0);
    CHECK(res.ranked.size() == 20);
    CHECK(res.tokens_used == 10000);
    CHECK(res.budget == 10000);
}

TEST_CASE("budgeted_retrieve: budget below the smallest caption yields nothing") {
    std::vector<CaptionRecord> store = {unit_caption(0, 0.3, 50)};
    auto q = unit_query(0.0);
    auto res = retrieval::budgeted_retrieve(q, store, 0.5, 20, 0);
    CHECK(res.ranked.empty());
    CHECK(res.tokens_used == 0);
}

TEST_CASE("budgeted_retrieve: default reserve is the query token count") {
    std::vector<CaptionRecord> store = {unit_caption(0, 0.2, 6), unit_caption(1, 0.4, 6)};
    auto q = QueryEmbedding::make({Vec{1, 0}, Vec{1, 0.1}, Vec{1, 0.2}, Vec{0.9, 0.0}});
    // budget 10, reserve 4 -> usable 6 -> one caption fits.
    auto res = retrieval::budgeted_retrieve(q, store, 1.0, 10);
    CHECK(res.ranked.size() == 1);
    CHECK(res.tokens_used == 6);
}

TEST_CASE("budgeted_retrieve: never exceeds budget over random stores") {
    Rng rng(64);
    for (int trial = 0; trial < 100; ++trial) {
        auto store = random_store(rng, 1 + rng.next_below(12), 4, 30);
        auto q = random_query(rng, 4);
        const std::size_t budget = 1 + rng.next_below(120);
        auto res = retrieval::budgeted_retrieve(q, store, rng.next_f64(), budget, 0);
        CHECK(res.tokens_used <= budget);
        std::set<std::uint64_t> ids;
        for (auto& [id, s] : res.ranked) ids.insert(id);
        CHECK(ids.size() == res.ranked.size());
    }
}

TEST_CASE("baseline_retrieve_random: deterministic, exhaustive at k = n") {
    Rng rng(65);
    auto store = random_store(rng, 8, 3);
    auto a = retrieval::baseline_retrieve_random(store, 4, Rng(99));
    auto b = retrieval::baseline_retrieve_random(store, 4, Rng(99));
    REQUIRE(a.ranked.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.ranked[i].first == b.ranked[i].first);

    auto all = retrieval::baseline_retrieve_random(store, 8, Rng(1));
    std::set<std::uint64_t> ids;
    for (auto& [id, s] : all.ranked) ids.insert(id);
    CHECK(ids.size() == 8);

    CHECK_THROWS_AS(retrieval::baseline_retrieve_random(store, 9, Rng(0)), InvalidArgument);
}

TEST_CASE("baseline_retrieve_random: frequencies uniform within 3 sigma") {
    Rng rng(66);
    auto store = random_store(rng, 5, 3);
    std::map<std::uint64_t, int> counts;
    Rng draw(4242);
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        auto res = retrieval::baseline_retrieve_random(store, 1, Rng(draw.next_u64()));
        counts[res.ranked[0].first]++;
    }
    const double expect = trials / 5.0;
    const double sigma = std::sqrt(trials * 0.2 * 0.8);
    for (auto& [id, n] : counts) CHECK(std::abs(n - expect) <= 3.0 * sigma);
}

TEST_CASE("baseline_retrieve_visual: argmax, ties, identity") {
    std::map<std::uint64_t, Vec> index;
    index[3] = {1.0, 0.0};
    index[7] = {0.0, 1.0};
    index[9] = {0.7071067811865476, 0.7071067811865476};

    auto top = retrieval::baseline_retrieve_visual({1.0, 0.0}, index, 1);
    CHECK(top.ranked[0].first == 3);
    CHECK(top.ranked[0].second == doctest::Approx(1.0).epsilon(1e-12));

    // Exhaustive-scan oracle on random queries.
    Rng rng(67);
    for (int trial = 0; trial < 20; ++trial) {
        Vec q = {rng.next_gaussian(), rng.next_gaussian()};
        if (num::norm(q) == 0.0) continue;
        double best = -2.0;
        std::uint64_t best_id = 0;
        for (auto& [id, v] : index) {
            const double s = num::cosine(q, v);
            if (s > best) {
                best = s;
                best_id = id;
            }
        }
        CHECK(retrieval::baseline_retrieve_visual(q, index, 1).ranked[0].first == best_id);
    }

    // Orthogonal-to-all query: every score 0, ties resolved by clip id.
    std::map<std::uint64_t, Vec> flat;
    flat[11] = {1.0, 0.0, 0.0};
    flat[5] = {0.0, 1.0, 0.0};
    auto tied = retrieval::baseline_retrieve_visual({0.0, 0.0, 1.0}, flat, 2);
    CHECK(tied.ranked[0].first == 5);
    CHECK(tied.ranked[1].first == 11);
}

TEST_CASE("pairwise similarity mode agrees with pooled on single tokens") {
    Rng rng(68);
    auto store = random_store(rng, 6, 4, 1);  // every caption one token
    auto q = random_query(rng, 4);
    auto pooled = retrieval::mmr_retrieve(q, store, 4, 0.6, SimilarityMode::Pooled);
    auto pair = retrieval::mmr_retrieve(q, store, 4, 0.6, SimilarityMode::Pairwise);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(pooled.ranked[i].first == pair.ranked[i].first);
        CHECK(pooled.ranked[i].second == doctest::Approx(pair.ranked[i].second).epsilon(1e-12));
    }
}
