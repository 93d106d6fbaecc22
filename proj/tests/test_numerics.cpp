#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vidmem/numerics.hpp"

using namespace vidmem;

namespace {

// Double-double (compensated) accumulator. Used as an extended-precision
// oracle for sums; error is O(u^2) per operation instead of O(u).
struct DoubleDouble {
    double hi = 0.0;
    double lo = 0.0;

    void add(double x) {
        double s = hi + x;
        double bb = s - hi;
        double err = (hi - (s - bb)) + (x - bb);
        hi = s;
        lo += err;
        double t = hi + lo;
        lo = lo - (t - hi);
        hi = t;
    }

    double value() const { return hi + lo; }
};

// Extended-precision softmax reference: long double exponentials summed with
// a compensated accumulator.
Vec softmax_oracle(const Vec& logits) {
    long double m = logits[0];
    for (double x : logits) m = std::max<long double>(m, x);
    std::vector<long double> e(logits.size());
    DoubleDouble sum;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = expl(static_cast<long double>(logits[i]) - m);
        sum.add(static_cast<double>(e[i]));
    }
    Vec out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = static_cast<double>(e[i] / static_cast<long double>(sum.value()));
    }
    return out;
}

}  // namespace

TEST_CASE("softmax: uniform logits give uniform mass") {
    Vec out = num::softmax_row({0, 0, 0, 0});
    for (double x : out) CHECK(x == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("softmax: huge logit does not overflow") {
    Vec out = num::softmax_row({1000.0, 0.0});
    CHECK(std::isfinite(out[0]));
    CHECK(std::isfinite(out[1]));
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[1] < 1e-300);
}

TEST_CASE("softmax: matches extended-precision oracle on random input") {
    Rng rng(123);
    Vec logits(64);
    for (double& x : logits) x = rng.next_gaussian() * 5.0;
    Vec got = num::softmax_row(logits);
    Vec want = softmax_oracle(logits);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        CHECK(std::abs(got[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("softmax: sums to one and is permutation-equivariant") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng.next_below(40);
        Vec logits(n);
        for (double& x : logits) x = rng.next_gaussian() * 3.0;
        Vec out = num::softmax_row(logits);

        double sum = 0.0;
        for (double x : out) {
            CHECK(x > 0.0);
            CHECK(x <= 1.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);

        // Reverse as the permutation; softmax(sigma(x)) == sigma(softmax(x)).
        Vec rev(logits.rbegin(), logits.rend());
        Vec out_rev = num::softmax_row(rev);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(out_rev[i] == doctest::Approx(out[n - 1 - i]).epsilon(1e-13));
        }
    }
}

TEST_CASE("softmax: empty input rejected") {
    CHECK_THROWS_AS(num::softmax_row({}), InvalidDimension);
}

TEST_CASE("cosine: identity, orthogonality, positive scaling") {
    Vec v = {1.0, 2.0, -3.0};
    CHECK(num::cosine(v, v) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(num::cosine({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(num::cosine({1, 2}, {2, 4}) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("cosine: symmetric within 1e-15") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        Vec u(8), v(8);
        for (double& x : u) x = rng.next_gaussian();
        for (double& x : v) x = rng.next_gaussian();
        CHECK(std::abs(num::cosine(u, v) - num::cosine(v, u)) < 1e-15);
    }
}

TEST_CASE("cosine: error paths") {
    CHECK_THROWS_AS(num::cosine({1, 2}, {1, 2, 3}), InvalidDimension);
    CHECK_THROWS_AS(num::cosine({0, 0}, {1, 2}), DegenerateVector);
    CHECK_THROWS_AS(num::cosine({1, 2}, {0, 0}), DegenerateVector);
}

TEST_CASE("argsort_desc: hand cases and tie-break") {
    CHECK(num::argsort_desc({0.3, 0.9, 0.1}) == std::vector<std::size_t>{1, 0, 2});
    CHECK(num::argsort_desc({0.5, 0.5, 0.2}) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("argsort_desc: matches pair-sort oracle on 1000 random entries") {
    Rng rng(2024);
    Vec scores(1000);
    // Quantize so ties actually occur.
    for (double& x : scores) x = std::floor(rng.next_f64() * 100.0) / 100.0;

    std::vector<std::pair<double, std::size_t>> pairs;
    for (std::size_t i = 0; i < scores.size(); ++i) pairs.push_back({-scores[i], i});
    std::sort(pairs.begin(), pairs.end());
    std::vector<std::size_t> want;
    for (auto& p : pairs) want.push_back(p.second);

    CHECK(num::argsort_desc(scores) == want);
}

TEST_CASE("argsort_desc: bijection yielding non-increasing scores") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t n = 1 + rng.next_below(64);
        Vec scores(n);
        for (double& x : scores) x = rng.next_f64();
        auto idx = num::argsort_desc(scores);
        std::vector<bool> seen(n, false);
        for (std::size_t i : idx) {
            CHECK(i < n);
            CHECK(!seen[i]);
            seen[i] = true;
        }
        for (std::size_t i = 1; i < n; ++i) {
            CHECK(scores[idx[i - 1]] >= scores[idx[i]]);
        }
    }
}

TEST_CASE("rng: golden sequence for seed 0") {
    Rng r(0);
    CHECK(r.next_u64() == 0xE220A8397B1DCDAFull);
    Rng f(0);
    CHECK(f.next_f64() == doctest::Approx(0.88331080821364261).epsilon(1e-16));
    CHECK(f.next_f64() == doctest::Approx(0.43152799704850997).epsilon(1e-16));
    CHECK(f.next_f64() == doctest::Approx(0.026433771592597743).epsilon(1e-16));
    Rng g(42);
    CHECK(g.next_u64() == 0xBDD732262FEB6E95ull);
}

TEST_CASE("rng: identical seeds give identical streams") {
    Rng a(777), b(777);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: 1e5 draws have mean near 0.5") {
    Rng r(7);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        double x = r.next_f64();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        sum += x;
    }
    double mean = sum / 100000.0;
    CHECK(mean > 0.49);
    CHECK(mean < 0.51);
}

TEST_CASE("rng: gaussian has sane moments") {
    Rng r(31);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double x = r.next_gaussian();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("mat: shape validation") {
    CHECK_THROWS_AS(Mat(2, 3, {1, 2, 3}), InvalidDimension);
    CHECK_THROWS_AS(Mat(1, 2, {1.0, std::nan("")}), InvalidArgument);
    Mat m(2, 2, {1, 2, 3, 4});
    CHECK(m.at(1, 0) == 3);
}
