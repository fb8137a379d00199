#include "latflow/diophantine.hpp"
#include "latflow/heights.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace latflow;
using latflow::testing::rel_err;

namespace {

using i128 = __int128;

TargetMatrix scalar(const std::string& text) { return TargetMatrix::scalar(parse_entry(text)); }

// Exact best residual by looping over every q and every p in a box.
// Returns (numerator, denominator^2) of min ||s q - p||^2 for rational s.
struct ExactMin {
    i128 num;
    i128 den;
};

ExactMin brute_force_best(const std::vector<std::int64_t>& nums, const std::vector<std::int64_t>& dens, int m, int n,
                          std::int64_t T) {
    // Every entry shares the same denominator D here, so ||s q - p||^2 = sum (N_r - p_r D)^2 / D^2.
    const i128 D = dens[0];
    std::int64_t smax = 0;
    for (auto v : nums) smax = std::max<std::int64_t>(smax, std::abs(v));
    const std::int64_t pbound = static_cast<std::int64_t>(std::ceil(static_cast<double>(smax) / D * n * T)) + 1;
    i128 best = -1;
    std::vector<std::int64_t> q(static_cast<std::size_t>(n), -(T - 1));
    while (true) {
        i128 qn2 = 0;
        bool zero = true;
        for (auto v : q) {
            qn2 += static_cast<i128>(v) * v;
            zero = zero && v == 0;
        }
        if (!zero && qn2 < static_cast<i128>(T) * T) {
            i128 total = 0;
            for (int r = 0; r < m; ++r) {
                i128 N = 0;
                for (int c = 0; c < n; ++c) N += static_cast<i128>(nums[static_cast<std::size_t>(r * n + c)]) * q[static_cast<std::size_t>(c)];
                i128 row_best = -1;
                for (std::int64_t p = -pbound; p <= pbound; ++p) {
                    const i128 diff = N - p * D;
                    if (row_best < 0 || diff * diff < row_best) row_best = diff * diff;
                }
                total += row_best;
            }
            if (best < 0 || total < best) best = total;
        }
        int k = 0;
        while (k < n && q[static_cast<std::size_t>(k)] == T - 1) q[static_cast<std::size_t>(k++)] = -(T - 1);
        if (k == n) break;
        ++q[static_cast<std::size_t>(k)];
    }
    return {best, D * D};
}

// Continued fraction convergents of num/den.
std::vector<std::pair<std::int64_t, std::int64_t>> convergents(std::int64_t num, std::int64_t den) {
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    std::int64_t p_prev = 0, q_prev = 1, p = 1, q = 0; // (p_{-2}, q_{-2}), (p_{-1}, q_{-1})
    std::int64_t a = num, b = den;
    while (b != 0) {
        std::int64_t f = a / b;
        if ((a % b != 0) && ((a < 0) != (b < 0))) --f;
        const std::int64_t pn = f * p + p_prev, qn = f * q + q_prev;
        p_prev = p;
        q_prev = q;
        p = pn;
        q = qn;
        out.emplace_back(p, q);
        const std::int64_t r = a - f * b;
        a = b;
        b = r;
    }
    return out;
}

} // namespace

TEST_CASE("entry parsing") {
    CHECK(parse_entry("3/6").label == "1/2");
    const ExactEntry e = parse_entry("0.125");
    CHECK(e.num == 1);
    CHECK(e.den == 8);
    CHECK(parse_entry("-2").num == -2);
    const ExactEntry f = parse_entry("1e-3");
    CHECK(f.den == 1000);
    CHECK(f.num == 1);
    CHECK(parse_entry("golden").kind == ExactEntry::Kind::quadratic);
    CHECK(parse_entry("golden").value() == doctest::Approx((std::sqrt(5.0) - 1) / 2));
    CHECK(parse_entry("sqrt2").value() == doctest::Approx(std::sqrt(2.0)));
    const ExactEntry l = parse_entry("liouville(3)");
    CHECK(l.den == 282429536481); // 3^24
    CHECK(static_cast<double>(l.value()) == doctest::Approx(1.0 / 3 + 1.0 / 9 + std::pow(3.0, -6) + std::pow(3.0, -24)));
    CHECK(static_cast<double>(parse_entry("superexp").value()) == doctest::Approx(1.0 / (2 + 1.0 / (4 + 1.0 / (16 + 1.0 / 256)))));
    CHECK_THROWS_AS(parse_entry("1/0"), ValidationError);
    CHECK_THROWS_AS(parse_entry("abc"), ValidationError);
    CHECK_THROWS_AS(parse_entry("1/2000000000000"), ValidationError);
    CHECK_THROWS_AS(TargetMatrix(Dimensions(2, 1), {parse_entry("golden"), parse_entry("1/2")}), ValidationError);
}

TEST_CASE("best approximation examples") {
    const ApproxLevel half = best_approximation(scalar("1/2"), 3);
    CHECK(half.q(0) == 2);
    CHECK(half.p(0) == 1);
    CHECK(half.eps == 0.0);

    const TargetMatrix zero(Dimensions(2, 2), std::vector<ExactEntry>(4, parse_entry("0")));
    for (std::int64_t T : {2, 5, 16}) {
        const ApproxLevel lv = best_approximation(zero, T);
        CHECK(lv.eps == 0.0);
        CHECK(lv.q == IntVector::Unit(2, 0));
        CHECK(lv.p == IntVector::Zero(2));
    }

    CHECK_THROWS_AS(best_approximation(scalar("1/3"), 1), ValidationError);
    CHECK_THROWS_AS(best_approximation(TargetMatrix(Dimensions(1, 2), {parse_entry("1/3"), parse_entry("1/5")}), 20000),
                    ResourceError);
}

TEST_CASE("exhaustive search matches a loop over all (q, p)") {
    std::mt19937_64 rng(71);
    struct Case {
        int m, n;
        std::int64_t T;
    };
    for (const Case c : {Case{1, 1, 256}, Case{2, 1, 64}, Case{1, 2, 32}, Case{2, 2, 12}}) {
        for (int rep = 0; rep < 4; ++rep) {
            std::uniform_int_distribution<std::int64_t> den_dist(50, 997);
            const std::int64_t D = den_dist(rng);
            std::uniform_int_distribution<std::int64_t> num_dist(-2 * D, 2 * D);
            std::vector<std::int64_t> nums, dens;
            std::vector<ExactEntry> entries;
            for (int k = 0; k < c.m * c.n; ++k) {
                nums.push_back(num_dist(rng));
                dens.push_back(D);
                entries.push_back(ExactEntry::rational(nums.back(), D));
            }
            const TargetMatrix s(Dimensions(c.m, c.n), entries);
            const ApproxLevel lv = best_approximation(s, c.T);
            const ExactMin oracle = brute_force_best(nums, dens, c.m, c.n, c.T);

            // The returned (q, p) attains the exact oracle minimum.
            i128 got = 0;
            for (int r = 0; r < c.m; ++r) {
                i128 N = -static_cast<i128>(lv.p(r)) * D;
                for (int k = 0; k < c.n; ++k) N += static_cast<i128>(nums[static_cast<std::size_t>(r * c.n + k)]) * lv.q(k);
                got += N * N;
            }
            CHECK(got == oracle.num);
            CHECK(lv.q.squaredNorm() < c.T * c.T);
            CHECK(lv.q.squaredNorm() > 0);
            const double scale = std::pow(static_cast<double>(c.T), static_cast<double>(c.n) / c.m);
            const double expected = std::sqrt(static_cast<double>(oracle.num)) / static_cast<double>(D) * scale;
            CHECK(rel_err(lv.eps, expected) <= 1e-14);
        }
    }
}

TEST_CASE("one-dimensional minima are continued fraction convergents") {
    // Golden conjugate a: |F_k a - F_{k-1}| = a^k, and for T = F_{k+1} the best q is F_k.
    const TargetMatrix golden = scalar("golden");
    const long double a = (std::sqrt(5.0L) - 1) / 2;
    std::vector<std::int64_t> fib{0, 1};
    while (fib.back() < 5'000'000) fib.push_back(fib[fib.size() - 1] + fib[fib.size() - 2]);
    for (std::size_t k = 2; k + 1 < fib.size(); ++k) {
        const std::int64_t T = fib[k + 1];
        if (T < 3) continue;
        const ApproxLevel lv = best_approximation(golden, T);
        CHECK(lv.q(0) == fib[k]);
        CHECK(rel_err(lv.eps, static_cast<double>(std::pow(a, static_cast<long double>(k)) * T)) <= 1e-12);
    }

    // sqrt 2: Pell denominators, |q_k sqrt2 - p_k| = (sqrt2 - 1)^k.
    const TargetMatrix root2 = scalar("sqrt2");
    std::vector<std::int64_t> pell{1, 2};
    while (pell.back() < 5'000'000) pell.push_back(2 * pell[pell.size() - 1] + pell[pell.size() - 2]);
    for (std::size_t k = 0; k + 1 < pell.size(); ++k) {
        const std::int64_t T = pell[k + 1];
        const ApproxLevel lv = best_approximation(root2, T);
        CHECK(lv.q(0) == pell[k]);
        CHECK(rel_err(lv.eps, static_cast<double>(std::pow(std::sqrt(2.0L) - 1, static_cast<long double>(k + 1)) * T)) <=
              1e-12);
    }

    // Random rationals: for T = q_{k+1} the minimum is |q_k num - p_k den| / den.
    std::mt19937_64 rng(73);
    for (int rep = 0; rep < 20; ++rep) {
        const std::int64_t den = std::uniform_int_distribution<std::int64_t>(1000, 100'000)(rng);
        const std::int64_t num = std::uniform_int_distribution<std::int64_t>(1, den - 1)(rng);
        const TargetMatrix s = TargetMatrix::scalar(ExactEntry::rational(num, den));
        const auto cv = convergents(num, den);
        for (std::size_t k = 1; k + 1 < cv.size(); ++k) {
            const auto [p, q] = cv[k];
            const std::int64_t T = cv[k + 1].second;
            const std::int64_t g = std::gcd(num, den);
            i128 diff = static_cast<i128>(q) * (num / g) - static_cast<i128>(p) * (den / g);
            if (diff < 0) diff = -diff;
            const double expected = static_cast<double>(diff) / static_cast<double>(den / g) * static_cast<double>(T);
            CHECK(rel_err(best_approximation(s, T).eps, expected) <= 1e-12);
        }
    }
}

TEST_CASE("eps is invariant under s -> s + 1 and s -> -s") {
    std::mt19937_64 rng(79);
    std::vector<std::tuple<TargetMatrix, TargetMatrix, TargetMatrix>> triples;
    triples.emplace_back(scalar("golden"), TargetMatrix::scalar(ExactEntry::quadratic(1, 1, 5, 2)),
                         TargetMatrix::scalar(ExactEntry::quadratic(1, -1, 5, 2)));
    triples.emplace_back(scalar("sqrt2"), TargetMatrix::scalar(ExactEntry::quadratic(1, 1, 2, 1)),
                         TargetMatrix::scalar(ExactEntry::quadratic(0, -1, 2, 1)));
    for (int rep = 0; rep < 5; ++rep) {
        const std::int64_t den = std::uniform_int_distribution<std::int64_t>(10'000, 10'000'000)(rng);
        const std::int64_t num = std::uniform_int_distribution<std::int64_t>(-den, den)(rng);
        triples.emplace_back(TargetMatrix::scalar(ExactEntry::rational(num, den)),
                             TargetMatrix::scalar(ExactEntry::rational(num + den, den)),
                             TargetMatrix::scalar(ExactEntry::rational(-num, den)));
    }
    for (const auto& [s, shifted, negated] : triples) {
        const ApproxProfile a = approx_profile(s, 16);
        const ApproxProfile b = approx_profile(shifted, 16);
        const ApproxProfile c = approx_profile(negated, 16);
        for (std::size_t k = 0; k < a.levels.size(); ++k) {
            CHECK(a.levels[k].eps == b.levels[k].eps);
            CHECK(a.levels[k].eps == c.levels[k].eps);
        }
    }
}

TEST_CASE("approximation profiles") {
    const ApproxProfile r = approx_profile(scalar("5/12"), 10);
    for (const auto& lv : r.levels) {
        if (lv.T > 12) CHECK(lv.eps == 0.0);
        else CHECK(lv.eps > 0.0);
    }
    for (const auto& lv : approx_profile(scalar("golden"), 20).levels) CHECK(lv.eps > 0.4);

    // [0; 2, 4, 16, 256, 65536, 2^32, ...]: for q_k < T <= q_{k+1} the minimum is
    // |q_k a - p_k| = 1 / (a_{k+1}' q_k + q_{k-1}), a' the complete quotient.
    const ApproxProfile se = approx_profile(scalar("superexp"), 24);
    std::vector<long double> pq{1, 2};
    const std::vector<long double> partial{2, 4, 16, 256, 65536, 4294967296.0L, 18446744073709551616.0L};
    for (std::size_t k = 1; k < 5; ++k) pq.push_back(partial[k] * pq[k] + pq[k - 1]);
    std::vector<long double> complete(partial.size());
    complete.back() = partial.back();
    for (std::size_t j = partial.size() - 1; j-- > 0;) complete[j] = partial[j] + 1.0L / complete[j + 1];
    double smallest = 1;
    for (const auto& lv : se.levels) {
        std::size_t k = 0;
        while (pq[k + 1] < static_cast<long double>(lv.T)) ++k;
        const long double prev = k == 0 ? 0.0L : pq[k - 1];
        const long double res = 1.0L / (complete[k] * pq[k] + prev);
        CHECK(rel_err(lv.eps, static_cast<double>(res * lv.T)) <= 1e-9);
        if (lv.ell > 12) smallest = std::min(smallest, lv.eps);
    }
    CHECK(smallest < 1e-3);
}

TEST_CASE("classification on average") {
    for (const char* text : {"1/2", "3/7", "-11/5"}) {
        const OnAverageVerdict v = classify_on_average(scalar(text), 0.1, 20);
        CHECK(v.singular_on_average);
        CHECK(v.trailing_fraction == 1.0);
        CHECK(v.fraction_curve.size() == 20);
    }
    const TargetMatrix col(Dimensions(2, 1), {parse_entry("1/3"), parse_entry("2/5")});
    CHECK(classify_on_average(col, 0.1, 12).trailing_fraction == 1.0);

    for (const char* text : {"golden", "sqrt2"}) {
        const OnAverageVerdict v = classify_on_average(scalar(text), 0.1, 20);
        CHECK(v.fraction == 0.0);
        CHECK_FALSE(v.singular_on_average);
    }

    const OnAverageVerdict l = classify_on_average(scalar("liouville(3)"), 0.1, 24);
    CHECK(l.trailing_fraction >= 0.9);
    CHECK(l.singular_on_average);

    // Three levels below each new convergent miss: 9 of the last 12.
    const OnAverageVerdict se = classify_on_average(scalar("superexp"), 0.1, 24);
    CHECK(se.trailing_fraction == doctest::Approx(0.75));
    CHECK_THROWS_AS(classify_on_average(scalar("1/2"), 0.0, 10), ValidationError);
}

TEST_CASE("first minimum along the flow") {
    std::vector<double> grid;
    for (int k = 0; k <= 40; ++k) grid.push_back(0.5 * k);

    const std::vector<double> zero = flow_first_minimum(scalar("0"), grid);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(rel_err(zero[k], std::exp(-grid[k])) <= 1e-12);

    const std::vector<double> half = flow_first_minimum(scalar("1/2"), grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
        if (grid[k] >= 1) CHECK(half[k] <= 2 * std::exp(-grid[k]) * (1 + 1e-12));

    // Badly approximable: |q (q a - p)| stays near 1/sqrt5, so lambda_1 stays away from 0.
    const std::vector<double> gold = flow_first_minimum(scalar("golden"), grid);
    for (double l : gold) CHECK(l > 0.5);

    // Small t: agrees with the plain floating-point lattice.
    for (const char* text : {"golden", "3/7", "sqrt2"}) {
        const TargetMatrix s = scalar(text);
        const std::vector<double> small{0.0, 0.5, 1.0, 2.0};
        const std::vector<double> got = flow_first_minimum(s, small);
        for (std::size_t k = 0; k < small.size(); ++k) {
            const Dimensions dims(1, 1);
            const Lattice x = act(diagonal_flow(dims, small[k]) * horospherical(dims, s.to_matrix()), Lattice::standard(dims));
            CHECK(rel_err(got[k], minkowski_minima(x, 1).lambda[0]) <= 1e-9);
        }
    }

    // m = 2, n = 1 rational column: lambda_1 <= D e^{-t}.
    const TargetMatrix col(Dimensions(2, 1), {parse_entry("1/3"), parse_entry("2/5")});
    const std::vector<double> lc = flow_first_minimum(col, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(lc[k] <= 15 * std::exp(-grid[k]) * (1 + 1e-12));
}

TEST_CASE("dani cross-check flags") {
    std::vector<double> grid;
    for (int k = 0; k <= 20; ++k) grid.push_back(k);
    for (const char* text : {"1/2", "3/7"}) {
        const DaniReport r = dani_crosscheck(scalar(text), grid, 20);
        CHECK(r.approx_flag);
        CHECK(r.flow_flag);
        CHECK(r.consistent);
    }
    for (const char* text : {"golden", "sqrt2", "liouville(3)", "superexp"}) {
        const DaniReport r = dani_crosscheck(scalar(text), grid, 20);
        CHECK_FALSE(r.approx_flag);
        CHECK_FALSE(r.flow_flag);
        CHECK(r.consistent);
        CHECK(r.points.size() == grid.size());
    }
    const DaniReport l = dani_crosscheck(scalar("liouville(3)"), grid, 20);
    REQUIRE(l.rank_correlation.has_value());
    CHECK(*l.rank_correlation > 0.0);
}
