#include "latflow/diophantine.hpp"

#include "latflow/heights.hpp"
#include "latflow/mc.hpp"
#include "latflow/reduction.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <regex>
#include <sstream>
#include <thread>

namespace latflow {

namespace {

using i128 = __int128;

std::int64_t checked_i64(i128 v, const char* what) {
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
        throw ValidationError(std::string(what) + ": value out of range");
    return static_cast<std::int64_t>(v);
}

i128 floor_div(i128 a, i128 b) {
    i128 q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Largest power base^e not exceeding kMaxRowDenominator, or nullopt.
std::optional<i128> bounded_pow(i128 base, int e) {
    i128 r = 1;
    for (int k = 0; k < e; ++k) {
        r *= base;
        if (r > kMaxRowDenominator) return std::nullopt;
    }
    return r;
}

bool is_square(std::int64_t v) {
    if (v < 0) return false;
    auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<long double>(v))));
    for (std::int64_t c = std::max<std::int64_t>(0, r - 2); c <= r + 2; ++c)
        if (c * c == v) return true;
    return false;
}

std::string format_long_double(long double v) {
    std::ostringstream os;
    os << std::setprecision(21) << v;
    return os.str();
}

} // namespace

ExactEntry ExactEntry::rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw ValidationError("rational entry: zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const std::int64_t g = std::gcd(num, den);
    ExactEntry e;
    e.num = num / g;
    e.den = den / g;
    if (e.den > kMaxRowDenominator) throw ValidationError("rational entry: denominator too large");
    e.label = std::to_string(e.num) + "/" + std::to_string(e.den);
    return e;
}

ExactEntry ExactEntry::from_double(double x) {
    if (!std::isfinite(x)) throw ValidationError("entry is not finite");
    const long double scaled = static_cast<long double>(x) * 1e12L;
    if (std::fabs(scaled) > 9e18L) throw ValidationError("entry too large to promote to a rational");
    ExactEntry e = rational(std::llroundl(scaled), 1'000'000'000'000);
    return e;
}

ExactEntry ExactEntry::quadratic(std::int64_t a, std::int64_t b, std::int64_t D, std::int64_t c) {
    if (D <= 0 || is_square(D)) throw ValidationError("quadratic entry: D must be a positive non-square");
    if (c == 0 || b == 0) throw ValidationError("quadratic entry: need b != 0 and c != 0");
    ExactEntry e;
    e.kind = Kind::quadratic;
    e.qa = a;
    e.qb = b;
    e.qd = D;
    e.qc = c;
    e.label = "(" + std::to_string(a) + "+" + std::to_string(b) + "*sqrt(" + std::to_string(D) + "))/" +
              std::to_string(c);
    return e;
}

ExactEntry ExactEntry::liouville(int base) {
    if (base < 2) throw ValidationError("liouville: base must be >= 2");
    // Keep the terms whose common denominator base^{K!} fits; the rest go to tail.
    int K = 0;
    int fact = 1; // K!
    while (true) {
        const int next = fact * (K + 1);
        if (next > 64 || !bounded_pow(base, next)) break;
        ++K;
        fact = next;
    }
    if (K == 0) throw ValidationError("liouville: base too large");
    const i128 den = *bounded_pow(base, fact);
    i128 num = 0;
    int f = 1;
    for (int k = 1; k <= K; ++k) {
        f *= k;
        num += *bounded_pow(base, fact - f);
    }
    ExactEntry e = rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
    long double tail = 0.0L;
    long double lf = fact;
    for (int k = K + 1; k <= K + 3; ++k) {
        lf *= k;
        tail += std::pow(static_cast<long double>(base), -lf);
    }
    e.tail = tail;
    e.label = "liouville(" + std::to_string(base) + ")";
    return e;
}

ExactEntry ExactEntry::superexponential() {
    // Convergents p_k/q_k of [0; 2, 4, 16, 256, ...] while q_k fits.
    auto a = [](int k) -> long double { return std::pow(2.0L, std::pow(2.0L, k - 1)); };
    i128 p_prev = 1, q_prev = 0, p = 0, q = 1;
    int k = 0;
    while (true) {
        const i128 ak = static_cast<i128>(a(k + 1));
        const i128 pn = ak * p + p_prev, qn = ak * q + q_prev;
        if (qn > kMaxRowDenominator) break;
        p_prev = p;
        q_prev = q;
        p = pn;
        q = qn;
        ++k;
    }
    ExactEntry e = rational(static_cast<std::int64_t>(p), static_cast<std::int64_t>(q));
    // alpha - p_k/q_k = (-1)^k / (q_k (alpha_{k+1} q_k + q_{k-1})), alpha_{k+1} = a_{k+1} + 1/a_{k+2} + ...
    const long double complete = a(k + 1) + 1.0L / a(k + 2);
    const long double lq = static_cast<long double>(q);
    e.tail = (k % 2 == 0 ? 1.0L : -1.0L) / (lq * (complete * lq + static_cast<long double>(q_prev)));
    e.label = "superexp";
    return e;
}

long double ExactEntry::value() const {
    if (kind == Kind::quadratic)
        return (static_cast<long double>(qa) + static_cast<long double>(qb) * std::sqrt(static_cast<long double>(qd))) /
               static_cast<long double>(qc);
    return static_cast<long double>(num) / static_cast<long double>(den) + tail;
}

ExactEntry parse_entry(const std::string& raw) {
    std::string text;
    for (char ch : raw)
        if (!std::isspace(static_cast<unsigned char>(ch))) text += static_cast<char>(std::tolower(ch));
    if (text == "golden") {
        ExactEntry e = ExactEntry::quadratic(-1, 1, 5, 2);
        e.label = "golden";
        return e;
    }
    if (text == "sqrt2") {
        ExactEntry e = ExactEntry::quadratic(0, 1, 2, 1);
        e.label = "sqrt2";
        return e;
    }
    if (text == "superexp") return ExactEntry::superexponential();
    static const std::regex liou(R"(liouville\((\d+)\))");
    static const std::regex frac(R"(([+-]?\d+)/(\d+))");
    static const std::regex dec(R"(([+-]?)(\d+)(?:\.(\d*))?)");
    std::smatch mt;
    auto to_i64 = [&](const std::string& s) {
        std::int64_t v = 0;
        const char* b = s.data() + (s.starts_with('+') ? 1 : 0);
        auto [ptr, ec] = std::from_chars(b, s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("bad integer in entry '" + raw + "'");
        return v;
    };
    if (std::regex_match(text, mt, liou)) {
        const std::int64_t b = to_i64(mt[1]);
        if (b > 1'000'000) throw ValidationError("liouville: base too large");
        return ExactEntry::liouville(static_cast<int>(b));
    }
    if (std::regex_match(text, mt, frac)) {
        const std::int64_t den = to_i64(mt[2]);
        if (den <= 0 || den > 1'000'000'000'000) throw ValidationError("entry '" + raw + "': denominator must be in [1, 1e12]");
        return ExactEntry::rational(to_i64(mt[1]), den);
    }
    if (std::regex_match(text, mt, dec) && mt[3].str().size() <= 12 && mt[2].str().size() <= 6) {
        const std::string digits = mt[2].str() + mt[3].str();
        std::int64_t den = 1;
        for (std::size_t k = 0; k < mt[3].str().size(); ++k) den *= 10;
        std::int64_t num = to_i64(digits);
        if (mt[1] == "-") num = -num;
        return ExactEntry::rational(num, den);
    }
    double x = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw ValidationError("cannot parse entry '" + raw + "'");
    ExactEntry e = ExactEntry::from_double(x);
    e.label = raw + "~" + e.label;
    return e;
}

TargetMatrix::TargetMatrix(Dimensions dims, std::vector<ExactEntry> entries)
    : dims_(dims), entries_(std::move(entries)) {
    if (entries_.size() != static_cast<std::size_t>(dims_.mn()))
        throw ValidationError("target matrix: expected m*n entries");
    for (const auto& e : entries_)
        if (e.kind == ExactEntry::Kind::quadratic && dims_.mn() != 1)
            throw ValidationError("quadratic-irrational entries are supported for m = n = 1 only");
    row_den_.assign(static_cast<std::size_t>(dims_.m()), 1);
    for (int r = 0; r < dims_.m(); ++r) {
        i128 l = 1;
        for (int c = 0; c < dims_.n(); ++c) {
            const ExactEntry& e = entry(r, c);
            if (e.kind != ExactEntry::Kind::rational) continue;
            l = l / std::gcd(static_cast<std::int64_t>(l), e.den) * e.den;
            if (l > kMaxRowDenominator) throw ValidationError("target matrix: row denominator exceeds 1e18");
        }
        row_den_[static_cast<std::size_t>(r)] = static_cast<std::int64_t>(l);
    }
}

Matrix TargetMatrix::to_matrix() const {
    Matrix s(dims_.m(), dims_.n());
    for (int r = 0; r < dims_.m(); ++r)
        for (int c = 0; c < dims_.n(); ++c) s(r, c) = static_cast<double>(entry(r, c).value());
    return s;
}

bool TargetMatrix::rational() const {
    return std::all_of(entries_.begin(), entries_.end(), [](const ExactEntry& e) { return e.exact_rational(); });
}

std::int64_t TargetMatrix::common_denominator() const {
    if (!rational()) throw ValidationError("common_denominator: target is not rational");
    i128 l = 1;
    for (const auto& e : entries_) {
        l = l / std::gcd(static_cast<std::int64_t>(l), e.den) * e.den;
        if (l > kMaxRowDenominator) throw ValidationError("common denominator exceeds 1e18");
    }
    return static_cast<std::int64_t>(l);
}

long double TargetMatrix::affine(int r, const IntVector& q, std::int64_t a) const {
    const ExactEntry& e0 = entry(r, 0);
    if (e0.kind == ExactEntry::Kind::quadratic) {
        // (u sqrt(D) + v) / c without cancellation: use the conjugate when signs differ.
        const i128 u = static_cast<i128>(e0.qb) * q(0);
        const i128 v = static_cast<i128>(e0.qa) * q(0) + static_cast<i128>(a) * e0.qc;
        const long double root = std::sqrt(static_cast<long double>(e0.qd));
        long double w;
        if (u == 0 || v == 0 || (u > 0) == (v > 0)) {
            w = static_cast<long double>(u) * root + static_cast<long double>(v);
        } else {
            const i128 norm = u * u * e0.qd - v * v;
            w = static_cast<long double>(norm) / (static_cast<long double>(u) * root - static_cast<long double>(v));
        }
        return w / static_cast<long double>(e0.qc);
    }
    const std::int64_t L = row_den_[static_cast<std::size_t>(r)];
    i128 N = static_cast<i128>(a) * L;
    long double tail = 0.0L;
    for (int c = 0; c < dims_.n(); ++c) {
        const ExactEntry& e = entry(r, c);
        N += static_cast<i128>(e.num) * (L / e.den) * q(c);
        tail += e.tail * static_cast<long double>(q(c));
    }
    return static_cast<long double>(N) / static_cast<long double>(L) + tail;
}

std::pair<std::int64_t, long double> TargetMatrix::nearest(int r, const IntVector& q) const {
    const ExactEntry& e0 = entry(r, 0);
    if (e0.kind == ExactEntry::Kind::quadratic) {
        const std::int64_t p0 = std::llroundl(e0.value() * static_cast<long double>(q(0)));
        std::int64_t best_p = p0;
        long double best = affine(r, q, -p0);
        if (std::fabs(best) < 0.5L - 1e-9L) return {best_p, best};
        for (std::int64_t p : {p0 - 1, p0 + 1}) {
            const long double v = affine(r, q, -p);
            if (std::fabs(v) < std::fabs(best)) {
                best = v;
                best_p = p;
            }
        }
        return {best_p, best};
    }
    const std::int64_t L = row_den_[static_cast<std::size_t>(r)];
    i128 N = 0;
    long double tail = 0.0L;
    for (int c = 0; c < dims_.n(); ++c) {
        const ExactEntry& e = entry(r, c);
        N += static_cast<i128>(e.num) * (L / e.den) * q(c);
        tail += e.tail * static_cast<long double>(q(c));
    }
    const i128 p = floor_div(2 * N + L, 2 * static_cast<i128>(L));
    const long double res = static_cast<long double>(N - p * L) / static_cast<long double>(L) + tail;
    return {checked_i64(p, "nearest"), res};
}

nlohmann::json TargetMatrix::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : entries_) entries.push_back(e.label);
    return {{"m", dims_.m()}, {"n", dims_.n()}, {"entries", entries}};
}

namespace {

struct Candidate {
    long double res2 = 0.0L;
    std::int64_t qn2 = 0;
    IntVector q;
    IntVector p;
    bool set = false;

    // Total order: residual, then |q|, then q compared from the last coordinate.
    bool better_than(const Candidate& o) const {
        if (!o.set) return true;
        if (res2 != o.res2) return res2 < o.res2;
        if (qn2 != o.qn2) return qn2 < o.qn2;
        using R = std::reverse_iterator<const std::int64_t*>;
        return std::lexicographical_compare(R(q.data() + q.size()), R(q.data()), R(o.q.data() + o.q.size()),
                                            R(o.q.data()));
    }
};

void check_budget(const Dimensions& dims, std::int64_t T) {
    if (T < 2) throw ValidationError("best approximation: need T >= 2");
    const long double work = std::pow(static_cast<long double>(T), dims.n());
    if (work > kSearchBudget)
        throw ResourceError("best approximation: T^n = " + format_long_double(work) + " exceeds the search budget 1e8");
}

// Best candidate among q with ||q|| < T_k for each threshold (ascending).
std::vector<ApproxLevel> scan(const TargetMatrix& s, const std::vector<std::int64_t>& thresholds) {
    const int m = s.dims().m(), n = s.dims().n();
    const std::int64_t tmax = thresholds.back();
    check_budget(s.dims(), tmax);
    const std::size_t nb = thresholds.size();
    std::vector<i128> limit(nb);
    for (std::size_t k = 0; k < nb; ++k) limit[k] = static_cast<i128>(thresholds[k]) * thresholds[k];

    const int threads = std::max(1, std::min<int>(worker_threads(), static_cast<int>(tmax)));
    std::vector<std::vector<Candidate>> part(static_cast<std::size_t>(threads), std::vector<Candidate>(nb));

    auto visit = [&](std::vector<Candidate>& buckets, const IntVector& q, std::int64_t qn2) {
        std::size_t b = 0;
        while (b < nb && !(qn2 < limit[b])) ++b;
        if (b == nb) return;
        long double res2 = 0.0L;
        for (int r = 0; r < m; ++r) {
            const long double res = s.nearest(r, q).second;
            res2 += res * res;
        }
        if (buckets[b].set && res2 > buckets[b].res2) return;
        Candidate c;
        c.q = q;
        c.p.resize(m);
        c.qn2 = qn2;
        c.res2 = res2;
        for (int r = 0; r < m; ++r) c.p(r) = s.nearest(r, q).first;
        c.set = true;
        if (c.better_than(buckets[b])) buckets[b] = std::move(c);
    };

    auto work = [&](int w) {
        auto& buckets = part[static_cast<std::size_t>(w)];
        IntVector q = IntVector::Zero(n);
        for (std::int64_t last = w; last < tmax; last += threads) {
            const std::int64_t rest = tmax * tmax - last * last; // need sum of others^2 < rest
            q.setZero();
            q(n - 1) = last;
            if (n == 1) {
                if (last > 0) visit(buckets, q, last * last);
                continue;
            }
            const auto R = static_cast<std::int64_t>(std::floor(std::sqrt(static_cast<long double>(rest - 1))));
            IntVector head = IntVector::Constant(n - 1, -R);
            while (true) {
                std::int64_t h2 = 0;
                for (int k = 0; k < n - 1; ++k) h2 += head(k) * head(k);
                if (h2 < rest) {
                    q.head(n - 1) = head;
                    bool canonical = last > 0;
                    if (!canonical) {
                        int lnz = n - 2;
                        while (lnz >= 0 && head(lnz) == 0) --lnz;
                        canonical = lnz >= 0 && head(lnz) > 0;
                    }
                    if (canonical) visit(buckets, q, h2 + last * last);
                }
                int k = 0;
                while (k < n - 1 && head(k) == R) head(k++) = -R;
                if (k == n - 1) break;
                ++head(k);
            }
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
        for (auto& th : pool) th.join();
    }

    std::vector<ApproxLevel> out(nb);
    Candidate running;
    for (std::size_t b = 0; b < nb; ++b) {
        for (const auto& p : part)
            if (p[b].set && p[b].better_than(running)) running = p[b];
        ApproxLevel& lv = out[b];
        lv.T = thresholds[b];
        lv.q = running.q;
        lv.p = running.p;
        const long double scale = std::pow(static_cast<long double>(lv.T), static_cast<long double>(n) / m);
        lv.eps = static_cast<double>(std::sqrt(running.res2) * scale);
    }
    return out;
}

} // namespace

ApproxLevel best_approximation(const TargetMatrix& s, std::int64_t T) {
    check_budget(s.dims(), T);
    ApproxLevel lv = scan(s, {T})[0];
    lv.ell = (T & (T - 1)) == 0 ? std::countr_zero(static_cast<std::uint64_t>(T)) : 0;
    return lv;
}

ApproxProfile approx_profile(const TargetMatrix& s, int ell_max) {
    if (ell_max < 1 || ell_max > 62) throw ValidationError("approx_profile: ell_max must be in [1, 62]");
    std::vector<std::int64_t> thresholds;
    for (int l = 1; l <= ell_max; ++l) thresholds.push_back(std::int64_t{1} << l);
    ApproxProfile prof;
    prof.levels = scan(s, thresholds);
    for (int l = 1; l <= ell_max; ++l) prof.levels[static_cast<std::size_t>(l - 1)].ell = l;
    return prof;
}

nlohmann::json ApproxProfile::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& lv : levels) {
        arr.push_back({{"ell", lv.ell},
                       {"T", lv.T},
                       {"eps_T", lv.eps},
                       {"q", std::vector<std::int64_t>(lv.q.data(), lv.q.data() + lv.q.size())},
                       {"p", std::vector<std::int64_t>(lv.p.data(), lv.p.data() + lv.p.size())}});
    }
    return arr;
}

void ApproxProfile::write_csv(std::ostream& out) const {
    if (levels.empty()) return;
    out << "ell,T,eps_T";
    for (Eigen::Index k = 0; k < levels.front().q.size(); ++k) out << ",q" << k + 1;
    for (Eigen::Index k = 0; k < levels.front().p.size(); ++k) out << ",p" << k + 1;
    out << '\n';
    for (const auto& lv : levels) {
        out << lv.ell << ',' << lv.T << ',' << std::setprecision(17) << lv.eps;
        for (Eigen::Index k = 0; k < lv.q.size(); ++k) out << ',' << lv.q(k);
        for (Eigen::Index k = 0; k < lv.p.size(); ++k) out << ',' << lv.p(k);
        out << '\n';
    }
}

OnAverageVerdict classify_on_average(const TargetMatrix& s, double epsilon, int ell_max) {
    if (!(epsilon > 0)) throw ValidationError("classify_on_average: epsilon must be positive");
    OnAverageVerdict v;
    v.epsilon = epsilon;
    v.N = ell_max;
    v.profile = approx_profile(s, ell_max);
    int hits = 0, trailing = 0;
    for (int l = 1; l <= ell_max; ++l) {
        const bool hit = v.profile.levels[static_cast<std::size_t>(l - 1)].eps < epsilon;
        hits += hit;
        if (l > ell_max / 2) trailing += hit;
        v.fraction_curve.push_back(static_cast<double>(hits) / l);
    }
    v.fraction = v.fraction_curve.back();
    v.trailing_fraction = static_cast<double>(trailing) / (ell_max - ell_max / 2);
    v.singular_on_average = v.trailing_fraction >= 1.0 - kOnAverageTolerance - 1e-12;
    return v;
}

nlohmann::json OnAverageVerdict::to_json() const {
    return {{"epsilon", epsilon},
            {"N", N},
            {"fraction", fraction},
            {"trailing_fraction", trailing_fraction},
            {"tolerance", kOnAverageTolerance},
            {"verdict", singular_on_average ? "singular-on-average" : "not-singular-on-average"},
            {"fraction_curve", fraction_curve},
            {"profile", profile.to_json()}};
}

std::vector<double> flow_first_minimum(const TargetMatrix& s, const std::vector<double>& t_grid) {
    if (!std::is_sorted(t_grid.begin(), t_grid.end())) throw ValidationError("flow_first_minimum: grid must be sorted");
    const Dimensions& dims = s.dims();
    const int m = dims.m(), n = dims.n(), d = dims.d();
    IntMatrix C = IntMatrix::Identity(d, d);
    // Column (a; q) maps to (e^{nt} (s q + a); e^{-mt} q).
    auto precise = [&](double t) {
        Matrix B(d, d);
        const long double up = std::exp(static_cast<long double>(n) * t);
        const long double down = std::exp(-static_cast<long double>(m) * t);
        for (int j = 0; j < d; ++j) {
            const IntVector q = C.col(j).tail(n);
            for (int r = 0; r < m; ++r) B(r, j) = static_cast<double>(up * s.affine(r, q, C(r, j)));
            for (int k = 0; k < n; ++k) B(m + k, j) = static_cast<double>(down * static_cast<long double>(q(k)));
        }
        return B;
    };
    std::vector<double> out;
    for (double t : t_grid) {
        Matrix B = precise(t);
        for (int iter = 0; iter < 16; ++iter) {
            const ReducedBasis red = lll_reduce(B);
            if (red.transform == IntMatrix::Identity(d, d)) break;
            C = C * red.transform;
            B = precise(t);
        }
        if (integer_determinant(C) < 0) {
            C.col(0) *= -1;
            B = precise(t);
        }
        out.push_back(minkowski_minima(Lattice(dims, B, kDriftTol), 1).lambda[0]);
    }
    return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    if (saa == 0 || sbb == 0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

} // namespace

DaniReport dani_crosscheck(const TargetMatrix& s, std::vector<double> t_grid, int ell_max) {
    if (t_grid.empty()) throw ValidationError("dani_crosscheck: empty grid");
    std::sort(t_grid.begin(), t_grid.end());
    const Dimensions& dims = s.dims();
    DaniReport rep;
    rep.profile = approx_profile(s, ell_max);
    const std::vector<double> lambda = flow_first_minimum(s, t_grid);
    const double scale = std::ldexp(1.0, ell_max);
    const int mn_min = std::min(dims.m(), dims.n());
    rep.flow_flag = true;
    std::vector<double> a, b;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        const double t = t_grid[k];
        const int ell = std::clamp(static_cast<int>(std::floor(dims.m() * t / std::log(2.0))), 1, ell_max);
        const double eps = rep.profile.levels[static_cast<std::size_t>(ell - 1)].eps;
        rep.points.push_back({t, lambda[k], ell, eps});
        if (lambda[k] > scale * std::exp(-mn_min * t) * (1 + 1e-9)) rep.flow_flag = false;
        if (eps > 0) {
            a.push_back(-std::log(lambda[k]));
            b.push_back(-std::log(eps));
        }
    }
    rep.approx_flag = rep.profile.levels.back().eps == 0.0;
    rep.consistent = rep.approx_flag == rep.flow_flag;
    if (a.size() >= 3) rep.rank_correlation = pearson(ranks(a), ranks(b));
    return rep;
}

nlohmann::json DaniReport::to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) pts.push_back({{"t", p.t}, {"lambda1", p.lambda1}, {"ell", p.ell}, {"eps_T", p.eps}});
    nlohmann::json j = {{"points", pts},
                        {"approx_flag", approx_flag},
                        {"flow_flag", flow_flag},
                        {"consistent", consistent},
                        {"profile", profile.to_json()}};
    j["rank_correlation"] = rank_correlation ? nlohmann::json(*rank_correlation) : nlohmann::json(nullptr);
    return j;
}

} // namespace latflow
