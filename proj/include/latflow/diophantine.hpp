#pragma once

#include "latflow/lattice.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace latflow {

/// A real number held exactly enough for approximation searches.
/// rational: num/den + tail, where tail is a tiny correction (the remainder
/// of a truncated series or continued fraction); zero for true rationals.
/// quadratic: (a + b sqrt(D)) / c with D > 0 not a square.
struct ExactEntry {
    enum class Kind { rational, quadratic };
    Kind kind = Kind::rational;
    std::int64_t num = 0;
    std::int64_t den = 1;
    long double tail = 0.0L;
    std::int64_t qa = 0, qb = 0, qd = 0, qc = 1;
    std::string label;

    static ExactEntry rational(std::int64_t num, std::int64_t den);
    /// Rounded to the nearest multiple of 1e-12.
    static ExactEntry from_double(double x);
    static ExactEntry quadratic(std::int64_t a, std::int64_t b, std::int64_t D, std::int64_t c);
    /// sum_{k>=1} b^{-k!}
    static ExactEntry liouville(int base);
    /// Continued fraction [0; a_1, a_2, ...] with a_{k+1} = 2^{2^k}.
    static ExactEntry superexponential();

    bool exact_rational() const { return kind == Kind::rational && tail == 0.0L; }
    long double value() const;
};

/// "p/q", a decimal string, or one of golden, sqrt2, liouville(b), superexp.
ExactEntry parse_entry(const std::string& text);

inline constexpr std::int64_t kMaxRowDenominator = 1'000'000'000'000'000'000;

/// m x n target s, entries row-major.
class TargetMatrix {
public:
    TargetMatrix(Dimensions dims, std::vector<ExactEntry> entries);
    static TargetMatrix scalar(const ExactEntry& e) { return TargetMatrix(Dimensions(1, 1), {e}); }

    const Dimensions& dims() const { return dims_; }
    const ExactEntry& entry(int r, int c) const { return entries_[static_cast<std::size_t>(r * dims_.n() + c)]; }
    Matrix to_matrix() const;
    bool rational() const;
    /// Least common denominator of all entries (rational targets only).
    std::int64_t common_denominator() const;

    /// (s q)_r + a.
    long double affine(int r, const IntVector& q, std::int64_t a) const;
    /// Nearest integer p to (s q)_r and the residual (s q)_r - p.
    std::pair<std::int64_t, long double> nearest(int r, const IntVector& q) const;

    nlohmann::json to_json() const;

private:
    Dimensions dims_;
    std::vector<ExactEntry> entries_;
    std::vector<std::int64_t> row_den_;
};

inline constexpr double kSearchBudget = 1e8;

struct ApproxLevel {
    int ell = 0;
    std::int64_t T = 0;
    double eps = 0.0; // ||s q - p|| T^{n/m}
    IntVector q;
    IntVector p;
};

/// Minimizes ||s q - p|| over 0 < ||q|| < T, p nearest to s q. Euclidean norms.
/// Throws ResourceError when T^n > kSearchBudget.
ApproxLevel best_approximation(const TargetMatrix& s, std::int64_t T);

struct ApproxProfile {
    std::vector<ApproxLevel> levels; // ell = 1..ell_max, T = 2^ell
    nlohmann::json to_json() const;
    void write_csv(std::ostream& out) const;
};

ApproxProfile approx_profile(const TargetMatrix& s, int ell_max);

inline constexpr double kOnAverageTolerance = 0.1;

struct OnAverageVerdict {
    double epsilon = 0.0;
    int N = 0;
    double fraction = 0.0;          // over levels 1..N
    double trailing_fraction = 0.0; // over levels N/2 < ell <= N
    bool singular_on_average = false;
    std::vector<double> fraction_curve; // fraction over 1..k for k = 1..N
    ApproxProfile profile;

    nlohmann::json to_json() const;
};

OnAverageVerdict classify_on_average(const TargetMatrix& s, double epsilon, int ell_max);

struct DaniPoint {
    double t;
    double lambda1;
    int ell;    // level with 2^ell closest below e^{mt}
    double eps; // profile value at that level
};

struct DaniReport {
    std::vector<DaniPoint> points;
    ApproxProfile profile;
    /// eps vanishes at the top level: some 0 < ||q|| < 2^ell_max has s q integral.
    bool approx_flag = false;
    /// lambda_1(g_t u_s Z^d) <= 2^ell_max e^{-min(m,n) t} on the whole grid.
    bool flow_flag = false;
    bool consistent = false;
    /// Spearman correlation of -log lambda_1 and -log eps over points with eps > 0.
    std::optional<double> rank_correlation;

    nlohmann::json to_json() const;
};

/// lambda_1(g_t u_s Z^d) over t_grid next to the approximation profile.
DaniReport dani_crosscheck(const TargetMatrix& s, std::vector<double> t_grid, int ell_max);

/// lambda_1 of g_t u_s Z^d along a sorted grid, with the basis carried in exact
/// integer coordinates so that cancellation in s q - p never hits floating point.
std::vector<double> flow_first_minimum(const TargetMatrix& s, const std::vector<double>& t_grid);

} // namespace latflow
