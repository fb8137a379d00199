#pragma once

#include "latflow/exterior.hpp"
#include "latflow/heights.hpp"
#include "latflow/lattice.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace latflow {

struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

using Engine = std::mt19937_64;

class StatisticalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Engine for one chunk of a run; (seed, stream, chunk) fixes the sequence.
Engine make_engine(const RngSpec& rng, std::uint64_t chunk);

/// Worker threads used by the estimators. Results do not depend on it.
void set_worker_threads(int threads);
int worker_threads();

struct RunningStats {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    void merge(const RunningStats& o);
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

struct EstimatorResult {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t n = 0;
    double elapsed = 0.0; // seconds; not serialized

    nlohmann::json to_json() const;
};

EstimatorResult to_result(const RunningStats& s, double elapsed);

inline constexpr std::uint64_t kChunks = 16;

/// Runs `sample(engine)` n times split over kChunks fixed chunks and merges the
/// chunks in order. `sample` returns K values that are averaged jointly.
template <std::size_t K, class F>
std::array<EstimatorResult, K> monte_carlo(std::uint64_t n, const RngSpec& rng, F&& sample) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::array<RunningStats, K>> parts(kChunks);
    auto run_chunk = [&](std::uint64_t c) {
        Engine eng = make_engine(rng, c);
        const std::uint64_t count = n / kChunks + (c < n % kChunks ? 1 : 0);
        for (std::uint64_t k = 0; k < count; ++k) {
            const std::array<double, K> v = sample(eng);
            for (std::size_t j = 0; j < K; ++j) parts[c][j].add(v[j]);
        }
    };
    const int threads = std::max(1, std::min<int>(worker_threads(), static_cast<int>(kChunks)));
    if (threads == 1) {
        for (std::uint64_t c = 0; c < kChunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                for (std::uint64_t c = static_cast<std::uint64_t>(w); c < kChunks; c += static_cast<std::uint64_t>(threads))
                    run_chunk(c);
            });
        }
        for (auto& th : pool) th.join();
    }
    std::array<RunningStats, K> total{};
    for (const auto& p : parts)
        for (std::size_t j = 0; j < K; ++j) total[j].merge(p[j]);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::array<EstimatorResult, K> out{};
    for (std::size_t j = 0; j < K; ++j) out[j] = to_result(total[j], elapsed);
    return out;
}

template <class F>
EstimatorResult monte_carlo1(std::uint64_t n, const RngSpec& rng, F&& sample) {
    return monte_carlo<1>(n, rng, [&](Engine& e) { return std::array<double, 1>{sample(e)}; })[0];
}

Matrix sample_haar_rotation(int d, Engine& eng);
Matrix sample_gaussian(int rows, int cols, Engine& eng, double sigma = 1.0);

/// E_k ||g_t k v||^{-beta} over Haar k in SO(d).
EstimatorResult estimate_K_integral(const Dimensions& dims, const Decomposable& v, double t, double beta,
                                    std::uint64_t n, const RngSpec& rng);

/// E ||g_t (x_1 ^ ... ^ x_i)||^{-beta} for i.i.d. standard Gaussian x_k.
EstimatorResult estimate_gaussian_wedge_moment(const Dimensions& dims, int i, double t, double beta,
                                               std::uint64_t n, const RngSpec& rng);

struct TailBin {
    int ell;
    std::uint64_t count;
    double probability;
};

struct TruncatedMoment {
    double kappa;
    EstimatorResult value;
};

struct TailReport {
    int d = 0;
    int i = 0;
    std::uint64_t n = 0;
    std::vector<TailBin> bins;      // every populated bin with ell >= 1
    std::vector<int> fitted_bins;   // ells with >= kMinTailCount counts
    double slope = 0.0;
    double slope_std_error = 0.0;
    // Same fit restricted to ell >= 2, when two such bins qualify; the ell = 1
    // bin carries O(e^{-ell}) corrections to the power law.
    std::optional<double> asymptotic_slope;
    std::vector<TruncatedMoment> truncated;
    double origin_slope = 0.0;      // least-squares line through the origin of the truncated moments
    double max_relative_deviation = 0.0;

    nlohmann::json to_json() const;
};

inline constexpr std::uint64_t kMinTailCount = 50;

/// Histogram of -log ||x_1 ^ ... ^ x_i|| for Gaussian x_k and the truncated
/// moment E(||.||^{-(d-i+1)} 1(||.|| > e^{-kappa})) at each kappa.
/// Throws StatisticalError when fewer than two bins reach kMinTailCount.
TailReport tail_moment_diagnostics(int d, int i, std::uint64_t n, const RngSpec& rng,
                                   const std::vector<double>& kappas = {2, 4, 8});

struct UKComparison {
    EstimatorResult lhs; // int over s0 + (-1/2, 1/2)^{mn} of ||g_t u_s w||^{-beta} ds
    EstimatorResult rhs; // int_K ||g_t k w||^{-beta} dk
    double ratio = 0.0;  // lhs / ((1 + ||s0||)^beta rhs)
    double ratio_std_error = 0.0;

    nlohmann::json to_json() const;
};

UKComparison compare_U_K_integrals(const Dimensions& dims, const Decomposable& w, double t, double beta,
                                   const Matrix& s0, std::uint64_t n, const RngSpec& rng);

enum class CheckStatus { pass, fail, precondition };
std::string to_string(CheckStatus s);

/// Statistical inequality check: pass iff estimate <= bound + 3 stderr.
struct CheckReport {
    std::string estimator;
    nlohmann::json params;
    EstimatorResult estimate;
    double bound = 0.0;
    CheckStatus status = CheckStatus::pass;
    RngSpec rng;
    nlohmann::json details = nlohmann::json::object();

    bool pass() const { return status == CheckStatus::pass; }
    nlohmann::json to_json() const;
};

/// pass iff est.mean <= bound + 3 stderr.
CheckStatus judge_inequality(const EstimatorResult& est, double bound);

/// max over 0 < j <= min(i, d-i) of sqrt(alpha_{i+j} alpha_{i-j})^{beta_i}.
double alpha_neighbor_term(const AlphaProfile& p, int i, double beta_i);

CheckReport verify_alpha_contraction(const Lattice& x, int i, double t, double omega, double c0,
                                     std::uint64_t n, const RngSpec& rng);

CheckReport verify_tilde_contraction(const Lattice& x, const HeightFunction& h, double t, double c,
                                     double m_tilde, std::uint64_t n, const RngSpec& rng);

/// Smallest power of two M such that every calibration lattice with
/// tilde_alpha above M passes verify_tilde_contraction.
struct ThresholdEstimate {
    double m_tilde = 2.0;
    double worst_failure = 0.0; // largest tilde_alpha among failing calibration lattices
    std::vector<CheckReport> reports;
    nlohmann::json to_json() const;
};

ThresholdEstimate estimate_threshold(const std::vector<Lattice>& calibration, const HeightFunction& h, double t,
                                     double c, std::uint64_t n, const RngSpec& rng);

/// k a u Z^d with random rotation k, diagonal a = diag(e^{r_i}) (r_i spread
/// in [-spread, spread], normalized) and unipotent u; deterministic in rng.
std::vector<Lattice> sample_lattices(const Dimensions& dims, int count, double spread, const RngSpec& rng);

/// sum_k e^{-2(k-1)(m+n)t}, k = 1..N.
double iterate_variance(const Dimensions& dims, double t, int N);

/// sup over the unit ball of 1/rho_{sigma^2}: (2 pi sigma^2)^{mn/2} e^{1/(2 sigma^2)}.
double ball_density_bound(const Dimensions& dims, double sigma2);

/// (4 pi)^{mn/2} sqrt(e), which dominates ball_density_bound for sigma^2 in [1, 2].
double iterate_default_constant(const Dimensions& dims);

/// Lebesgue integral over B_1 of 1_{Z_x(M,N-1,t)}(s) tilde_alpha(g_{Nt} u_s x),
/// sampled as s = phi(s_1..s_N) with Gaussian s_k and weighted by
/// 1/rho_{sigma^2}(s). Pass iff <= constant * c^N t^N e^{-mntN} tilde_alpha(x).
CheckReport iterate_contraction(const Lattice& x, const HeightFunction& h, double t, int N, double M, double c,
                                double constant, std::uint64_t n, const RngSpec& rng);

} // namespace latflow
