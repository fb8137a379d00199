#include "latflow/mc.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

namespace latflow {

namespace {

std::atomic<int> g_threads{1};

RngSpec substream(const RngSpec& rng, std::uint64_t k) { return {rng.seed, rng.stream * 64 + k}; }

double mat_norm(const Matrix& s) { return s.norm(); }

} // namespace

Engine make_engine(const RngSpec& rng, std::uint64_t chunk) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(rng.seed), hi(rng.seed), lo(rng.stream), hi(rng.stream), lo(chunk), hi(chunk)};
    return Engine(seq);
}

void set_worker_threads(int threads) { g_threads = std::max(1, threads); }
int worker_threads() { return g_threads; }

void RunningStats::merge(const RunningStats& o) {
    if (o.n == 0) return;
    if (n == 0) {
        *this = o;
        return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double delta = o.mean - mean;
    const double total = na + nb;
    mean += delta * nb / total;
    m2 += o.m2 + delta * delta * na * nb / total;
    n += o.n;
}

EstimatorResult to_result(const RunningStats& s, double elapsed) {
    EstimatorResult r;
    r.mean = s.mean;
    r.n = s.n;
    r.std_error = s.n > 1 ? std::sqrt(s.variance() / static_cast<double>(s.n)) : 0.0;
    r.elapsed = elapsed;
    return r;
}

nlohmann::json EstimatorResult::to_json() const { return {{"mean", mean}, {"stderr", std_error}, {"n", n}}; }

Matrix sample_gaussian(int rows, int cols, Engine& eng, double sigma) {
    std::normal_distribution<double> g(0.0, sigma);
    Matrix out(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) out(i, j) = g(eng);
    return out;
}

Matrix sample_haar_rotation(int d, Engine& eng) {
    if (d < 2) throw ValidationError("sample_haar_rotation: d must be at least 2");
    const Eigen::HouseholderQR<Matrix> qr(sample_gaussian(d, d, eng));
    Matrix q = qr.householderQ();
    const auto& r = qr.matrixQR();
    for (int j = 0; j < d; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    if (q.determinant() < 0) q.col(0) *= -1.0;
    return q;
}

EstimatorResult estimate_K_integral(const Dimensions& dims, const Decomposable& v, double t, double beta,
                                    std::uint64_t n, const RngSpec& rng) {
    const int d = dims.d();
    const int i = v.grade();
    if (v.d() != d) throw ValidationError("estimate_K_integral: dimension mismatch");
    if (i < 1 || i >= d) throw ValidationError("estimate_K_integral: grade must be in 1..d-1");
    // For fixed t the integrand is bounded; the exponent of the flow itself is
    // admitted even where it reaches d - i + 1.
    const double bi = beta_exponents(dims)[static_cast<std::size_t>(i - 1)];
    if (!(beta >= 0) || (!(beta < d - i + 1) && beta > bi * (1 + 1e-12)))
        throw ValidationError("estimate_K_integral: need 0 <= beta < d - i + 1 or beta = beta_i");
    const Matrix g = diagonal_flow(dims, t);
    const Matrix& f = v.factors();
    return monte_carlo1(n, rng, [&](Engine& e) {
        const Matrix k = sample_haar_rotation(d, e);
        return std::pow(wedge_norm(g * k * f), -beta);
    });
}

EstimatorResult estimate_gaussian_wedge_moment(const Dimensions& dims, int i, double t, double beta,
                                               std::uint64_t n, const RngSpec& rng) {
    const int d = dims.d();
    if (i < 1 || i >= d) throw ValidationError("estimate_gaussian_wedge_moment: i must be in 1..d-1");
    const double bi = beta_exponents(dims)[static_cast<std::size_t>(i - 1)];
    if (!(beta >= 0) || beta > bi * (1 + 1e-12))
        throw ValidationError("estimate_gaussian_wedge_moment: beta must lie in [0, beta_i]");
    const Matrix g = diagonal_flow(dims, t);
    return monte_carlo1(n, rng, [&](Engine& e) {
        if (beta == 0.0) return 1.0;
        return std::pow(wedge_norm(g * sample_gaussian(d, i, e)), -beta);
    });
}

nlohmann::json TailReport::to_json() const {
    nlohmann::json b = nlohmann::json::array();
    for (const auto& bin : bins) b.push_back({{"ell", bin.ell}, {"count", bin.count}, {"probability", bin.probability}});
    nlohmann::json tm = nlohmann::json::array();
    for (const auto& m : truncated) tm.push_back({{"kappa", m.kappa}, {"value", m.value.to_json()}});
    return {{"d", d},
            {"i", i},
            {"n", n},
            {"bins", b},
            {"fitted_bins", fitted_bins},
            {"slope", slope},
            {"slope_stderr", slope_std_error},
            {"asymptotic_slope", asymptotic_slope ? nlohmann::json(*asymptotic_slope) : nlohmann::json(nullptr)},
            {"truncated_moments", tm},
            {"origin_slope", origin_slope},
            {"max_relative_deviation", max_relative_deviation}};
}

namespace {

// Weighted least squares of log probability against ell; Var(log count) ~ 1/count.
double fit_log_counts(const std::vector<std::uint64_t>& counts, const std::vector<int>& ells, std::uint64_t n,
                      double* std_error) {
    double sw = 0, sx = 0, sy = 0;
    for (int ell : ells) {
        const double w = static_cast<double>(counts[static_cast<std::size_t>(ell)]);
        sw += w;
        sx += w * ell;
        sy += w * std::log(w / static_cast<double>(n));
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0;
    for (int ell : ells) {
        const double w = static_cast<double>(counts[static_cast<std::size_t>(ell)]);
        sxx += w * (ell - mx) * (ell - mx);
        sxy += w * (ell - mx) * (std::log(w / static_cast<double>(n)) - my);
    }
    if (std_error) *std_error = std::sqrt(1.0 / sxx);
    return sxy / sxx;
}

} // namespace

TailReport tail_moment_diagnostics(int d, int i, std::uint64_t n, const RngSpec& rng,
                                   const std::vector<double>& kappas) {
    if (d < 2 || i < 1 || i >= d) throw ValidationError("tail_moment_diagnostics: need 1 <= i < d");
    const double power = d - i + 1;
    TailReport rep;
    rep.d = d;
    rep.i = i;
    rep.n = n;
    std::vector<std::uint64_t> counts;
    std::vector<RunningStats> moments(kappas.size());
    for (std::uint64_t c = 0; c < kChunks; ++c) {
        Engine eng = make_engine(rng, c);
        std::vector<RunningStats> local(kappas.size());
        const std::uint64_t count = n / kChunks + (c < n % kChunks ? 1 : 0);
        for (std::uint64_t k = 0; k < count; ++k) {
            const double w = wedge_norm(sample_gaussian(d, i, eng));
            const double lw = -std::log(w);
            if (lw >= 1.0) {
                const auto ell = static_cast<std::size_t>(std::floor(lw));
                if (counts.size() <= ell) counts.resize(ell + 1, 0);
                ++counts[ell];
            }
            for (std::size_t q = 0; q < kappas.size(); ++q) local[q].add(lw < kappas[q] ? std::pow(w, -power) : 0.0);
        }
        for (std::size_t q = 0; q < kappas.size(); ++q) moments[q].merge(local[q]);
    }
    for (std::size_t ell = 1; ell < counts.size(); ++ell) {
        if (counts[ell] == 0) continue;
        rep.bins.push_back({static_cast<int>(ell), counts[ell], static_cast<double>(counts[ell]) / static_cast<double>(n)});
    }
    for (std::size_t ell = 1; ell < counts.size() && counts[ell] >= kMinTailCount; ++ell)
        rep.fitted_bins.push_back(static_cast<int>(ell));
    if (rep.fitted_bins.size() < 2) {
        throw StatisticalError("tail_moment_diagnostics: fewer than two bins with " + std::to_string(kMinTailCount) +
                               " counts; increase n (got " + std::to_string(n) + ")");
    }
    rep.slope = fit_log_counts(counts, rep.fitted_bins, n, &rep.slope_std_error);
    std::vector<int> tail_bins;
    for (int ell : rep.fitted_bins)
        if (ell >= 2) tail_bins.push_back(ell);
    if (tail_bins.size() >= 2) rep.asymptotic_slope = fit_log_counts(counts, tail_bins, n, nullptr);

    double kk = 0, kv = 0;
    for (std::size_t q = 0; q < kappas.size(); ++q) {
        rep.truncated.push_back({kappas[q], to_result(moments[q], 0.0)});
        kk += kappas[q] * kappas[q];
        kv += kappas[q] * moments[q].mean;
    }
    if (kk > 0) {
        rep.origin_slope = kv / kk;
        for (const auto& m : rep.truncated) {
            const double fit = rep.origin_slope * m.kappa;
            rep.max_relative_deviation = std::max(rep.max_relative_deviation, std::abs(m.value.mean - fit) / fit);
        }
    }
    return rep;
}

nlohmann::json UKComparison::to_json() const {
    return {{"lhs", lhs.to_json()}, {"rhs", rhs.to_json()}, {"ratio", ratio}, {"ratio_stderr", ratio_std_error}};
}

UKComparison compare_U_K_integrals(const Dimensions& dims, const Decomposable& w, double t, double beta,
                                   const Matrix& s0, std::uint64_t n, const RngSpec& rng) {
    if (s0.rows() != dims.m() || s0.cols() != dims.n()) throw ValidationError("compare_U_K_integrals: s0 shape");
    if (w.d() != dims.d()) throw ValidationError("compare_U_K_integrals: dimension mismatch");
    const Matrix g = diagonal_flow(dims, t);
    UKComparison out;
    out.lhs = monte_carlo1(n, substream(rng, 0), [&](Engine& e) {
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        Matrix s = s0;
        for (int a = 0; a < dims.m(); ++a)
            for (int b = 0; b < dims.n(); ++b) s(a, b) += u(e);
        if (beta == 0.0) return 1.0;
        return std::pow(wedge_norm(g * horospherical(dims, s) * w.factors()), -beta);
    });
    if (beta == 0.0) {
        out.rhs = {1.0, 0.0, n, 0.0};
    } else {
        out.rhs = estimate_K_integral(dims, w, t, beta, n, substream(rng, 1));
    }
    const double scale = std::pow(1.0 + mat_norm(s0), beta);
    out.ratio = out.lhs.mean / (scale * out.rhs.mean);
    const double rl = out.lhs.mean > 0 ? out.lhs.std_error / out.lhs.mean : 0.0;
    const double rr = out.rhs.mean > 0 ? out.rhs.std_error / out.rhs.mean : 0.0;
    out.ratio_std_error = out.ratio * std::sqrt(rl * rl + rr * rr);
    return out;
}

std::string to_string(CheckStatus s) {
    switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::precondition: return "precondition";
    }
    return "unknown";
}

nlohmann::json CheckReport::to_json() const {
    return {{"estimator", estimator},
            {"params", params},
            {"mean", estimate.mean},
            {"stderr", estimate.std_error},
            {"n", estimate.n},
            {"bound", bound},
            {"pass", pass()},
            {"status", to_string(status)},
            {"seed", rng.seed},
            {"stream", rng.stream},
            {"details", details}};
}

namespace {

Lattice pushed(const Dimensions& dims, double t, const Matrix& s, const Lattice& x) {
    return act(diagonal_flow(dims, t) * horospherical(dims, s), x);
}

} // namespace

CheckStatus judge_inequality(const EstimatorResult& est, double bound) {
    return est.mean <= bound + 3.0 * est.std_error ? CheckStatus::pass : CheckStatus::fail;
}

double alpha_neighbor_term(const AlphaProfile& p, int i, double beta_i) {
    const int d = static_cast<int>(p.values.size()) - 1;
    double best = 0.0;
    for (int j = 1; j <= std::min(i, d - i); ++j) {
        const double v = std::sqrt(p.values[static_cast<std::size_t>(i + j)] * p.values[static_cast<std::size_t>(i - j)]);
        best = std::max(best, std::pow(v, beta_i));
    }
    return best;
}

CheckReport verify_alpha_contraction(const Lattice& x, int i, double t, double omega, double c0,
                                     std::uint64_t n, const RngSpec& rng) {
    const Dimensions& dims = x.dims();
    const int d = dims.d();
    if (i < 1 || i >= d) throw ValidationError("verify_alpha_contraction: i must be in 1..d-1");
    if (!(omega > 0)) omega = wedge_operator_norm_max(dims, t);
    const double bi = beta_exponents(dims)[static_cast<std::size_t>(i - 1)];
    const AlphaProfile prof = alpha_profile(x);
    CheckReport rep;
    rep.estimator = "alpha_contraction";
    rep.params = {{"m", dims.m()}, {"n", dims.n()}, {"i", i}, {"t", t}, {"omega", omega}, {"c0", c0}, {"samples", n}};
    rep.rng = rng;
    const Lattice xr = reduced_lattice(x);
    rep.estimate = monte_carlo1(n, rng, [&](Engine& e) {
        const Matrix s = sample_gaussian(dims.m(), dims.n(), e);
        return std::pow(alpha(pushed(dims, t, s, xr), i).value, bi);
    });
    const double ai = std::pow(prof.values[static_cast<std::size_t>(i)], bi);
    const double decay = t * std::exp(-dims.mn() * t);
    const double first = c0 * decay * ai;
    const double second = std::pow(omega, 2 * bi) * alpha_neighbor_term(prof, i, bi);
    rep.bound = first + second;
    rep.status = judge_inequality(rep.estimate, rep.bound);
    rep.details = {{"alpha_i", prof.values[static_cast<std::size_t>(i)]},
                   {"first_term", first},
                   {"second_term", second},
                   {"implied_c0", std::max(rep.estimate.mean - second, 0.0) / (decay * ai)}};
    return rep;
}

CheckReport verify_tilde_contraction(const Lattice& x, const HeightFunction& h, double t, double c,
                                     double m_tilde, std::uint64_t n, const RngSpec& rng) {
    const Dimensions& dims = x.dims();
    if (h.d != dims.d()) throw ValidationError("verify_tilde_contraction: height built for another dimension");
    if (t < 1) throw ValidationError("verify_tilde_contraction: t must be at least 1");
    const double ta = tilde_alpha(x, h);
    CheckReport rep;
    rep.estimator = "tilde_contraction";
    rep.params = {{"m", dims.m()}, {"n", dims.n()}, {"t", t}, {"c", c}, {"m_tilde", m_tilde}, {"samples", n}};
    rep.rng = rng;
    rep.bound = c * t * std::exp(-dims.mn() * t) * ta;
    rep.details = {{"tilde_alpha", ta}};
    if (ta <= m_tilde) {
        rep.status = CheckStatus::precondition;
        rep.details["reason"] = "tilde_alpha(x) is not above the threshold";
        return rep;
    }
    const Lattice xr = reduced_lattice(x);
    rep.estimate = monte_carlo1(n, rng, [&](Engine& e) {
        const Matrix s = sample_gaussian(dims.m(), dims.n(), e);
        return tilde_alpha(pushed(dims, t, s, xr), h);
    });
    rep.status = judge_inequality(rep.estimate, rep.bound);
    const double additive = h.a_prime * ta + h.C0;
    rep.details["additive_bound"] = additive;
    rep.details["additive_pass"] = rep.estimate.mean <= additive + 3.0 * rep.estimate.std_error;
    rep.details["implied_c"] = rep.estimate.mean / (t * std::exp(-dims.mn() * t) * ta);
    return rep;
}

nlohmann::json ThresholdEstimate::to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : reports) r.push_back(c.to_json());
    return {{"m_tilde", m_tilde}, {"worst_failure", worst_failure}, {"reports", r}};
}

ThresholdEstimate estimate_threshold(const std::vector<Lattice>& calibration, const HeightFunction& h, double t,
                                     double c, std::uint64_t n, const RngSpec& rng) {
    ThresholdEstimate out;
    double worst = 0.0;
    for (std::size_t k = 0; k < calibration.size(); ++k) {
        CheckReport r = verify_tilde_contraction(calibration[k], h, t, c, 0.0, n, substream(rng, k));
        if (!r.pass()) worst = std::max(worst, r.details["tilde_alpha"].get<double>());
        out.reports.push_back(std::move(r));
    }
    out.worst_failure = worst;
    while (out.m_tilde < worst) out.m_tilde *= 2.0;
    return out;
}

std::vector<Lattice> sample_lattices(const Dimensions& dims, int count, double spread, const RngSpec& rng) {
    const int d = dims.d();
    Engine eng = make_engine(rng, 0);
    std::uniform_real_distribution<double> r(-spread, spread);
    std::uniform_real_distribution<double> sh(-0.5, 0.5);
    std::vector<Lattice> out;
    for (int c = 0; c < count; ++c) {
        const Matrix k = sample_haar_rotation(d, eng);
        Vector logs(d);
        for (int a = 0; a < d; ++a) logs(a) = r(eng);
        logs.array() -= logs.mean();
        Matrix u = Matrix::Identity(d, d);
        for (int a = 0; a < d; ++a)
            for (int b = a + 1; b < d; ++b) u(a, b) = sh(eng);
        // Reduce before normalizing: the raw product is too ill-conditioned at
        // large spread for its determinant to be accurate to 1e-9.
        Matrix b = lll_reduce(k * logs.array().exp().matrix().asDiagonal() * u).basis;
        if (b.determinant() < 0) b.col(0) *= -1.0;
        b /= std::pow(b.determinant(), 1.0 / d);
        out.emplace_back(dims, std::move(b));
    }
    return out;
}

double iterate_variance(const Dimensions& dims, double t, int N) {
    double s = 0.0;
    for (int k = 1; k <= N; ++k) s += std::exp(-2.0 * (k - 1) * dims.d() * t);
    return s;
}

double ball_density_bound(const Dimensions& dims, double sigma2) {
    return std::pow(2 * std::numbers::pi * sigma2, dims.mn() / 2.0) * std::exp(1.0 / (2 * sigma2));
}

double iterate_default_constant(const Dimensions& dims) {
    return std::pow(4 * std::numbers::pi, dims.mn() / 2.0) * std::exp(0.5);
}

CheckReport iterate_contraction(const Lattice& x, const HeightFunction& h, double t, int N, double M, double c,
                                double constant, std::uint64_t n, const RngSpec& rng) {
    const Dimensions& dims = x.dims();
    if (t < 1) throw ValidationError("iterate_contraction: t must be at least 1");
    if (N < 1 || N > 4) throw ValidationError("iterate_contraction: N must be in 1..4");
    if (h.d != dims.d()) throw ValidationError("iterate_contraction: height built for another dimension");
    const double sigma2 = iterate_variance(dims, t, N);
    const double ta = tilde_alpha(x, h);
    CheckReport rep;
    rep.estimator = "iterate_contraction";
    rep.params = {{"m", dims.m()}, {"n", dims.n()}, {"t", t},        {"N", N},
                  {"M", M},        {"c", c},        {"constant", constant}, {"samples", n}};
    rep.rng = rng;
    const double norm_const = std::pow(2 * std::numbers::pi * sigma2, dims.mn() / 2.0);
    std::vector<Matrix> steps(static_cast<std::size_t>(N));
    const Lattice xr = reduced_lattice(x);
    const auto est = monte_carlo<2>(n, rng, [&](Engine& e) {
        for (auto& sk : steps) sk = sample_gaussian(dims.m(), dims.n(), e);
        const Matrix s = phi_compose(dims, t, steps);
        const double r2 = s.squaredNorm();
        if (r2 >= 1.0) return std::array<double, 2>{0.0, 0.0};
        const double weight = norm_const * std::exp(r2 / (2 * sigma2));
        bool inside = true;
        for (int l = 1; l < N && inside; ++l) inside = tilde_alpha(pushed(dims, l * t, s, xr), h) > M;
        const double value = weight * tilde_alpha(pushed(dims, N * t, s, xr), h);
        return std::array<double, 2>{inside ? value : 0.0, value};
    });
    rep.estimate = est[0];
    rep.bound = constant * std::pow(c * t * std::exp(-dims.mn() * t), N) * ta;
    rep.status = judge_inequality(rep.estimate, rep.bound);
    rep.details = {{"sigma2", sigma2}, {"tilde_alpha", ta}, {"unrestricted", est[1].to_json()}};
    return rep;
}

} // namespace latflow
