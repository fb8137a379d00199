#include "latflow/escape.hpp"

#include "latflow/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

namespace latflow {

void EscapeConfig::validate() const {
    if (!(t > 0) || !std::isfinite(t)) throw ValidationError("escape config: t must be positive");
    if (N < 1) throw ValidationError("escape config: N must be >= 1");
    if (!(delta > 0 && delta <= 1)) throw ValidationError("escape config: delta must lie in (0, 1]");
    if (std::isnan(M)) throw ValidationError("escape config: M is NaN");
    if (!(resolution >= 0) || !std::isfinite(resolution)) throw ValidationError("escape config: resolution must be >= 0");
    if (height && height->d != dims.d()) throw ValidationError("escape config: height function has the wrong dimension");
}

double EscapeConfig::cell_side() const {
    return resolution > 0 ? resolution : std::exp(-static_cast<double>(dims.d()) * t * N);
}

HeightFunction EscapeConfig::height_function() const { return height ? *height : default_height(dims, t); }

nlohmann::json EscapeConfig::to_json() const {
    nlohmann::json j = {{"m", dims.m()},
                        {"n", dims.n()},
                        {"t", t},
                        {"N", N},
                        {"delta", delta},
                        {"resolution", cell_side()},
                        {"mc_samples", mc_samples},
                        {"seed", rng.seed},
                        {"stream", rng.stream}};
    j["M"] = std::isinf(M) ? nlohmann::json("inf") : nlohmann::json(M);
    if (height) j["height"] = height->to_json();
    return j;
}

namespace {

// Number of l in 1..N with tilde_alpha(g_{tl} u_s x) > M; x already reduced.
int escape_count(const Lattice& xr, const Matrix& s, const EscapeConfig& cfg, const HeightFunction& h) {
    if (cfg.M == std::numeric_limits<double>::infinity()) return 0;
    if (cfg.M < 2.0) return cfg.N; // tilde_alpha >= 2 everywhere
    const Matrix g = diagonal_flow(cfg.dims, cfg.t);
    Lattice y = reduced_lattice(act(g * horospherical(cfg.dims, s), xr));
    int count = tilde_alpha(y, h) > cfg.M ? 1 : 0;
    for (int l = 2; l <= cfg.N; ++l) {
        y = reduced_lattice(act(g, y));
        if (tilde_alpha(y, h) > cfg.M) ++count;
    }
    return count;
}

bool escapes(int count, const EscapeConfig& cfg) { return count >= cfg.delta * cfg.N - 1e-9; }

} // namespace

double escape_fraction(const Lattice& x0, const Matrix& s, const EscapeConfig& cfg) {
    cfg.validate();
    if (x0.dims() != cfg.dims) throw ValidationError("escape_fraction: lattice dimensions differ from the config");
    const int c = escape_count(reduced_lattice(x0), s, cfg, cfg.height_function());
    return static_cast<double>(c) / cfg.N;
}

CellSurvey survey(const Lattice& x0, const EscapeConfig& cfg) {
    cfg.validate();
    if (x0.dims() != cfg.dims) throw ValidationError("survey: lattice dimensions differ from the config");
    const Dimensions& dims = cfg.dims;
    const int mn = dims.mn();
    const Lattice xr = reduced_lattice(x0);
    const HeightFunction h = cfg.height_function();

    CellSurvey out;
    out.resolution = cfg.cell_side();
    const long double axis = std::ceil(2.0L / out.resolution);
    const long double total = std::pow(axis, static_cast<long double>(mn));
    out.total = static_cast<double>(total);
    out.c_x = c_of_x(x0);
    out.bound = out.c_x * std::pow(cfg.t, 3.0 * cfg.N) *
                std::exp((dims.d() - cfg.delta) * mn * cfg.t * cfg.N);
    out.slack = std::ldexp(1.0, mn);

    if (total <= kFullGridLimit) {
        out.mode = "full-grid";
        out.per_axis = static_cast<std::int64_t>(axis);
        const std::int64_t K = out.per_axis;
        const auto cells = static_cast<std::int64_t>(total);
        const double side = 2.0 / static_cast<double>(K);
        const int threads = std::max(1, std::min<int>(worker_threads(), static_cast<int>(std::min<std::int64_t>(cells, 64))));
        std::vector<std::int64_t> counts(static_cast<std::size_t>(threads), 0);
        auto work = [&](int w) {
            const std::int64_t lo = cells * w / threads, hi = cells * (w + 1) / threads;
            Matrix s(dims.m(), dims.n());
            for (std::int64_t idx = lo; idx < hi; ++idx) {
                std::int64_t rest = idx;
                for (int k = 0; k < mn; ++k) {
                    s(k / dims.n(), k % dims.n()) = -1.0 + (static_cast<double>(rest % K) + 0.5) * side;
                    rest /= K;
                }
                if (escapes(escape_count(xr, s, cfg, h), cfg)) ++counts[static_cast<std::size_t>(w)];
            }
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
            for (auto& th : pool) th.join();
        }
        out.samples = static_cast<std::uint64_t>(cells);
        out.occupied = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
        out.pass = out.occupied <= out.bound * out.slack;
        return out;
    }
    if (cfg.mc_samples == 0)
        throw ResourceError("survey: full grid needs " + std::to_string(static_cast<double>(total)) +
                            " cells (limit 1e8) and Monte Carlo is disabled");
    out.mode = "monte-carlo";
    out.per_axis = axis < 9e18L ? static_cast<std::int64_t>(axis) : -1;
    const EstimatorResult est = monte_carlo1(cfg.mc_samples, cfg.rng, [&](Engine& eng) {
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        Matrix s(dims.m(), dims.n());
        for (int k = 0; k < mn; ++k) s(k / dims.n(), k % dims.n()) = unif(eng);
        return escapes(escape_count(xr, s, cfg, h), cfg) ? 1.0 : 0.0;
    });
    out.samples = est.n;
    out.occupied = est.mean * out.total;
    out.occupied_std_error = est.std_error * out.total;
    out.pass = out.occupied <= out.bound * out.slack + 3.0 * *out.occupied_std_error;
    return out;
}

nlohmann::json CellSurvey::to_json() const {
    nlohmann::json j = {{"mode", mode},       {"resolution", resolution}, {"per_axis", per_axis},
                        {"total", total},     {"occupied", occupied},     {"samples", samples},
                        {"c_x", c_x},         {"bound", bound},           {"slack", slack},
                        {"pass", pass}};
    j["occupied_stderr"] = occupied_std_error ? nlohmann::json(*occupied_std_error) : nlohmann::json(nullptr);
    return j;
}

void write_survey_csv(std::ostream& out, const std::vector<CellSurvey>& rows) {
    out << "r,total,occupied,bound,pass\n";
    for (const auto& r : rows)
        out << std::setprecision(17) << r.resolution << ',' << r.total << ',' << r.occupied << ',' << r.bound << ','
            << (r.pass ? "true" : "false") << '\n';
}

DimensionEstimate dimension_estimate(const Lattice& x0, const EscapeConfig& cfg, const std::vector<int>& ladder) {
    if (ladder.size() < 3) throw ValidationError("dimension_estimate: need at least three ladder points");
    std::vector<int> sorted = ladder;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.front() < 1)
        throw ValidationError("dimension_estimate: ladder values must be distinct and positive");
    const Dimensions& dims = cfg.dims;
    DimensionEstimate est;
    est.ladder = ladder;
    est.theory = (dims.d() - cfg.delta) * dims.mn() / dims.d() + 3.0 * std::log(cfg.t) / (dims.d() * cfg.t);
    std::vector<double> xs, ys;
    for (int N : ladder) {
        EscapeConfig c = cfg;
        c.N = N;
        c.resolution = 0.0;
        est.surveys.push_back(survey(x0, c));
        const CellSurvey& sv = est.surveys.back();
        est.resolutions.push_back(sv.resolution);
        est.counts.push_back(sv.occupied);
        if (sv.occupied > 0) {
            xs.push_back(-std::log(sv.resolution));
            ys.push_back(std::log(sv.occupied));
        }
    }
    if (xs.size() < 2) {
        est.empty = true;
        return est;
    }
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxy += (xs[k] - mx) * (ys[k] - my);
        sxx += (xs[k] - mx) * (xs[k] - mx);
    }
    est.raw_slope = sxy / sxx;
    est.fitted_dim = std::clamp(est.raw_slope, 0.0, static_cast<double>(dims.mn()));
    return est;
}

nlohmann::json DimensionEstimate::to_json() const {
    nlohmann::json sv = nlohmann::json::array();
    for (const auto& s : surveys) sv.push_back(s.to_json());
    return {{"ladder", ladder},       {"resolutions", resolutions}, {"counts", counts}, {"fitted_dim", fitted_dim},
            {"raw_slope", raw_slope}, {"empty", empty},             {"theory", theory}, {"surveys", sv}};
}

void DimensionEstimate::write_csv(std::ostream& out) const {
    out << "log_inv_r,log_count\n";
    for (std::size_t k = 0; k < counts.size(); ++k) {
        out << std::setprecision(17) << -std::log(resolutions[k]) << ',';
        if (counts[k] > 0) out << std::log(counts[k]);
        else out << "-inf";
        out << '\n';
    }
}

DimensionBound theoretical_bound(const Dimensions& dims, std::int64_t delta_num, std::int64_t delta_den) {
    if (delta_den <= 0 || delta_num <= 0 || delta_num > delta_den)
        throw ValidationError("theoretical_bound: delta must be a fraction in (0, 1]");
    const std::int64_t d = dims.d(), mn = dims.mn();
    std::int64_t num = mn * (d * delta_den - delta_num);
    std::int64_t den = d * delta_den;
    const std::int64_t g = std::gcd(num, den);
    DimensionBound b;
    b.num = num / g;
    b.den = den / g;
    b.value = static_cast<double>(b.num) / static_cast<double>(b.den);
    return b;
}

nlohmann::json DimensionBound::to_json() const {
    return {{"fraction", std::to_string(num) + "/" + std::to_string(den)}, {"value", value}};
}

} // namespace latflow
