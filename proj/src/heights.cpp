#include "latflow/heights.hpp"

#include "latflow/exterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace latflow {

std::vector<double> beta_exponents(const Dimensions& dims) {
    std::vector<double> out;
    for (int i = 1; i < dims.d(); ++i) {
        out.push_back(i <= dims.m() ? static_cast<double>(dims.m()) / i
                                    : static_cast<double>(dims.n()) / (dims.d() - i));
    }
    return out;
}

std::vector<double> beta_profile(const Dimensions& dims) {
    std::vector<double> out(static_cast<std::size_t>(dims.d() + 1), 0.0);
    for (int i = 1; i < dims.d(); ++i) {
        out[static_cast<std::size_t>(i)] = i <= dims.m() ? static_cast<double>(i) / dims.m()
                                                          : static_cast<double>(dims.d() - i) / dims.n();
    }
    return out;
}

double minkowski_product_bound(int k) {
    // gamma_k^k for k = 1..8.
    static constexpr double kGammaPow[] = {1.0, 1.0, 4.0 / 3.0, 2.0, 4.0, 8.0, 64.0 / 3.0, 64.0, 256.0};
    if (k < 1 || k > 8) throw ValidationError("Hermite constant only tabulated for k <= 8");
    return std::sqrt(kGammaPow[k]);
}

namespace {

bool in_span(const Matrix& chosen, Eigen::Index count, const Vector& v) {
    if (count == 0) return false;
    const Matrix basis = chosen.leftCols(count);
    const Vector coef = basis.colPivHouseholderQr().solve(v);
    return (basis * coef - v).norm() <= 1e-9 * v.norm();
}

} // namespace

SuccessiveMinima minkowski_minima(const Lattice& x, int count, const EnumerationBudget& budget) {
    const int d = x.d();
    if (count < 0) count = d;
    if (count > d) throw ValidationError("minkowski_minima: count exceeds dimension");
    const ReducedBasis red = lll_reduce(x.basis());
    SuccessiveMinima out{{}, Matrix::Zero(d, count), IntMatrix::Zero(d, count)};
    for (int k = 0; k < count; ++k) {
        // Some reduced basis vector lies outside the span of the k chosen
        // vectors, so its length bounds lambda_{k+1}.
        double radius = std::numeric_limits<double>::infinity();
        for (int j = 0; j < d; ++j) {
            const Vector bj = red.basis.col(j);
            if (!in_span(out.vectors, k, bj)) radius = std::min(radius, bj.norm());
        }
        const auto pts = enumerate_short_vectors(red.basis, radius * (1 + 1e-9), budget.max_points);
        bool found = false;
        for (const auto& p : pts) {
            if (!in_span(out.vectors, k, p.vec)) {
                out.vectors.col(k) = p.vec;
                out.coords.col(k) = red.transform * p.coords;
                out.lambda.push_back(std::sqrt(p.norm2));
                found = true;
                break;
            }
        }
        if (!found) throw ResourceError("minkowski_minima: enumeration radius too small");
    }
    return out;
}

namespace {

AlphaResult finish(const Lattice& x, IntMatrix coords) {
    Matrix witness = x.basis() * coords.cast<double>();
    const double covol = wedge_norm(witness);
    return {1.0 / covol, std::move(witness), std::move(coords)};
}

AlphaResult alpha_direct(const Lattice& x, int i, const EnumerationBudget& budget) {
    const int d = x.d();
    const ReducedBasis red = lll_reduce(x.basis());
    if (i == 1) {
        const auto pts = enumerate_short_vectors(red.basis, red.basis.col(0).norm() * (1 + 1e-9), budget.max_points);
        IntMatrix coords = red.transform * pts.front().coords;
        return finish(x, std::move(coords));
    }
    const SuccessiveMinima mins = minkowski_minima(x, i, budget);
    // A rank-i minimizer has successive minima mu_k >= lambda_k(x), so its
    // i-th minimum is at most gamma_i^{i/2} lambda_i(x).
    const double radius = minkowski_product_bound(i) * mins.lambda.back() * (1 + 1e-9);
    const auto pts = enumerate_short_vectors(red.basis, radius, budget.max_points);
    std::vector<IntVector> orig;
    orig.reserve(pts.size());
    for (const auto& p : pts) orig.push_back(red.transform * p.coords);

    double best = std::numeric_limits<double>::infinity();
    IntMatrix best_coords(d, i);
    Matrix factors(d, i);
    IntMatrix cfactors(d, i);
    std::vector<std::size_t> pick(static_cast<std::size_t>(i));
    std::size_t tuples = 0;
    const std::size_t total = pts.size();
    auto recurse = [&](auto&& self, int level, std::size_t start) -> void {
        for (std::size_t idx = start; idx < total; ++idx) {
            factors.col(level) = pts[idx].vec;
            cfactors.col(level) = orig[idx];
            if (level + 1 < i) {
                self(self, level + 1, idx + 1);
                continue;
            }
            if (++tuples > budget.max_tuples) throw ResourceError("alpha: tuple budget exceeded");
            const double covol = wedge_norm(factors);
            double scale = 1.0;
            for (int c = 0; c < i; ++c) scale *= factors.col(c).norm();
            if (covol <= 1e-10 * scale) continue;
            const std::int64_t g = maximal_minors_gcd(cfactors);
            if (g == 0) continue;
            const double sat = covol / static_cast<double>(g);
            if (sat < best * (1 - 1e-12)) {
                best = sat;
                best_coords = cfactors;
            }
        }
    };
    recurse(recurse, 0, 0);
    if (!std::isfinite(best)) throw ResourceError("alpha: no independent tuple within search radius");
    return finish(x, saturate(best_coords));
}

} // namespace

AlphaResult alpha(const Lattice& x, int i, const EnumerationBudget& budget) {
    const int d = x.d();
    if (i < 0 || i > d) throw ValidationError("alpha: index out of range");
    if (i == 0 || i == d) {
        IntMatrix coords = IntMatrix::Identity(d, d).leftCols(i);
        return {1.0, x.basis() * coords.cast<double>(), coords};
    }
    if (2 * i <= d) return alpha_direct(x, i, budget);
    // covol(L) = covol(L^perp in the dual) for unimodular x.
    const AlphaResult dual = alpha_direct(x.dual(), d - i, budget);
    return finish(x, integer_kernel(dual.witness_coords.transpose()));
}

AlphaProfile alpha_profile(const Lattice& x, const EnumerationBudget& budget) {
    AlphaProfile out;
    for (int i = 0; i <= x.d(); ++i) {
        AlphaResult r = alpha(x, i, budget);
        out.values.push_back(r.value);
        out.witnesses.push_back(std::move(r.witness));
    }
    return out;
}

double c_of_x(const Dimensions& dims, const AlphaProfile& profile) {
    const auto betas = beta_exponents(dims);
    double c = 0.0;
    for (int i = 1; i < dims.d(); ++i) {
        c = std::max(c, std::pow(profile.values[static_cast<std::size_t>(i)], betas[static_cast<std::size_t>(i - 1)]));
    }
    return c;
}

double c_of_x(const Lattice& x) { return c_of_x(x.dims(), alpha_profile(x)); }

// ---------------------------------------------------------------------------

nlohmann::json HeightFunction::to_json() const {
    auto pairs = [](const std::vector<std::pair<int, int>>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& [i, j] : v) a.push_back({i, j});
        return a;
    };
    return {{"d", d},
            {"beta", beta},
            {"exponents", exponents},
            {"psi", pairs(psi)},
            {"phi", pairs(phi)},
            {"b", b},
            {"strict", strict},
            {"dminus", dminus},
            {"dplus", dplus},
            {"epsilon_log2", epsilon_log2},
            {"epsilon", epsilon},
            {"weights", weights},
            {"a", a},
            {"a_prime", a_prime},
            {"omega", omega},
            {"C0", C0}};
}

HeightFunction HeightFunction::from_json(const nlohmann::json& j) {
    HeightFunction h;
    h.d = j.at("d").get<int>();
    h.beta = j.at("beta").get<std::vector<double>>();
    h.exponents = j.at("exponents").get<std::vector<double>>();
    for (const auto& p : j.at("psi")) h.psi.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    for (const auto& p : j.at("phi")) h.phi.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    h.b = j.at("b").get<double>();
    h.strict = j.at("strict").get<std::vector<int>>();
    h.dminus = j.at("dminus").get<std::vector<int>>();
    h.dplus = j.at("dplus").get<std::vector<int>>();
    h.epsilon_log2 = j.at("epsilon_log2").get<int>();
    h.epsilon = j.at("epsilon").get<double>();
    h.weights = j.at("weights").get<std::vector<double>>();
    h.a = j.at("a").get<double>();
    h.a_prime = j.at("a_prime").get<double>();
    h.omega = j.at("omega").get<double>();
    h.C0 = j.at("C0").get<double>();
    return h;
}

namespace {

constexpr double kConcavityTol = 1e-12;

bool is_midpoint(const std::vector<double>& beta, int i, int j) {
    const double mid = 0.5 * (beta[static_cast<std::size_t>(i - j)] + beta[static_cast<std::size_t>(i + j)]);
    return std::abs(beta[static_cast<std::size_t>(i)] - mid) <= kConcavityTol * std::max(1.0, beta[static_cast<std::size_t>(i)]);
}

} // namespace

HeightFunction build_height(const std::vector<double>& beta, double a, double a_prime, double omega) {
    const int d = static_cast<int>(beta.size()) - 1;
    if (d < 2) throw ValidationError("build_height: profile needs d >= 2");
    if (beta.front() != 0.0 || beta.back() != 0.0) throw ValidationError("build_height: beta(0) and beta(d) must be 0");
    for (int i = 1; i < d; ++i) {
        const auto bi = beta[static_cast<std::size_t>(i)];
        if (!(bi > 0) || !std::isfinite(bi)) throw ValidationError("build_height: beta must be positive inside");
        const double mid = 0.5 * (beta[static_cast<std::size_t>(i - 1)] + beta[static_cast<std::size_t>(i + 1)]);
        if (bi < mid - kConcavityTol * std::max(1.0, bi)) throw ValidationError("build_height: beta is not concave");
    }
    if (!(a_prime > a)) throw ValidationError("build_height: a' must exceed a");
    if (!(a > 0) || !(omega > 0)) throw ValidationError("build_height: a and omega must be positive");

    HeightFunction h;
    h.d = d;
    h.beta = beta;
    h.a = a;
    h.a_prime = a_prime;
    h.omega = omega;
    h.exponents.assign(static_cast<std::size_t>(d + 1), 0.0);
    for (int i = 1; i < d; ++i) h.exponents[static_cast<std::size_t>(i)] = 1.0 / beta[static_cast<std::size_t>(i)];

    std::vector<bool> strict(static_cast<std::size_t>(d + 1), true);
    for (int i = 1; i < d; ++i) {
        for (int j = 1; j <= std::min(i, d - i); ++j) {
            h.psi.emplace_back(i, j);
            if (is_midpoint(beta, i, j)) {
                h.phi.emplace_back(i, j);
                strict[static_cast<std::size_t>(i)] = false;
            } else {
                const double ratio = (beta[static_cast<std::size_t>(i - j)] + beta[static_cast<std::size_t>(i + j)]) /
                                     (2.0 * beta[static_cast<std::size_t>(i)]);
                h.b = std::max(h.b, ratio);
            }
        }
    }
    for (int i = 0; i <= d; ++i) {
        if (strict[static_cast<std::size_t>(i)]) h.strict.push_back(i);
    }
    for (int i = 0; i <= d; ++i) {
        int lo = d + 1, hi = d + 1;
        for (int s : h.strict) {
            if (s <= i) lo = std::min(lo, i - s);
            if (s >= i) hi = std::min(hi, s - i);
        }
        h.dminus.push_back(lo);
        h.dplus.push_back(hi);
    }

    // Largest epsilon = 2^{-k} with the weighted Psi sum below (a'-a)/2.
    const double target = 0.5 * (a_prime - a);
    const double log_omega = std::log(omega);
    auto psi_sum = [&](int k) {
        double sum = 0.0;
        for (const auto& [i, j] : h.psi) {
            const double bi = h.exponents[static_cast<std::size_t>(i)];
            sum += std::exp(2.0 * bi * log_omega - bi * j * j * k * std::log(2.0));
        }
        return sum;
    };
    int k = 1;
    while (!(psi_sum(k) < target)) {
        if (++k > 1000) throw ValidationError("build_height: no epsilon >= 2^-1000 satisfies the selection inequality");
    }
    h.epsilon_log2 = k;
    h.epsilon = std::ldexp(1.0, -k);
    const double log_eps = -k * std::log(2.0);
    for (int i = 0; i <= d; ++i) {
        // exact power of two
        h.weights.push_back(std::ldexp(1.0, -k * h.dminus[static_cast<std::size_t>(i)] * h.dplus[static_cast<std::size_t>(i)]));
    }

    // C0 = max(1, sup_{f >= 2} [2(1-a) + sum_{Psi\Phi} K_ij f^{b_ij} - (a' - a - S_Phi) f]),
    // where K_ij bounds omega^{2 beta_i} omega_i^{beta_i} sqrt(f_{i-j} f_{i+j})^{beta_i}
    // through f_k <= f^{beta(k)} / omega_k.
    std::vector<std::pair<double, double>> terms; // (log K, exponent)
    double s_phi = 0.0;
    for (const auto& [i, j] : h.psi) {
        const double bi = h.exponents[static_cast<std::size_t>(i)];
        if (is_midpoint(beta, i, j)) {
            s_phi += std::exp(2.0 * bi * log_omega + bi * j * j * log_eps);
            continue;
        }
        const auto wlog = [&](int idx) {
            return log_eps * h.dminus[static_cast<std::size_t>(idx)] * h.dplus[static_cast<std::size_t>(idx)];
        };
        const double log_k = 2.0 * bi * log_omega + bi * wlog(i) - 0.5 * bi * (wlog(i - j) + wlog(i + j));
        const double expo = (beta[static_cast<std::size_t>(i - j)] + beta[static_cast<std::size_t>(i + j)]) /
                            (2.0 * beta[static_cast<std::size_t>(i)]);
        terms.emplace_back(log_k, expo);
    }
    const double slope = a_prime - a - s_phi;
    auto value = [&](double f) {
        double v = 2.0 * (1.0 - a) - slope * f;
        for (const auto& [lk, e] : terms) v += std::exp(lk + e * std::log(f));
        return v;
    };
    auto derivative = [&](double f) {
        double v = -slope;
        for (const auto& [lk, e] : terms) v += e * std::exp(lk + (e - 1.0) * std::log(f));
        return v;
    };
    double fstar = 2.0;
    if (derivative(2.0) > 0) {
        double lo = 2.0, hi = 4.0;
        while (derivative(hi) > 0) {
            lo = hi;
            hi *= 2.0;
            if (!std::isfinite(hi)) throw ValidationError("build_height: additive constant is unbounded");
        }
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (derivative(mid) > 0 ? lo : hi) = mid;
        }
        fstar = 0.5 * (lo + hi);
    }
    h.C0 = std::max(1.0, value(fstar));
    return h;
}

HeightFunction default_height(const Dimensions& dims, double t, double c0) {
    const double a = c0 * t * std::exp(-dims.mn() * t);
    return build_height(beta_profile(dims), a, 2.0 * a, wedge_operator_norm_max(dims, t));
}

double tilde_alpha(const AlphaProfile& profile, const HeightFunction& h) {
    if (static_cast<int>(profile.values.size()) != h.d + 1) throw ValidationError("tilde_alpha: dimension mismatch");
    double sum = 2.0;
    for (int i = 1; i < h.d; ++i) {
        const auto k = static_cast<std::size_t>(i);
        sum += std::pow(h.weights[k] * profile.values[k], h.exponents[k]);
    }
    return sum;
}

double tilde_alpha(const Lattice& x, const HeightFunction& h) { return tilde_alpha(alpha_profile(x), h); }

} // namespace latflow
