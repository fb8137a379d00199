#pragma once

#include "latflow/exterior.hpp"
#include "latflow/lattice.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace latflow::testing {

/// Smallest sqrt(det Gram) over rank-i tuples of vectors x.basis() * c with
/// c in [-B, B]^d. Multivector norms are built incrementally so that no
/// reduction or enumeration code from the library is involved.
inline double brute_force_min_covolume(const Lattice& x, int i, int bound) {
    const int d = x.dims().d();
    std::vector<Vector> vecs;
    IntVector c = IntVector::Constant(d, -bound);
    while (true) {
        // Keep one of each +-pair: the last nonzero coordinate positive.
        int last = d - 1;
        while (last >= 0 && c(last) == 0) --last;
        if (last >= 0 && c(last) > 0) vecs.push_back(x.basis() * c.cast<double>());
        int k = 0;
        while (k < d && c(k) == bound) c(k++) = -bound;
        if (k == d) break;
        ++c(k);
    }
    double best = std::numeric_limits<double>::infinity();
    const double tol = 1e-9;
    std::vector<MultiVector> partial;
    partial.reserve(static_cast<std::size_t>(i));
    auto extend = [&](const MultiVector& w, const Vector& v) {
        // (w ^ v) coefficients: sum over J, k not in J with sign from sorting.
        MultiVector out(d, w.grade() + 1);
        const auto& lower = subsets(d, w.grade());
        for (std::size_t r = 0; r < lower.size(); ++r) {
            const double a = w.coeffs()(static_cast<Eigen::Index>(r));
            if (a == 0.0) continue;
            for (int k = 0; k < d; ++k) {
                const std::uint32_t bit = 1u << k;
                if (lower[r] & bit) continue;
                const int above = __builtin_popcount(lower[r] & ~((bit << 1) - 1));
                const double sign = (above % 2 == 0) ? 1.0 : -1.0;
                out.coeffs()(subset_rank(d, lower[r] | bit)) += sign * a * v(k);
            }
        }
        return out;
    };
    auto rec = [&](auto&& self, std::size_t start, const MultiVector& w) -> void {
        if (w.grade() == i) {
            const double n = w.norm();
            if (n > tol) best = std::min(best, n);
            return;
        }
        for (std::size_t a = start; a < vecs.size(); ++a) {
            const MultiVector next = extend(w, vecs[a]);
            if (next.norm() <= tol) continue;
            self(self, a + 1, next);
        }
    };
    MultiVector unit(d, 0);
    unit.coeffs()(0) = 1.0;
    rec(rec, 0, unit);
    return best;
}

/// Escalates B until the minimum is unchanged for two consecutive bounds.
inline double brute_force_alpha(const Lattice& x, int i, int max_bound = 4) {
    if (i == 0 || i == x.dims().d()) return 1.0;
    double prev = brute_force_min_covolume(x, i, 1);
    for (int b = 2; b <= max_bound; ++b) {
        const double cur = brute_force_min_covolume(x, i, b);
        if (std::abs(cur - prev) <= 1e-12 * prev) return 1.0 / cur;
        prev = cur;
    }
    return 1.0 / prev;
}

} // namespace latflow::testing
