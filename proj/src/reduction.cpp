#include "latflow/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace latflow {

namespace {

struct GramSchmidt {
    Matrix mu;      // mu(k, j) for j < k
    Vector norms2;  // |b*_k|^2
};

GramSchmidt gram_schmidt(const Matrix& b) {
    const auto d = b.cols();
    GramSchmidt gs{Matrix::Zero(d, d), Vector::Zero(d)};
    Matrix star = b;
    for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index j = 0; j < k; ++j) {
            gs.mu(k, j) = b.col(k).dot(star.col(j)) / gs.norms2(j);
            star.col(k) -= gs.mu(k, j) * star.col(j);
        }
        gs.norms2(k) = star.col(k).squaredNorm();
    }
    return gs;
}

std::int64_t checked_round(double v) {
    if (!(std::abs(v) < 9e15)) throw ResourceError("lattice reduction: coefficient overflow");
    return static_cast<std::int64_t>(std::llround(v));
}

} // namespace

ReducedBasis lll_reduce(const Matrix& basis, double delta) {
    const auto d = basis.cols();
    ReducedBasis out{basis, IntMatrix::Identity(d, d)};
    if (d < 2) return out;
    Matrix& b = out.basis;
    IntMatrix& u = out.transform;
    GramSchmidt gs = gram_schmidt(b);
    Eigen::Index k = 1;
    std::size_t guard = 0;
    while (k < d) {
        if (++guard > 100000) throw ResourceError("lattice reduction did not terminate");
        bool changed = false;
        for (Eigen::Index j = k - 1; j >= 0; --j) {
            const double mu = gs.mu(k, j);
            if (std::abs(mu) > 0.5 + 1e-12) {
                const std::int64_t q = checked_round(mu);
                b.col(k) -= static_cast<double>(q) * b.col(j);
                u.col(k) -= q * u.col(j);
                for (Eigen::Index l = 0; l < j; ++l) gs.mu(k, l) -= static_cast<double>(q) * gs.mu(j, l);
                gs.mu(k, j) -= static_cast<double>(q);
                changed = true;
            }
        }
        if (changed) gs = gram_schmidt(b);
        const double mu = gs.mu(k, k - 1);
        if (gs.norms2(k) >= (delta - mu * mu) * gs.norms2(k - 1)) {
            ++k;
        } else {
            b.col(k).swap(b.col(k - 1));
            u.col(k).swap(u.col(k - 1));
            gs = gram_schmidt(b);
            k = std::max<Eigen::Index>(k - 1, 1);
        }
    }
    return out;
}

std::vector<LatticePoint> enumerate_short_vectors(const Matrix& basis, double radius,
                                                  std::size_t max_points) {
    const auto d = basis.cols();
    const Eigen::HouseholderQR<Matrix> qr(basis);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    const double bound = radius * radius;
    std::vector<LatticePoint> out;
    IntVector c = IntVector::Zero(d);
    Vector partial = Vector::Zero(d + 1); // partial(k): squared length from levels >= k

    // Depth-first over levels d-1 .. 0; the canonical sign is enforced on the
    // highest nonzero coordinate.
    auto recurse = [&](auto&& self, Eigen::Index level, bool all_zero_above) -> void {
        double center = 0.0;
        for (Eigen::Index j = level + 1; j < d; ++j) center -= r(level, j) * static_cast<double>(c(j));
        const double rkk = std::abs(r(level, level));
        center /= r(level, level);
        const double rem = bound - partial(level + 1);
        if (rem < 0) return;
        const double half = std::sqrt(rem) / rkk;
        auto lo = static_cast<std::int64_t>(std::ceil(center - half - 1e-12));
        const auto hi = static_cast<std::int64_t>(std::floor(center + half + 1e-12));
        if (all_zero_above) lo = std::max<std::int64_t>(lo, 0);
        for (std::int64_t v = lo; v <= hi; ++v) {
            const double diff = (static_cast<double>(v) - center) * r(level, level);
            const double len = partial(level + 1) + diff * diff;
            if (len > bound * (1 + 1e-12)) continue;
            c(level) = v;
            partial(level) = len;
            if (level == 0) {
                if (all_zero_above && v == 0) continue;
                if (out.size() >= max_points) {
                    throw ResourceError("short-vector enumeration exceeded " + std::to_string(max_points) +
                                        " points at radius " + std::to_string(radius));
                }
                Vector vec = basis * c.cast<double>();
                const double n2 = vec.squaredNorm();
                out.push_back({c, std::move(vec), n2});
            } else {
                self(self, level - 1, all_zero_above && v == 0);
            }
        }
        c(level) = 0;
    };
    recurse(recurse, d - 1, true);
    std::stable_sort(out.begin(), out.end(),
                     [](const LatticePoint& a, const LatticePoint& b) { return a.norm2 < b.norm2; });
    return out;
}

namespace {

std::int64_t mul_checked(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw ResourceError("integer overflow in lattice arithmetic");
    return r;
}

std::int64_t sub_checked(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_sub_overflow(a, b, &r)) throw ResourceError("integer overflow in lattice arithmetic");
    return r;
}

} // namespace

IntMatrix integer_kernel(const IntMatrix& a) {
    const auto rows = a.rows();
    const auto cols = a.cols();
    IntMatrix work = a;
    IntMatrix u = IntMatrix::Identity(cols, cols);
    Eigen::Index pivot_col = 0;
    // Column-style echelon form by unimodular column operations; columns of u
    // beyond the last pivot span the kernel.
    for (Eigen::Index row = 0; row < rows && pivot_col < cols; ++row) {
        while (true) {
            Eigen::Index best = -1;
            for (Eigen::Index c = pivot_col; c < cols; ++c) {
                if (work(row, c) != 0 && (best < 0 || std::abs(work(row, c)) < std::abs(work(row, best)))) best = c;
            }
            if (best < 0) break;
            if (best != pivot_col) {
                work.col(best).swap(work.col(pivot_col));
                u.col(best).swap(u.col(pivot_col));
            }
            bool done = true;
            for (Eigen::Index c = pivot_col + 1; c < cols; ++c) {
                if (work(row, c) == 0) continue;
                const std::int64_t q = work(row, c) / work(row, pivot_col);
                for (Eigen::Index r = 0; r < rows; ++r) work(r, c) = sub_checked(work(r, c), mul_checked(q, work(r, pivot_col)));
                for (Eigen::Index r = 0; r < cols; ++r) u(r, c) = sub_checked(u(r, c), mul_checked(q, u(r, pivot_col)));
                if (work(row, c) != 0) done = false;
            }
            if (done) {
                ++pivot_col;
                break;
            }
        }
    }
    IntMatrix kernel = u.rightCols(cols - pivot_col);
    // Keep entries small: LLL on the kernel basis does not change the lattice.
    if (kernel.cols() > 0) {
        const ReducedBasis red = lll_reduce(kernel.cast<double>());
        kernel = kernel * red.transform;
    }
    return kernel;
}

IntMatrix saturate(const IntMatrix& c) {
    const IntMatrix orth = integer_kernel(c.transpose());
    if (orth.cols() == 0) return IntMatrix::Identity(c.rows(), c.rows());
    return integer_kernel(orth.transpose());
}

__int128 integer_determinant(const IntMatrix& a) {
    const auto n = a.rows();
    if (n == 0) return 1;
    std::vector<__int128> m(static_cast<std::size_t>(n * n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m[i * n + j] = a(i, j);
    __int128 prev = 1;
    int sign = 1;
    for (Eigen::Index k = 0; k < n - 1; ++k) {
        if (m[k * n + k] == 0) {
            Eigen::Index swap_row = -1;
            for (Eigen::Index i = k + 1; i < n; ++i) {
                if (m[i * n + k] != 0) {
                    swap_row = i;
                    break;
                }
            }
            if (swap_row < 0) return 0;
            for (Eigen::Index j = 0; j < n; ++j) std::swap(m[k * n + j], m[swap_row * n + j]);
            sign = -sign;
        }
        for (Eigen::Index i = k + 1; i < n; ++i) {
            for (Eigen::Index j = k + 1; j < n; ++j) {
                m[i * n + j] = (m[i * n + j] * m[k * n + k] - m[i * n + k] * m[k * n + j]) / prev;
            }
        }
        prev = m[k * n + k];
    }
    return sign * m[(n - 1) * n + (n - 1)];
}

std::int64_t maximal_minors_gcd(const IntMatrix& c) {
    const auto d = static_cast<int>(c.rows());
    const auto i = static_cast<int>(c.cols());
    __int128 g = 0;
    IntMatrix minor(i, i);
    std::vector<int> pick(static_cast<std::size_t>(i));
    std::iota(pick.begin(), pick.end(), 0);
    while (true) {
        for (int r = 0; r < i; ++r) minor.row(r) = c.row(pick[static_cast<std::size_t>(r)]);
        __int128 det = integer_determinant(minor);
        if (det < 0) det = -det;
        // Euclid on 128-bit values.
        __int128 a = g, b = det;
        while (b != 0) {
            const __int128 t = a % b;
            a = b;
            b = t;
        }
        g = a;
        if (g == 1) return 1;
        int k = i - 1;
        while (k >= 0 && pick[static_cast<std::size_t>(k)] == d - i + k) --k;
        if (k < 0) break;
        ++pick[static_cast<std::size_t>(k)];
        for (int j = k + 1; j < i; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }
    if (g > static_cast<__int128>(INT64_MAX)) throw ResourceError("minor gcd overflow");
    return static_cast<std::int64_t>(g);
}

Lattice reduced_lattice(const Lattice& x) {
    Matrix b = lll_reduce(x.basis()).basis;
    if (b.determinant() < 0) b.col(0) *= -1.0;
    return Lattice(x.dims(), std::move(b), kDriftTol);
}

} // namespace latflow
