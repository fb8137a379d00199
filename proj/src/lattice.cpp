#include "latflow/lattice.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace latflow {

Dimensions::Dimensions(int m, int n) : m_(m), n_(n) {
    if (m < 1 || n < 1) {
        throw ValidationError("dimensions must satisfy m >= 1 and n >= 1");
    }
}

namespace {

void check_unimodular(const Matrix& g, double tol, const char* what) {
    if (g.rows() != g.cols()) {
        throw ValidationError(std::string(what) + ": matrix is not square");
    }
    if (!g.allFinite()) {
        throw ValidationError(std::string(what) + ": non-finite entries");
    }
    const double det = g.determinant();
    if (std::abs(det - 1.0) > tol) {
        std::ostringstream os;
        os << what << ": determinant " << std::setprecision(17) << det << " is not 1";
        throw ValidationError(os.str());
    }
}

// Best rational approximation with bounded denominator via continued fractions.
std::optional<std::pair<std::int64_t, std::int64_t>> rationalize(double v, std::int64_t max_den) {
    const double sign = v < 0 ? -1.0 : 1.0;
    double x = std::abs(v);
    std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double r = x;
    for (int iter = 0; iter < 64; ++iter) {
        const double a = std::floor(r);
        if (a > 9e15) break;
        const auto ai = static_cast<std::int64_t>(a);
        const std::int64_t q2 = ai * q1 + q0;
        if (q2 > max_den) break;
        const std::int64_t p2 = ai * p1 + p0;
        p0 = p1; q0 = q1; p1 = p2; q1 = q2;
        if (std::abs(static_cast<double>(p1) / static_cast<double>(q1) - x) <= 1e-12) {
            return std::make_pair(static_cast<std::int64_t>(sign) * p1, q1);
        }
        const double frac = r - a;
        if (frac < 1e-300) break;
        r = 1.0 / frac;
    }
    if (q1 != 0 && std::abs(static_cast<double>(p1) / static_cast<double>(q1) - x) <= 1e-12) {
        return std::make_pair(static_cast<std::int64_t>(sign) * p1, q1);
    }
    return std::nullopt;
}

} // namespace

Lattice::Lattice(Dimensions dims, Matrix basis, double tol) : dims_(dims), basis_(std::move(basis)) {
    if (basis_.rows() != dims_.d() || basis_.cols() != dims_.d()) {
        throw ValidationError("lattice basis must be d x d");
    }
    check_unimodular(basis_, tol, "lattice basis");
}

Lattice Lattice::standard(Dimensions dims) {
    return Lattice(dims, Matrix::Identity(dims.d(), dims.d()));
}

Lattice Lattice::dual() const {
    return Lattice(dims_, basis_.inverse().transpose(), kDriftTol);
}

std::optional<Lattice::Rational> Lattice::exact_basis(std::int64_t max_den) const {
    const int d = dims_.d();
    IntMatrix num(d, d);
    IntMatrix den(d, d);
    std::int64_t common = 1;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            auto pq = rationalize(basis_(i, j), max_den);
            if (!pq) return std::nullopt;
            num(i, j) = pq->first;
            den(i, j) = pq->second;
            const std::int64_t g = std::gcd(common, pq->second);
            const __int128 l = static_cast<__int128>(common / g) * pq->second;
            if (l > static_cast<__int128>(1) << 62) return std::nullopt;
            common = static_cast<std::int64_t>(l);
        }
    }
    Rational out{IntMatrix(d, d), common};
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            out.numerators(i, j) = num(i, j) * (common / den(i, j));
        }
    }
    return out;
}

Matrix diagonal_flow(const Dimensions& dims, double t) {
    if (!std::isfinite(t)) throw ValidationError("flow time must be finite");
    Vector diag(dims.d());
    diag.head(dims.m()).setConstant(std::exp(dims.n() * t));
    diag.tail(dims.n()).setConstant(std::exp(-dims.m() * t));
    return diag.asDiagonal();
}

Matrix horospherical(const Dimensions& dims, const Matrix& s) {
    if (s.rows() != dims.m() || s.cols() != dims.n()) {
        throw ValidationError("horospherical parameter must have shape m x n");
    }
    if (!s.allFinite()) throw ValidationError("horospherical parameter has non-finite entries");
    Matrix u = Matrix::Identity(dims.d(), dims.d());
    u.topRightCorner(dims.m(), dims.n()) = s;
    return u;
}

Lattice act(const Matrix& g, const Lattice& x) {
    if (g.rows() != x.d() || g.cols() != x.d()) {
        throw ValidationError("act: group element has wrong size");
    }
    check_unimodular(g, kUnimodularTol, "act: group element");
    Matrix image = g * x.basis();
    // Drift detection after the product uses a looser bound than construction.
    const double det = image.determinant();
    if (!(std::abs(det - 1.0) <= kDriftTol)) {
        throw ValidationError("act: unimodularity lost after translation");
    }
    return Lattice(x.dims(), std::move(image), kDriftTol);
}

Matrix phi_compose(const Dimensions& dims, double t, std::span<const Matrix> s) {
    if (s.empty()) throw ValidationError("phi_compose needs at least one matrix");
    Matrix acc = Matrix::Zero(dims.m(), dims.n());
    const double rate = std::exp(-dims.d() * t);
    double weight = 1.0;
    for (const Matrix& sk : s) {
        if (sk.rows() != dims.m() || sk.cols() != dims.n()) {
            throw ValidationError("phi_compose: entry has wrong shape");
        }
        acc += weight * sk;
        weight *= rate;
    }
    return acc;
}

double wedge_operator_norm(const Dimensions& dims, double t, int j) {
    if (j < 1 || j > dims.d() - 1) throw ValidationError("grade out of range 1..d-1");
    // Singular values of g_t are e^{n|t|} (m times) and e^{-m|t|} (n times)
    // for t >= 0; for t < 0 the roles swap.
    const double at = std::abs(t);
    const int big = t >= 0 ? dims.m() : dims.n();
    const double big_log = t >= 0 ? dims.n() * at : dims.m() * at;
    const double small_log = t >= 0 ? -dims.m() * at : -dims.n() * at;
    const int take_big = std::min(j, big);
    return std::exp(take_big * big_log + (j - take_big) * small_log);
}

double wedge_operator_norm_max(const Dimensions& dims, double t) {
    double best = 0.0;
    for (int j = 1; j < dims.d(); ++j) best = std::max(best, wedge_operator_norm(dims, t, j));
    return best;
}

Lattice read_lattice(std::istream& in) {
    int m = 0, n = 0;
    if (!(in >> m >> n)) throw ValidationError("lattice file: missing 'm n' header");
    Dimensions dims(m, n);
    Matrix basis(dims.d(), dims.d());
    for (int col = 0; col < dims.d(); ++col) {
        for (int row = 0; row < dims.d(); ++row) {
            if (!(in >> basis(row, col))) throw ValidationError("lattice file: truncated basis");
        }
    }
    return Lattice(dims, std::move(basis));
}

Lattice read_lattice_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open lattice file " + path);
    return read_lattice(in);
}

void write_lattice(std::ostream& out, const Lattice& x) {
    out << x.dims().m() << ' ' << x.dims().n() << '\n';
    out << std::setprecision(17);
    for (int col = 0; col < x.d(); ++col) {
        for (int row = 0; row < x.d(); ++row) {
            if (row) out << ' ';
            out << x.basis()(row, col);
        }
        out << '\n';
    }
}

} // namespace latflow
