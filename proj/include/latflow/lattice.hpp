#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace latflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using IntVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

/// Bad input: shapes, ranges, non-unimodular data. Maps to CLI exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A search or enumeration ran past its configured budget. Maps to exit code 3.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kUnimodularTol = 1e-9;
/// Looser bound for bases produced by computation (act, dual).
inline constexpr double kDriftTol = 1e-8;

/// Block sizes (m, n) of the flow; d = m + n.
class Dimensions {
public:
    Dimensions(int m, int n);

    int m() const { return m_; }
    int n() const { return n_; }
    int d() const { return m_ + n_; }
    int mn() const { return m_ * n_; }

    bool operator==(const Dimensions&) const = default;

private:
    int m_;
    int n_;
};

/// A unimodular lattice in R^d stored by an explicit column basis.
/// No reduction is applied on construction.
class Lattice {
public:
    Lattice(Dimensions dims, Matrix basis, double tol = kUnimodularTol);

    static Lattice standard(Dimensions dims);

    const Matrix& basis() const { return basis_; }
    const Dimensions& dims() const { return dims_; }
    int d() const { return dims_.d(); }

    /// Basis of the dual lattice, B^{-T}.
    Lattice dual() const;

    /// Integer numerators and a common denominator when every entry is a
    /// rational with denominator <= max_den (within 1e-12 absolute).
    struct Rational {
        IntMatrix numerators;
        std::int64_t denominator;
    };
    std::optional<Rational> exact_basis(std::int64_t max_den = 1'000'000) const;

private:
    Dimensions dims_;
    Matrix basis_;
};

/// g_t = diag(e^{nt} x m, e^{-mt} x n).
Matrix diagonal_flow(const Dimensions& dims, double t);

/// u_s = [[I_m, s], [0, I_n]] for s of shape m x n.
Matrix horospherical(const Dimensions& dims, const Matrix& s);

/// g * x; g must have determinant 1 within kUnimodularTol, and the result is
/// re-checked (drift is reported as an error, never renormalized).
Lattice act(const Matrix& g, const Lattice& x);

/// sum_k e^{-(k-1)(m+n)t} s_k, the parameter of the single unipotent in
/// g_t u_{s_N} ... g_t u_{s_1} = g_{Nt} u_{phi}.
Matrix phi_compose(const Dimensions& dims, double t, std::span<const Matrix> s);

/// Operator norm of g_t on the grade-j exterior power: product of the j
/// largest singular values of g_t.
double wedge_operator_norm(const Dimensions& dims, double t, int j);

/// max_{0<j<d} wedge_operator_norm(dims, t, j).
double wedge_operator_norm_max(const Dimensions& dims, double t);

/// Text format: first line "m n", then d lines of d entries, line k holding
/// basis column k.
Lattice read_lattice(std::istream& in);
Lattice read_lattice_file(const std::string& path);
void write_lattice(std::ostream& out, const Lattice& x);

} // namespace latflow
