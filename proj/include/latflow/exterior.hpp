#pragma once

#include "latflow/lattice.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace latflow {

/// Index subsets of {0..d-1} are bitmasks. Basis multivectors of grade i are
/// ordered by colexicographic rank, which coincides with numeric order of the
/// masks; coefficient k of a MultiVector belongs to subsets(d, i)[k].
const std::vector<std::uint32_t>& subsets(int d, int grade);
int subset_rank(int d, std::uint32_t mask);
std::int64_t binomial(int n, int k);

/// Element of the grade-i exterior power of R^d with dense coefficients.
class MultiVector {
public:
    MultiVector(int d, int grade);
    MultiVector(int d, int grade, Vector coeffs);

    static MultiVector basis_element(int d, std::uint32_t mask);

    int d() const { return d_; }
    int grade() const { return grade_; }
    const Vector& coeffs() const { return coeffs_; }
    Vector& coeffs() { return coeffs_; }

    double norm() const { return coeffs_.norm(); }
    double coeff(std::uint32_t mask) const;

    MultiVector operator+(const MultiVector& o) const;
    MultiVector operator-(const MultiVector& o) const;
    MultiVector operator*(double s) const;

    nlohmann::json to_json() const;
    static MultiVector from_json(const nlohmann::json& j);

private:
    int d_;
    int grade_;
    Vector coeffs_;
};

/// x_1 ^ ... ^ x_i where the x_k are the columns of `factors` (d x i).
MultiVector wedge(const Matrix& factors);

/// Matrix of the grade-i action of g: entry (I, J) is the minor det g[I, J].
Matrix induced_matrix(const Matrix& g, int grade);

MultiVector induced_action(const Matrix& g, const MultiVector& v);

/// Linear map e_I -> sign(I, I^c) e_{I^c}.
MultiVector hodge_star(const MultiVector& v);

/// Orthogonal projection onto the exterior power of span(e_1..e_m).
MultiVector unstable_projection(const Dimensions& dims, const MultiVector& v);

/// A multivector known to be decomposable because it is kept as its factors.
class Decomposable {
public:
    explicit Decomposable(Matrix factors);

    const Matrix& factors() const { return factors_; }
    int d() const { return static_cast<int>(factors_.rows()); }
    int grade() const { return static_cast<int>(factors_.cols()); }

    /// sqrt(det Gram(factors)).
    double norm() const;
    MultiVector multivector() const { return wedge(factors_); }
    Decomposable transformed(const Matrix& g) const { return Decomposable(g * factors_); }
    Decomposable scaled(double lambda) const;

private:
    Matrix factors_;
};

/// Norm of the wedge of the columns of `factors`.
double wedge_norm(const Matrix& factors);

} // namespace latflow
