#pragma once

#include "latflow/lattice.hpp"

#include <cstddef>
#include <vector>

namespace latflow {

struct EnumerationBudget {
    std::size_t max_points = 2'000'000;
    std::size_t max_tuples = 50'000'000;
};

/// LLL-reduced basis (columns) and the unimodular transform with
/// reduced = original * transform.
struct ReducedBasis {
    Matrix basis;
    IntMatrix transform;
};

ReducedBasis lll_reduce(const Matrix& basis, double delta = 0.99);

/// Same point of X with an LLL-reduced, positively oriented basis, so that
/// repeated pushes keep the determinant within the drift tolerance.
Lattice reduced_lattice(const Lattice& x);

struct LatticePoint {
    IntVector coords; // relative to the basis handed to the enumerator
    Vector vec;
    double norm2;
};

/// All nonzero lattice vectors with norm <= radius, one representative per
/// +-pair (the highest-index nonzero coordinate is positive), sorted by norm.
/// Works best on a reduced basis; throws ResourceError past the budget.
std::vector<LatticePoint> enumerate_short_vectors(const Matrix& basis, double radius,
                                                  std::size_t max_points);

/// Columns form a basis of {x in Z^c : a x = 0}.
IntMatrix integer_kernel(const IntMatrix& a);

/// Basis of span_R(columns of c) intersected with Z^d.
IntMatrix saturate(const IntMatrix& c);

/// gcd of the maximal minors of c (d x i, rank i): the index of the column
/// span inside its saturation. Zero when the columns are dependent.
std::int64_t maximal_minors_gcd(const IntMatrix& c);

/// Exact determinant of a small square integer matrix (Bareiss).
__int128 integer_determinant(const IntMatrix& a);

} // namespace latflow
