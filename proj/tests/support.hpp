#pragma once

#include "latflow/lattice.hpp"

#include <cmath>
#include <random>

namespace latflow::testing {

inline double rel_err(const Matrix& a, const Matrix& b) {
    const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)});
}

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out(i, j) = g(rng);
    return out;
}

inline Matrix random_rotation(std::mt19937_64& rng, int d) {
    const Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, d, d));
    Matrix q = qr.householderQ();
    if (q.determinant() < 0) q.col(0) *= -1.0;
    return q;
}

/// k * diag(e^{a_i}) * (unipotent upper triangular), normalized to det 1.
/// `spread` bounds |a_i| and the shears.
inline Lattice random_lattice(std::mt19937_64& rng, Dimensions dims, double spread = 0.5) {
    const int d = dims.d();
    std::uniform_real_distribution<double> u(-spread, spread);
    Vector logs(d);
    for (int i = 0; i < d; ++i) logs(i) = u(rng);
    logs.array() -= logs.mean();
    Matrix shear = Matrix::Identity(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) shear(i, j) = u(rng);
    Matrix basis = random_rotation(rng, d) * logs.array().exp().matrix().asDiagonal() * shear;
    basis /= std::pow(std::abs(basis.determinant()), 1.0 / d);
    if (basis.determinant() < 0) basis.col(0) *= -1.0;
    return Lattice(dims, basis);
}

} // namespace latflow::testing
