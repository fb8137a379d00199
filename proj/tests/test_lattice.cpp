#include "latflow/lattice.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

using namespace latflow;
using latflow::testing::rel_err;

TEST_CASE("dimensions reject non-positive sizes") {
    CHECK_THROWS_AS(Dimensions(0, 1), ValidationError);
    CHECK_THROWS_AS(Dimensions(1, -2), ValidationError);
    CHECK(Dimensions(2, 3).d() == 5);
}

TEST_CASE("diagonal flow entries") {
    const Matrix g = diagonal_flow(Dimensions(1, 1), 1.0);
    CHECK(g(0, 0) == doctest::Approx(std::exp(1.0)));
    CHECK(g(1, 1) == doctest::Approx(std::exp(-1.0)));
    CHECK(g(0, 1) == 0.0);

    const Matrix h = diagonal_flow(Dimensions(2, 1), 0.5);
    CHECK(h(0, 0) == doctest::Approx(std::exp(0.5)));
    CHECK(h(1, 1) == doctest::Approx(std::exp(0.5)));
    CHECK(h(2, 2) == doctest::Approx(std::exp(-1.0)));

    CHECK(diagonal_flow(Dimensions(2, 3), 0.0) == Matrix::Identity(5, 5));
    for (double t : {0.3, 1.0, 4.0}) {
        CHECK(std::abs(diagonal_flow(Dimensions(2, 3), t).determinant() - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(diagonal_flow(Dimensions(1, 1), NAN), ValidationError);
}

TEST_CASE("horospherical elements") {
    const Dimensions dims(1, 1);
    CHECK(horospherical(dims, Matrix::Zero(1, 1)) == Matrix::Identity(2, 2));
    Matrix s(1, 1);
    s << 0.5;
    const Matrix u = horospherical(dims, s);
    CHECK(u(0, 1) == 0.5);
    CHECK(u(1, 0) == 0.0);
    CHECK_THROWS_AS(horospherical(Dimensions(2, 1), Matrix::Zero(1, 2)), ValidationError);
}

TEST_CASE("group laws and expansion by the flow") {
    std::mt19937_64 rng(11);
    for (auto [m, n] : std::vector<std::pair<int, int>>{{1, 1}, {2, 1}, {1, 2}, {2, 3}}) {
        const Dimensions dims(m, n);
        for (int rep = 0; rep < 20; ++rep) {
            const Matrix s1 = testing::random_matrix(rng, m, n);
            const Matrix s2 = testing::random_matrix(rng, m, n);
            CHECK(rel_err(horospherical(dims, s1) * horospherical(dims, s2), horospherical(dims, s1 + s2)) <= 1e-12);
            const double t1 = 0.7, t2 = 1.3;
            CHECK(rel_err(diagonal_flow(dims, t1) * diagonal_flow(dims, t2), diagonal_flow(dims, t1 + t2)) <= 1e-12);
            const double t = 1.1;
            const Matrix conj = diagonal_flow(dims, t) * horospherical(dims, s1) * diagonal_flow(dims, -t);
            CHECK(rel_err(conj, horospherical(dims, std::exp(dims.d() * t) * s1)) <= 1e-10);
        }
    }
}

TEST_CASE("act preserves the determinant and rejects non-unimodular elements") {
    std::mt19937_64 rng(3);
    const Dimensions dims(2, 1);
    const Lattice z = Lattice::standard(dims);
    CHECK(act(Matrix::Identity(3, 3), z).basis() == z.basis());
    for (int rep = 0; rep < 100; ++rep) {
        Matrix g = testing::random_matrix(rng, 3, 3);
        g /= std::cbrt(g.determinant());
        const Lattice x = testing::random_lattice(rng, dims);
        const Lattice y = act(g, x);
        CHECK(std::abs(y.basis().determinant() - x.basis().determinant()) <= 1e-8);
    }
    CHECK_THROWS_AS(act(2.0 * Matrix::Identity(3, 3), z), ValidationError);
}

TEST_CASE("g_1 u_{1/2} Z^2 contains (0, 2/e)") {
    const Dimensions dims(1, 1);
    Matrix s(1, 1);
    s << 0.5;
    const Lattice x = act(diagonal_flow(dims, 1.0) * horospherical(dims, s), Lattice::standard(dims));
    Vector c(2);
    c << -1, 2;
    const Vector v = x.basis() * c;
    CHECK(std::abs(v(0)) <= 1e-15);
    CHECK(v(1) == doctest::Approx(2.0 * std::exp(-1.0)));
}

TEST_CASE("phi composition") {
    const Dimensions dims(1, 2);
    std::mt19937_64 rng(5);
    const Matrix s1 = testing::random_matrix(rng, 1, 2);
    const Matrix s2 = testing::random_matrix(rng, 1, 2);
    std::vector<Matrix> one{s1};
    CHECK(phi_compose(dims, 1.0, one) == s1);
    std::vector<Matrix> two{s1, s2};
    CHECK(rel_err(phi_compose(dims, 0.4, two), s1 + std::exp(-3 * 0.4) * s2) <= 1e-15);
    CHECK_THROWS_AS(phi_compose(dims, 1.0, std::vector<Matrix>{}), ValidationError);

    // Matrix-product oracle: g_t u_{s_N} ... g_t u_{s_1} = g_{Nt} u_phi.
    const double t = 1.0;
    std::vector<Matrix> three{testing::random_matrix(rng, 1, 2), testing::random_matrix(rng, 1, 2),
                              testing::random_matrix(rng, 1, 2)};
    Matrix prod = Matrix::Identity(3, 3);
    for (const auto& sk : three) prod = diagonal_flow(dims, t) * horospherical(dims, sk) * prod;
    const Matrix rhs = diagonal_flow(dims, 3 * t) * horospherical(dims, phi_compose(dims, t, three));
    CHECK(rel_err(prod, rhs) <= 1e-10);
}

TEST_CASE("wedge operator norms") {
    for (int j = 1; j < 5; ++j) CHECK(wedge_operator_norm(Dimensions(2, 3), 0.0, j) == 1.0);
    CHECK(wedge_operator_norm(Dimensions(1, 1), 1.0, 1) == doctest::Approx(std::exp(1.0)));
    CHECK(wedge_operator_norm_max(Dimensions(2, 1), 1.0) == doctest::Approx(std::exp(2.0)));
    CHECK_THROWS_AS(wedge_operator_norm(Dimensions(2, 1), 1.0, 3), ValidationError);
    CHECK_THROWS_AS(wedge_operator_norm(Dimensions(2, 1), 1.0, 0), ValidationError);

    // Singular-value oracle: product of the j largest singular values.
    const Dimensions dims(2, 3);
    const double t = 0.8;
    Eigen::JacobiSVD<Matrix> svd(diagonal_flow(dims, t));
    const Vector sv = svd.singularValues();
    double prod = 1.0;
    for (int j = 1; j < dims.d(); ++j) {
        prod *= sv(j - 1);
        CHECK(rel_err(wedge_operator_norm(dims, t, j), prod) <= 1e-12);
    }
}

TEST_CASE("lattice file round trip and validation") {
    std::istringstream good("1 1\n2 0\n0 0.5\n");
    const Lattice x = read_lattice(good);
    CHECK(x.basis()(0, 0) == 2.0);
    CHECK(x.basis()(1, 1) == 0.5);
    std::ostringstream out;
    write_lattice(out, x);
    std::istringstream back(out.str());
    CHECK(read_lattice(back).basis() == x.basis());

    std::istringstream bad("1 1\n2 0\n0 1\n");
    CHECK_THROWS_AS(read_lattice(bad), ValidationError);
    std::istringstream truncated("2 1\n1 0 0\n0 1 0\n");
    CHECK_THROWS_AS(read_lattice(truncated), ValidationError);
}

TEST_CASE("exact integer basis path") {
    Matrix b(2, 2);
    b << 0.5, 1.0 / 3.0, 0.0, 2.0;
    const Lattice x(Dimensions(1, 1), b);
    const auto exact = x.exact_basis();
    REQUIRE(exact.has_value());
    CHECK(exact->denominator == 6);
    CHECK(exact->numerators(0, 0) == 3);
    CHECK(exact->numerators(0, 1) == 2);
    CHECK(exact->numerators(1, 1) == 12);

    std::mt19937_64 rng(1);
    CHECK_FALSE(testing::random_lattice(rng, Dimensions(1, 1)).exact_basis(1000).has_value());
}
