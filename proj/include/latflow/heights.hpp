#pragma once

#include "latflow/lattice.hpp"
#include "latflow/reduction.hpp"

#include <nlohmann/json.hpp>

#include <utility>
#include <vector>

namespace latflow {

/// beta_1..beta_{d-1}: m/i for i <= m, n/(m+n-i) otherwise.
std::vector<double> beta_exponents(const Dimensions& dims);

/// beta(0..d) with beta(i) = 1/beta_i and zero at both ends.
std::vector<double> beta_profile(const Dimensions& dims);

/// gamma_k^{k/2} for k <= 8 (Hermite constants): the Minkowski second
/// theorem bound prod lambda_i <= gamma_d^{d/2} for covolume one.
double minkowski_product_bound(int k);

struct SuccessiveMinima {
    std::vector<double> lambda;
    Matrix vectors;  // column k realizes lambda[k]
    IntMatrix coords; // integer coordinates relative to the input basis
};

/// lambda_1..lambda_count (count defaults to d) by LLL plus enumeration.
SuccessiveMinima minkowski_minima(const Lattice& x, int count = -1, const EnumerationBudget& budget = {});

struct AlphaResult {
    double value;
    Matrix witness;         // basis vectors of the minimizing sublattice (columns)
    IntMatrix witness_coords; // same, in coordinates of x.basis()
};

/// alpha_i(x) = max over rank-i subgroups L of 1/covol(L); alpha_0 = alpha_d = 1.
AlphaResult alpha(const Lattice& x, int i, const EnumerationBudget& budget = {});

struct AlphaProfile {
    std::vector<double> values; // alpha_0..alpha_d
    std::vector<Matrix> witnesses;
};

AlphaProfile alpha_profile(const Lattice& x, const EnumerationBudget& budget = {});

/// max_i alpha_i(x)^{beta_i}.
double c_of_x(const Dimensions& dims, const AlphaProfile& profile);
double c_of_x(const Lattice& x);

/// Output of the composite height construction for a concave profile beta.
struct HeightFunction {
    int d = 0;
    std::vector<double> beta;          // beta(0..d)
    std::vector<double> exponents;     // 1/beta(i) for 0<i<d; 0 at the ends (those terms are the constant 1)
    std::vector<std::pair<int, int>> psi;
    std::vector<std::pair<int, int>> phi;
    double b = 0.0;
    std::vector<int> strict;           // indices where beta is strictly concave; contains 0 and d
    std::vector<int> dminus;
    std::vector<int> dplus;
    int epsilon_log2 = 0;              // epsilon = 2^{-epsilon_log2}
    double epsilon = 0.0;
    std::vector<double> weights;       // omega_i = epsilon^{dminus(i) dplus(i)}
    double a = 0.0;
    double a_prime = 0.0;
    double omega = 1.0;
    double C0 = 1.0;

    nlohmann::json to_json() const;
    static HeightFunction from_json(const nlohmann::json& j);
};

/// Deterministic construction: Psi, Phi, b, the strict-concavity set, d+-,
/// epsilon as the largest power of 1/2 with
///   sum_{(i,j) in Psi} omega^{2 beta_i} epsilon^{beta_i j^2} < (a' - a)/2,
/// the weights, and an additive constant C0 for A f <= a' f + C0.
HeightFunction build_height(const std::vector<double>& beta, double a, double a_prime, double omega);

/// The height with the (m, n) exponents, a = c0 t e^{-mnt}, a' = 2a and omega
/// the largest exterior-power norm of g_t.
HeightFunction default_height(const Dimensions& dims, double t, double c0 = 1.0);

/// sum_i (omega_i alpha_i)^{beta_i}, the end terms contributing 1 each.
double tilde_alpha(const AlphaProfile& profile, const HeightFunction& h);
double tilde_alpha(const Lattice& x, const HeightFunction& h);

} // namespace latflow
