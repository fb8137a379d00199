#include "latflow/exterior.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <mutex>

namespace latflow {

namespace {

constexpr int kMaxDim = 16;

std::vector<int> members(std::uint32_t mask) {
    std::vector<int> out;
    for (int k = 0; mask; ++k, mask >>= 1) {
        if (mask & 1u) out.push_back(k);
    }
    return out;
}

// Sign of the permutation (I, I^c) written out as a sequence.
int complement_sign(int d, std::uint32_t mask) {
    int inversions = 0;
    int pos = 0;
    for (int k = 0; k < d; ++k) {
        if (mask & (1u << k)) {
            inversions += k - pos;
            ++pos;
        }
    }
    return (inversions % 2) ? -1 : 1;
}

} // namespace

std::int64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::int64_t r = 1;
    for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
    return r;
}

const std::vector<std::uint32_t>& subsets(int d, int grade) {
    if (d < 1 || d > kMaxDim || grade < 0 || grade > d) {
        throw ValidationError("subsets: grade/dimension out of range");
    }
    static std::mutex mu;
    static std::array<std::array<std::vector<std::uint32_t>, kMaxDim + 1>, kMaxDim + 1> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[d][grade];
    if (slot.empty()) {
        for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
            if (std::popcount(mask) == grade) slot.push_back(mask);
        }
    }
    return slot;
}

int subset_rank(int d, std::uint32_t mask) {
    // Colexicographic rank: sum over members c_k (k-th smallest, 1-based k) of C(c_k, k).
    int rank = 0;
    int k = 1;
    for (int c = 0; c < d; ++c) {
        if (mask & (1u << c)) {
            rank += static_cast<int>(binomial(c, k));
            ++k;
        }
    }
    return rank;
}

MultiVector::MultiVector(int d, int grade)
    : d_(d), grade_(grade), coeffs_(Vector::Zero(binomial(d, grade))) {
    if (grade < 0 || grade > d) throw ValidationError("multivector grade out of range");
}

MultiVector::MultiVector(int d, int grade, Vector coeffs) : d_(d), grade_(grade), coeffs_(std::move(coeffs)) {
    if (grade < 0 || grade > d) throw ValidationError("multivector grade out of range");
    if (coeffs_.size() != binomial(d, grade)) {
        throw ValidationError("multivector coefficient count must be C(d, grade)");
    }
}

MultiVector MultiVector::basis_element(int d, std::uint32_t mask) {
    MultiVector v(d, std::popcount(mask));
    v.coeffs_(subset_rank(d, mask)) = 1.0;
    return v;
}

double MultiVector::coeff(std::uint32_t mask) const {
    if (std::popcount(mask) != grade_) return 0.0;
    return coeffs_(subset_rank(d_, mask));
}

MultiVector MultiVector::operator+(const MultiVector& o) const {
    if (o.d_ != d_ || o.grade_ != grade_) throw ValidationError("multivector grade mismatch");
    return MultiVector(d_, grade_, coeffs_ + o.coeffs_);
}

MultiVector MultiVector::operator-(const MultiVector& o) const {
    if (o.d_ != d_ || o.grade_ != grade_) throw ValidationError("multivector grade mismatch");
    return MultiVector(d_, grade_, coeffs_ - o.coeffs_);
}

MultiVector MultiVector::operator*(double s) const {
    return MultiVector(d_, grade_, coeffs_ * s);
}

nlohmann::json MultiVector::to_json() const {
    std::vector<double> c(coeffs_.data(), coeffs_.data() + coeffs_.size());
    return {{"d", d_}, {"grade", grade_}, {"coeffs", c}};
}

MultiVector MultiVector::from_json(const nlohmann::json& j) {
    const auto c = j.at("coeffs").get<std::vector<double>>();
    return MultiVector(j.at("d").get<int>(), j.at("grade").get<int>(),
                       Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size())));
}

MultiVector wedge(const Matrix& factors) {
    const int d = static_cast<int>(factors.rows());
    const int i = static_cast<int>(factors.cols());
    if (i < 1 || i > d) throw ValidationError("wedge needs between 1 and d vectors");
    const auto& idx = subsets(d, i);
    MultiVector out(d, i);
    Matrix minor(i, i);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto rows = members(idx[k]);
        for (int r = 0; r < i; ++r) minor.row(r) = factors.row(rows[r]);
        out.coeffs()(static_cast<Eigen::Index>(k)) = minor.determinant();
    }
    return out;
}

Matrix induced_matrix(const Matrix& g, int grade) {
    const int d = static_cast<int>(g.rows());
    if (g.cols() != d) throw ValidationError("induced_matrix: g must be square");
    const auto& idx = subsets(d, grade);
    const auto size = static_cast<Eigen::Index>(idx.size());
    Matrix out(size, size);
    if (grade == 0) {
        out(0, 0) = 1.0;
        return out;
    }
    Matrix minor(grade, grade);
    std::vector<std::vector<int>> mem;
    mem.reserve(idx.size());
    for (auto mask : idx) mem.push_back(members(mask));
    for (Eigen::Index a = 0; a < size; ++a) {
        for (Eigen::Index b = 0; b < size; ++b) {
            for (int r = 0; r < grade; ++r) {
                for (int c = 0; c < grade; ++c) minor(r, c) = g(mem[a][r], mem[b][c]);
            }
            out(a, b) = minor.determinant();
        }
    }
    return out;
}

MultiVector induced_action(const Matrix& g, const MultiVector& v) {
    if (g.rows() != v.d()) throw ValidationError("induced_action: dimension mismatch");
    return MultiVector(v.d(), v.grade(), induced_matrix(g, v.grade()) * v.coeffs());
}

MultiVector hodge_star(const MultiVector& v) {
    const int d = v.d();
    const std::uint32_t full = (d == 32) ? ~0u : ((1u << d) - 1u);
    const auto& idx = subsets(d, v.grade());
    MultiVector out(d, d - v.grade());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const std::uint32_t comp = full & ~idx[k];
        out.coeffs()(subset_rank(d, comp)) = complement_sign(d, idx[k]) * v.coeffs()(static_cast<Eigen::Index>(k));
    }
    return out;
}

MultiVector unstable_projection(const Dimensions& dims, const MultiVector& v) {
    if (v.d() != dims.d()) throw ValidationError("unstable_projection: dimension mismatch");
    const std::uint32_t unstable = (1u << dims.m()) - 1u;
    const auto& idx = subsets(v.d(), v.grade());
    MultiVector out = v;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] & ~unstable) out.coeffs()(static_cast<Eigen::Index>(k)) = 0.0;
    }
    return out;
}

Decomposable::Decomposable(Matrix factors) : factors_(std::move(factors)) {
    if (factors_.cols() < 1 || factors_.cols() > factors_.rows()) {
        throw ValidationError("decomposable multivector needs between 1 and d factors");
    }
}

double Decomposable::norm() const { return wedge_norm(factors_); }

Decomposable Decomposable::scaled(double lambda) const {
    Matrix f = factors_;
    f.col(0) *= lambda;
    return Decomposable(std::move(f));
}

double wedge_norm(const Matrix& factors) {
    if (factors.cols() == 1) return factors.col(0).norm();
    // |prod diag(R)| avoids squaring through the Gram matrix.
    const Eigen::HouseholderQR<Matrix> qr(factors);
    double prod = 1.0;
    for (Eigen::Index k = 0; k < factors.cols(); ++k) prod *= qr.matrixQR()(k, k);
    return std::abs(prod);
}

} // namespace latflow
