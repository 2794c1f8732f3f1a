#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tensorcd {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
using SparseCols = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Rng = std::mt19937_64;

/// Standard normal matrix with every column scaled to unit norm.
inline Matrix unit_gaussian_columns(Index rows, Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix S(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) S(i, j) = normal(rng);
        double nrm = S.col(j).norm();
        if (nrm > 0) S.col(j) /= nrm;
    }
    return S;
}

/// Thin orthonormal basis of the column space of A (Householder QR).
inline Matrix orthonormal_basis(const Matrix& A) {
    Eigen::HouseholderQR<Matrix> qr(A);
    return qr.householderQ() * Matrix::Identity(A.rows(), std::min(A.rows(), A.cols()));
}

/// Flips each column so that its largest-magnitude entry is positive.
inline void canonical_column_signs(Matrix& M) {
    for (Index j = 0; j < M.cols(); ++j) {
        Index at = 0;
        M.col(j).cwiseAbs().maxCoeff(&at);
        if (M(at, j) < 0) M.col(j) = -M.col(j);
    }
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
struct SortedEigen {
    Vector values;
    Matrix vectors;
};

inline SortedEigen sorted_symmetric_eigen(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
    const Index n = S.rows();
    SortedEigen out{Vector(n), Matrix(n, n)};
    for (Index i = 0; i < n; ++i) {
        out.values(i) = es.eigenvalues()(n - 1 - i);
        out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return out;
}

/// Rows of a CSR matrix selected in order.
inline SparseRows select_rows(const SparseRows& G, const std::vector<Index>& rows) {
    SparseRows out(static_cast<Index>(rows.size()), G.cols());
    std::vector<Eigen::Triplet<double, int>> trips;
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (SparseRows::InnerIterator it(G, rows[r]); it; ++it)
            trips.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

/// Submatrix G[rows, cols] in CSR form. Cost is linear in the nonzeros of the selected rows.
inline SparseRows extract_block(const SparseRows& G, const std::vector<Index>& rows, const std::vector<Index>& cols) {
    std::vector<int> where(static_cast<std::size_t>(G.cols()), -1);
    for (std::size_t c = 0; c < cols.size(); ++c) where[static_cast<std::size_t>(cols[c])] = static_cast<int>(c);
    std::vector<Eigen::Triplet<double, int>> trips;
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (SparseRows::InnerIterator it(G, rows[r]); it; ++it) {
            int c = where[static_cast<std::size_t>(it.col())];
            if (c >= 0) trips.emplace_back(static_cast<int>(r), c, it.value());
        }
    SparseRows out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

}  // namespace tensorcd
