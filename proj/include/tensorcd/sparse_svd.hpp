#pragma once

#include "errors.hpp"
#include "operator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace tensorcd {

struct SparseSvdOptions {
    std::uint64_t seed = 0;
    double tol = 1e-6;            ///< residual bound relative to the top singular value
    Index max_iterations = 2000;  ///< Lanczos steps before giving up
    Index check_every = 8;
};

namespace detail {

inline double orthogonalize_against(Eigen::Ref<Vector> x, const Matrix& Q, Index ncols) {
    // Two passes of classical Gram-Schmidt keep the basis orthogonal to working precision.
    for (int pass = 0; pass < 2; ++pass) {
        if (ncols == 0) break;
        Vector c = Q.leftCols(ncols).transpose() * x;
        x.noalias() -= Q.leftCols(ncols) * c;
    }
    return x.norm();
}

inline Vector random_orthogonal_unit(const Matrix& Q, Index ncols, Rng& rng) {
    for (int attempt = 0; attempt < 8; ++attempt) {
        Vector x = unit_gaussian_columns(Q.rows(), 1, rng).col(0);
        double nrm = orthogonalize_against(x, Q, ncols);
        if (nrm > 1e-8) return x / nrm;
    }
    return Vector::Zero(Q.rows());
}

}  // namespace detail

/// Top-k singular triplets by Golub-Kahan-Lanczos bidiagonalization with full
/// reorthogonalization. Stops once every retained triplet satisfies
/// |A' u_i - s_i v_i| <= tol * s_1 (A v_i = s_i u_i holds by construction).
inline TruncatedSvd sparse_svd(const LinearOperator& A, Index k, const SparseSvdOptions& opt = {}) {
    const Index m_max_dim = std::min(A.rows, A.cols);
    if (k < 1 || k > m_max_dim) throw ValidationError("sparse_svd needs 1 <= k <= min(rows, cols)");
    const Index cap = std::min(m_max_dim, std::max(opt.max_iterations, k));
    Rng rng(opt.seed);
    Matrix U(A.rows, cap), V(A.cols, cap);
    Vector alpha = Vector::Zero(cap), beta = Vector::Zero(cap + 1);
    V.col(0) = detail::random_orthogonal_unit(V, 0, rng);
    double scale = 0;  // running estimate of |A| to judge breakdowns

    auto solve = [&](Index m, TruncatedSvd& out, double& worst) {
        Matrix B = Matrix::Zero(m, m);
        for (Index j = 0; j < m; ++j) {
            B(j, j) = alpha(j);
            if (j + 1 < m) B(j, j + 1) = beta(j + 1);
        }
        Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
        out.S = svd.singularValues().head(k);
        out.U = U.leftCols(m) * svd.matrixU().leftCols(k);
        out.V = V.leftCols(m) * svd.matrixV().leftCols(k);
        worst = 0;
        for (Index i = 0; i < k; ++i) worst = std::max(worst, std::abs(beta(m) * svd.matrixU()(m - 1, i)));
    };

    TruncatedSvd out;
    for (Index j = 0; j < cap; ++j) {
        Vector u = A.apply(V.col(j));
        if (j > 0) u -= beta(j) * U.col(j - 1);
        double a = detail::orthogonalize_against(u, U, j);
        scale = std::max(scale, a);
        if (a <= 1e-12 * std::max(scale, 1e-300)) {
            U.col(j) = detail::random_orthogonal_unit(U, j, rng);
            alpha(j) = 0;
        } else {
            U.col(j) = u / a;
            alpha(j) = a;
        }
        Vector v = A.apply_transpose(U.col(j));
        v -= alpha(j) * V.col(j);
        double b = detail::orthogonalize_against(v, V, j + 1);
        scale = std::max(scale, b);
        const bool last = (j + 1 == cap);
        if (!last) {
            if (b <= 1e-12 * std::max(scale, 1e-300)) {
                V.col(j + 1) = detail::random_orthogonal_unit(V, j + 1, rng);
                beta(j + 1) = 0;
            } else {
                V.col(j + 1) = v / b;
                beta(j + 1) = b;
            }
        } else {
            beta(j + 1) = (j + 1 == m_max_dim) ? 0.0 : b;
        }
        const Index m = j + 1;
        if (m >= k && (m % opt.check_every == 0 || last)) {
            double worst = 0;
            solve(m, out, worst);
            if (worst <= opt.tol * std::max(out.S(0), 1e-300) || m == m_max_dim) break;
            if (last) throw ConvergenceError("Lanczos SVD did not converge", worst);
        }
    }
    // Explicit residuals of the returned triplets.
    Matrix R1 = A.apply(out.V) - out.U * out.S.asDiagonal();
    Matrix R2 = A.apply_transpose(out.U) - out.V * out.S.asDiagonal();
    out.max_residual = std::max(R1.colwise().norm().maxCoeff(), R2.colwise().norm().maxCoeff());
    return out;
}

}  // namespace tensorcd
